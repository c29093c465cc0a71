#pragma once

#include "zeroreg/bootstrap.hpp"
#include "zeroreg/config.hpp"
#include "zeroreg/descriptor.hpp"
#include "zeroreg/error.hpp"
#include "zeroreg/io.hpp"
#include "zeroreg/kdtree.hpp"
#include "zeroreg/matching.hpp"
#include "zeroreg/parallel.hpp"
#include "zeroreg/pipeline.hpp"
#include "zeroreg/rng.hpp"
#include "zeroreg/rotation.hpp"
#include "zeroreg/sampling.hpp"
#include "zeroreg/solver.hpp"
#include "zeroreg/synth.hpp"
#include "zeroreg/types.hpp"
