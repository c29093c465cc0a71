#pragma once

#include "zeroreg/config.hpp"
#include "zeroreg/descriptor.hpp"
#include "zeroreg/error.hpp"
#include "zeroreg/parallel.hpp"
#include "zeroreg/rotation.hpp"
#include "zeroreg/types.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

namespace zeroreg {

/// Matched point pairs, each carrying its own rigid-transform hypothesis.
struct CorrespondenceSet {
  std::vector<Point3> source;
  std::vector<Point3> target;
  std::vector<RigidTransform> hypotheses;
  std::vector<Scale> scales;

  std::size_t size() const { return source.size(); }
  bool empty() const { return source.empty(); }

  void push_back(const Point3& p, const Point3& q, const RigidTransform& t, Scale s) {
    source.push_back(p);
    target.push_back(q);
    hypotheses.push_back(t);
    scales.push_back(s);
  }

  void append(const CorrespondenceSet& other) {
    source.insert(source.end(), other.source.begin(), other.source.end());
    target.insert(target.end(), other.target.begin(), other.target.end());
    hypotheses.insert(hypotheses.end(), other.hypotheses.begin(), other.hypotheses.end());
    scales.insert(scales.end(), other.scales.begin(), other.scales.end());
  }

  CorrespondenceSet subset(const std::vector<std::uint32_t>& idx) const {
    CorrespondenceSet out;
    for (auto i : idx) out.push_back(source[i], target[i], hypotheses[i], scales[i]);
    return out;
  }
};

using IndexPair = std::pair<std::uint32_t, std::uint32_t>;

/// Pairs (i, j) where F_Q[j] is the nearest neighbor of F_P[i] and vice versa
/// under squared Euclidean distance. Ties go to the lowest index. Output is
/// ordered by i.
inline std::vector<IndexPair> mutual_match(const std::vector<FeatureVector>& fp, const std::vector<FeatureVector>& fq,
                                           int threads = 1) {
  std::vector<IndexPair> out;
  if (fp.empty() || fq.empty()) return out;
  const Eigen::Index n = static_cast<Eigen::Index>(fp.size()), m = static_cast<Eigen::Index>(fq.size());
  const Eigen::Index dim = fp.front().size();
  for (const auto& f : fp)
    if (f.size() != dim) throw Error(ErrorKind::kInvalidArgument, "feature dimensions differ");
  for (const auto& f : fq)
    if (f.size() != dim) throw Error(ErrorKind::kInvalidArgument, "feature dimensions differ");

  // |a - b|^2 = |a|^2 + |b|^2 - 2 a.b, with the dot products as one product.
  Eigen::MatrixXd a(dim, n), b(dim, m);
  for (Eigen::Index i = 0; i < n; ++i) a.col(i) = fp[i];
  for (Eigen::Index j = 0; j < m; ++j) b.col(j) = fq[j];
  const Eigen::VectorXd na = a.colwise().squaredNorm().transpose();
  const Eigen::VectorXd nb = b.colwise().squaredNorm().transpose();
  Eigen::MatrixXd dist(n, m);
  const std::size_t blocks = static_cast<std::size_t>((n + 63) / 64);
  parallel_for(blocks, threads, [&](std::size_t blk) {
    const Eigen::Index r0 = static_cast<Eigen::Index>(blk) * 64, rows = std::min<Eigen::Index>(64, n - r0);
    dist.middleRows(r0, rows).noalias() = -2.0 * a.middleCols(r0, rows).transpose() * b;
    dist.middleRows(r0, rows).colwise() += na.segment(r0, rows);
    dist.middleRows(r0, rows).rowwise() += nb.transpose();
  });

  std::vector<std::uint32_t> nn_p(n), nn_q(m);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < m; ++j)
      if (dist(i, j) < dist(i, best)) best = j;
    nn_p[i] = static_cast<std::uint32_t>(best);
  }
  for (Eigen::Index j = 0; j < m; ++j) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < n; ++i)
      if (dist(i, j) < dist(best, j)) best = i;
    nn_q[j] = static_cast<std::uint32_t>(best);
  }
  for (Eigen::Index i = 0; i < n; ++i)
    if (nn_q[nn_p[i]] == static_cast<std::uint32_t>(i)) out.emplace_back(static_cast<std::uint32_t>(i), nn_p[i]);
  return out;
}

/// Circular cross-correlation score for every sector shift:
/// beta[s] = sum_{h, w, d} cp[h, w, d] * cq[h, (w + s) mod W, d].
inline std::vector<double> yaw_scores(const CylindricalMap& cp, const CylindricalMap& cq) {
  if (cp.height() != cq.height() || cp.sectors() != cq.sectors() || cp.channels() != cq.channels()) {
    throw Error(ErrorKind::kInvalidArgument, "cylindrical map shapes differ");
  }
  const int H = cp.height(), W = cp.sectors(), D = cp.channels();
  std::vector<double> beta(W, 0.0);
  for (int s = 0; s < W; ++s) {
    double acc = 0.0;
    for (int h = 0; h < H; ++h)
      for (int w = 0; w < W; ++w) {
        const double* a = &cp.data()[(static_cast<std::size_t>(h) * W + w) * D];
        const double* b = &cq.data()[(static_cast<std::size_t>(h) * W + (w + s) % W) * D];
        for (int d = 0; d < D; ++d) acc += a[d] * b[d];
      }
    beta[s] = acc;
  }
  return beta;
}

/// Sub-sector offset d in [0, W) from correlation scores.
///   parabolic: vertex of the parabola through the peak and its two neighbors
///   window:    softmax expectation over +-2 sectors around the peak, unwrapped
///   literal:   softmax expectation over all sector indices 0..W-1
/// The softmax temperature is 0.1 * std(beta), floored at 1e-6.
inline double yaw_offset_from_scores(const std::vector<double>& beta, YawMode mode = YawMode::kParabolic) {
  const int W = static_cast<int>(beta.size());
  if (W < 2) throw Error(ErrorKind::kInvalidArgument, "need at least two sectors");
  double mean = 0.0, peak = -std::numeric_limits<double>::infinity(), scale = 0.0;
  int arg = 0;
  for (int s = 0; s < W; ++s) {
    mean += beta[s];
    scale = std::max(scale, std::abs(beta[s]));
    if (beta[s] > peak) {
      peak = beta[s];
      arg = s;
    }
  }
  mean /= W;
  double var = 0.0;
  for (double b : beta) var += (b - mean) * (b - mean);
  const double stddev = std::sqrt(var / W);
  if (!(scale > 0.0) || stddev <= 1e-12 * scale) {
    throw Error(ErrorKind::kDegenerate, "correlation has no discriminative peak");
  }
  const double temperature = std::max(0.1 * stddev, 1e-6);
  auto weight = [&](int s) { return std::exp((beta[((s % W) + W) % W] - peak) / temperature); };

  double num = 0.0, den = 0.0;
  if (mode == YawMode::kParabolic) {
    // Vertex of the parabola through the peak and its two neighbors.
    const double l = beta[(arg + W - 1) % W], c = beta[arg], r = beta[(arg + 1) % W];
    const double curvature = l - 2.0 * c + r;
    const double off = curvature < 0.0 ? std::clamp(0.5 * (l - r) / curvature, -0.5, 0.5) : 0.0;
    double d = arg + off;
    d -= W * std::floor(d / W);
    if (d >= W) d -= W;
    return d;
  }
  if (mode == YawMode::kLiteral) {
    for (int s = 0; s < W; ++s) {
      num += weight(s) * s;
      den += weight(s);
    }
  } else {
    const int half = std::min(2, (W - 1) / 2);
    for (int j = -half; j <= half; ++j) {
      num += weight(arg + j) * (arg + j);
      den += weight(arg + j);
    }
  }
  double d = num / den;
  d -= W * std::floor(d / W);
  if (d >= W) d -= W;
  return d;
}

inline double estimate_yaw_offset(const CylindricalMap& cp, const CylindricalMap& cq,
                                  YawMode mode = YawMode::kParabolic) {
  return yaw_offset_from_scores(yaw_scores(cp, cq), mode);
}

/// R = R_q^T * Rz(2*pi*d/W) * R_p, t = q - R p.
inline RigidTransform pairwise_transform(const Point3& p, const Point3& q, const Mat3& frame_p, const Mat3& frame_q,
                                         double offset, int sectors) {
  RigidTransform t;
  t.rotation = frame_q.transpose() * yaw_rotation(offset, sectors) * frame_p;
  t.translation = q - t.rotation * p;
  return t;
}

struct ScaleMatchStats {
  std::size_t mutual_matches = 0;
  std::size_t degenerate_yaw = 0;
};

/// Mutual matching followed by one transform hypothesis per surviving pair.
/// Pairs whose yaw correlation is degenerate are dropped.
inline CorrespondenceSet match_scale(const DescriptorSet& sp, const DescriptorSet& sq, const PipelineConfig& cfg,
                                     ScaleMatchStats* stats = nullptr) {
  const auto pairs = mutual_match(sp.features, sq.features, cfg.threads);
  std::vector<std::optional<RigidTransform>> hyp(pairs.size());
  parallel_for(pairs.size(), cfg.threads, [&](std::size_t k) {
    const auto [i, j] = pairs[k];
    try {
      const double d = estimate_yaw_offset(sp.maps[i], sq.maps[j], cfg.yaw_mode);
      hyp[k] = pairwise_transform(sp.keypoints[i], sq.keypoints[j], sp.frames[i], sq.frames[j], d, cfg.w);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kDegenerate) throw;
    }
  });
  CorrespondenceSet out;
  std::size_t degenerate = 0;
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    if (!hyp[k]) {
      ++degenerate;
      continue;
    }
    out.push_back(sp.keypoints[pairs[k].first], sq.keypoints[pairs[k].second], *hyp[k], sp.scale);
  }
  if (stats) {
    stats->mutual_matches = pairs.size();
    stats->degenerate_yaw = degenerate;
  }
  return out;
}

}  // namespace zeroreg
