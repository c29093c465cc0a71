#pragma once

// Robust pose estimation over correspondence sets.

#include "zeroreg/config.hpp"
#include "zeroreg/error.hpp"
#include "zeroreg/matching.hpp"
#include "zeroreg/parallel.hpp"
#include "zeroreg/rng.hpp"
#include "zeroreg/rotation.hpp"
#include "zeroreg/types.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

namespace zeroreg {

struct SolverReport {
  RigidTransform transform;
  std::vector<std::uint32_t> inliers;
  std::size_t iterations = 0;
  double wall_ms = 0.0;
  bool converged = true;

  std::size_t inlier_count() const { return inliers.size(); }
};

namespace detail {

inline double elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

}  // namespace detail

/// Indices with ||R p + t - q|| < eps (strict).
inline std::vector<std::uint32_t> count_inliers(const CorrespondenceSet& pairs, const RigidTransform& t, double eps) {
  if (!(eps > 0.0)) throw Error(ErrorKind::kInvalidArgument, "inlier threshold must be > 0");
  std::vector<std::uint32_t> out;
  const double eps2 = eps * eps;
  for (std::size_t n = 0; n < pairs.size(); ++n) {
    if ((t * pairs.source[n] - pairs.target[n]).squaredNorm() < eps2) out.push_back(static_cast<std::uint32_t>(n));
  }
  return out;
}

struct ConsensusResult {
  std::size_t best_index = 0;
  RigidTransform transform;
  std::vector<std::uint32_t> inliers;
  double mean_residual = 0.0;
};

/// Picks the hypothesis with the most inliers among all pairs. Ties go to the
/// smaller mean inlier residual, then to the lower index.
inline ConsensusResult consensus_maximize(const CorrespondenceSet& pairs, const std::vector<RigidTransform>& hypotheses,
                                          double eps, int threads = 1) {
  if (pairs.empty() || hypotheses.empty()) throw Error(ErrorKind::kNoHypothesis, "consensus over an empty set");
  if (!(eps > 0.0)) throw Error(ErrorKind::kInvalidArgument, "inlier threshold must be > 0");
  const double eps2 = eps * eps;
  std::vector<std::size_t> counts(hypotheses.size());
  std::vector<double> mean_res(hypotheses.size());
  parallel_for(hypotheses.size(), threads, [&](std::size_t k) {
    const RigidTransform& t = hypotheses[k];
    std::size_t c = 0;
    double sum = 0.0;
    for (std::size_t n = 0; n < pairs.size(); ++n) {
      const double r2 = (t * pairs.source[n] - pairs.target[n]).squaredNorm();
      if (r2 < eps2) {
        ++c;
        sum += std::sqrt(r2);
      }
    }
    counts[k] = c;
    mean_res[k] = c ? sum / static_cast<double>(c) : std::numeric_limits<double>::infinity();
  });

  std::size_t best = 0;
  for (std::size_t k = 1; k < hypotheses.size(); ++k) {
    if (counts[k] > counts[best] || (counts[k] == counts[best] && mean_res[k] < mean_res[best])) best = k;
  }
  ConsensusResult out;
  out.best_index = best;
  out.transform = hypotheses[best];
  out.inliers = count_inliers(pairs, hypotheses[best], eps);
  out.mean_residual = mean_res[best];
  return out;
}

inline ConsensusResult consensus_maximize(const CorrespondenceSet& pairs, double eps, int threads = 1) {
  return consensus_maximize(pairs, pairs.hypotheses, eps, threads);
}

/// Closed-form minimizer of sum w_n ||R p_n + t - q_n||^2 over proper rigid
/// transforms (SVD with determinant correction).
inline RigidTransform kabsch_weighted(const std::vector<Point3>& src, const std::vector<Point3>& dst,
                                      const std::vector<double>& weights) {
  if (src.size() != dst.size() || src.size() != weights.size()) {
    throw Error(ErrorKind::kInvalidArgument, "kabsch inputs differ in length");
  }
  double total = 0.0;
  std::size_t positive = 0;
  Eigen::Vector3d cs = Eigen::Vector3d::Zero(), cd = Eigen::Vector3d::Zero();
  for (std::size_t n = 0; n < src.size(); ++n) {
    if (weights[n] < 0.0 || !std::isfinite(weights[n])) throw Error(ErrorKind::kInvalidArgument, "negative weight");
    if (weights[n] == 0.0) continue;
    ++positive;
    total += weights[n];
    cs += weights[n] * src[n];
    cd += weights[n] * dst[n];
  }
  if (positive < 3 || !(total > 0.0)) throw Error(ErrorKind::kDegenerate, "alignment needs 3 weighted pairs");
  cs /= total;
  cd /= total;

  Mat3 h = Mat3::Zero();
  Mat3 cov_src = Mat3::Zero();
  for (std::size_t n = 0; n < src.size(); ++n) {
    if (weights[n] == 0.0) continue;
    const Eigen::Vector3d a = src[n] - cs;
    const Eigen::Vector3d b = dst[n] - cd;
    h.noalias() += weights[n] * a * b.transpose();
    cov_src.noalias() += weights[n] * a * a.transpose();
  }
  const Eigen::Vector3d ev = Eigen::SelfAdjointEigenSolver<Mat3>(cov_src, Eigen::EigenvaluesOnly).eigenvalues();
  if (!(ev[2] > 0.0) || ev[1] <= 1e-12 * ev[2]) {
    throw Error(ErrorKind::kDegenerate, "collinear source points");
  }

  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Mat3 u = svd.matrixU(), v = svd.matrixV();
  Eigen::Vector3d s = Eigen::Vector3d::Ones();
  s[2] = (v * u.transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  RigidTransform t;
  t.rotation = v * s.asDiagonal() * u.transpose();
  t.translation = cd - t.rotation * cs;
  return t;
}

inline RigidTransform kabsch_weighted(const CorrespondenceSet& pairs, const std::vector<double>& weights) {
  return kabsch_weighted(pairs.source, pairs.target, weights);
}

inline RigidTransform kabsch(const CorrespondenceSet& pairs) {
  return kabsch_weighted(pairs.source, pairs.target, std::vector<double>(pairs.size(), 1.0));
}

/// Least squares over the subset `idx` with uniform weights.
inline RigidTransform kabsch_subset(const CorrespondenceSet& pairs, const std::vector<std::uint32_t>& idx) {
  std::vector<double> w(pairs.size(), 0.0);
  for (auto i : idx) w[i] = 1.0;
  return kabsch_weighted(pairs, w);
}

struct RansacOptions {
  double inlier_threshold = 0.1;
  int max_iterations = 50000;
  double confidence = 0.999;
  std::uint64_t seed = 0;
};

/// Hypothesize-and-verify from 3-pair samples. Adaptive stopping at
/// `confidence`, capped at `max_iterations`; the best model is refit on its
/// inliers until the inlier set stops growing.
inline SolverReport ransac(const CorrespondenceSet& pairs, const RansacOptions& opt) {
  const auto start = std::chrono::steady_clock::now();
  const std::size_t n = pairs.size();
  if (n < 3) throw Error(ErrorKind::kInsufficientData, "RANSAC needs at least 3 correspondences");
  if (!(opt.inlier_threshold > 0.0)) throw Error(ErrorKind::kInvalidArgument, "inlier threshold must be > 0");

  Eigen::Vector3d lo = pairs.source[0], hi = pairs.source[0];
  for (const auto& p : pairs.source) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const double min_height = 1e-6 * std::max((hi - lo).norm(), 1e-12);
  const double eps2 = opt.inlier_threshold * opt.inlier_threshold;

  Rng rng(opt.seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::size_t best_count = 0;
  RigidTransform best;
  bool have_model = false;
  std::size_t iter = 0;
  double needed = static_cast<double>(opt.max_iterations);
  std::vector<Point3> s(3), d(3);
  const std::vector<double> unit(3, 1.0);

  while (iter < static_cast<std::size_t>(opt.max_iterations) && static_cast<double>(iter) < needed) {
    ++iter;
    std::size_t a = pick(rng), b = pick(rng), c = pick(rng);
    if (a == b || b == c || a == c) continue;
    s = {pairs.source[a], pairs.source[b], pairs.source[c]};
    d = {pairs.target[a], pairs.target[b], pairs.target[c]};
    // Smallest triangle height = 2 * area / longest side.
    const double area2 = (s[1] - s[0]).cross(s[2] - s[0]).norm();
    const double longest = std::max({(s[1] - s[0]).norm(), (s[2] - s[0]).norm(), (s[2] - s[1]).norm()});
    if (longest <= 0.0 || area2 / longest < min_height) continue;
    RigidTransform model;
    try {
      model = kabsch_weighted(s, d, unit);
    } catch (const Error&) {
      continue;
    }
    std::size_t count = 0;
    for (std::size_t k = 0; k < n; ++k)
      if ((model * pairs.source[k] - pairs.target[k]).squaredNorm() < eps2) ++count;
    if (count > best_count) {
      best_count = count;
      best = model;
      have_model = true;
      const double ratio = static_cast<double>(count) / static_cast<double>(n);
      const double p_all = ratio * ratio * ratio;
      if (opt.confidence >= 1.0) {
        needed = static_cast<double>(opt.max_iterations);
      } else if (p_all >= 1.0) {
        needed = 0.0;
      } else {
        needed = std::log(1.0 - opt.confidence) / std::log(1.0 - p_all);
      }
    }
  }

  SolverReport report;
  report.iterations = iter;
  report.converged = have_model;
  if (!have_model) {
    report.wall_ms = detail::elapsed_ms(start);
    return report;
  }
  report.transform = best;
  report.inliers = count_inliers(pairs, best, opt.inlier_threshold);
  for (int round = 0; round < 10 && report.inliers.size() >= 3; ++round) {
    RigidTransform refit;
    try {
      refit = kabsch_subset(pairs, report.inliers);
    } catch (const Error&) {
      break;
    }
    auto refit_inliers = count_inliers(pairs, refit, opt.inlier_threshold);
    if (refit_inliers.size() < report.inliers.size()) break;
    const bool same = refit_inliers == report.inliers;
    report.transform = refit;
    report.inliers = std::move(refit_inliers);
    if (same) break;
  }
  report.wall_ms = detail::elapsed_ms(start);
  return report;
}

/// Undirected graph on correspondences; an edge joins n and n' when the
/// source and target distances between them agree within 2 * noise_bound.
struct CompatibilityGraph {
  double noise_bound = 0.0;
  std::vector<std::vector<std::uint32_t>> adjacency;

  std::size_t vertex_count() const { return adjacency.size(); }
  std::size_t edge_count() const {
    std::size_t e = 0;
    for (const auto& a : adjacency) e += a.size();
    return e / 2;
  }
};

inline CompatibilityGraph build_compatibility_graph(const CorrespondenceSet& pairs, double noise_bound) {
  if (!(noise_bound > 0.0)) throw Error(ErrorKind::kInvalidArgument, "noise bound must be > 0");
  CompatibilityGraph g;
  g.noise_bound = noise_bound;
  const std::size_t n = pairs.size();
  g.adjacency.assign(n, {});
  const double bound = 2.0 * noise_bound;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dp = (pairs.source[i] - pairs.source[j]).norm();
      const double dq = (pairs.target[i] - pairs.target[j]).norm();
      if (std::abs(dq - dp) <= bound) {
        g.adjacency[i].push_back(static_cast<std::uint32_t>(j));
        g.adjacency[j].push_back(static_cast<std::uint32_t>(i));
      }
    }
  }
  return g;
}

/// Core number of every vertex by bucketed min-degree peeling, O(V + E).
inline std::vector<std::uint32_t> core_numbers(const std::vector<std::vector<std::uint32_t>>& adjacency) {
  const std::size_t n = adjacency.size();
  std::vector<std::uint32_t> degree(n);
  std::uint32_t max_degree = 0;
  for (std::size_t v = 0; v < n; ++v) {
    degree[v] = static_cast<std::uint32_t>(adjacency[v].size());
    max_degree = std::max(max_degree, degree[v]);
  }
  // Vertices sorted by degree with bucket starts (Batagelj-Zaversnik).
  std::vector<std::uint32_t> bin(max_degree + 1, 0), pos(n), order(n);
  for (std::size_t v = 0; v < n; ++v) ++bin[degree[v]];
  std::uint32_t start = 0;
  for (auto& b : bin) {
    const std::uint32_t count = b;
    b = start;
    start += count;
  }
  for (std::size_t v = 0; v < n; ++v) {
    pos[v] = bin[degree[v]]++;
    order[pos[v]] = static_cast<std::uint32_t>(v);
  }
  for (std::size_t d = max_degree; d >= 1; --d) bin[d] = bin[d - 1];
  if (!bin.empty()) bin[0] = 0;

  for (std::size_t i = 0; i < n; ++i) {
    const std::uint32_t v = order[i];
    for (auto u : adjacency[v]) {
      if (degree[u] > degree[v]) {
        const std::uint32_t du = degree[u];
        const std::uint32_t pu = pos[u];
        const std::uint32_t pw = bin[du];
        const std::uint32_t w = order[pw];
        if (u != w) {
          order[pu] = w;
          order[pw] = u;
          pos[u] = pw;
          pos[w] = pu;
        }
        ++bin[du];
        --degree[u];
      }
    }
  }
  return degree;
}

/// Vertices of the nonempty k-core with the largest k, ascending.
inline std::vector<std::uint32_t> max_kcore(const CompatibilityGraph& g, std::uint32_t* k_out = nullptr) {
  std::vector<std::uint32_t> out;
  if (g.adjacency.empty()) {
    if (k_out) *k_out = 0;
    return out;
  }
  const auto core = core_numbers(g.adjacency);
  const std::uint32_t k = *std::max_element(core.begin(), core.end());
  for (std::size_t v = 0; v < core.size(); ++v)
    if (core[v] == k) out.push_back(static_cast<std::uint32_t>(v));
  if (k_out) *k_out = k;
  return out;
}

struct GncOptions {
  double noise_bound = 0.1;
  int max_iterations = 100;
  double mu_factor = 1.4;
  double weight_tolerance = 1e-3;
  double cost_tolerance = 1e-9;
};

/// Graduated non-convexity for truncated least squares. Alternates weighted
/// alignment with the closed-form TLS weight update while the control
/// parameter mu grows geometrically; the result is refit on
/// {n : residual_n <= noise_bound}.
inline SolverReport gnc_tls(const CorrespondenceSet& pairs, const GncOptions& opt) {
  const auto start = std::chrono::steady_clock::now();
  const std::size_t n = pairs.size();
  if (n < 3) throw Error(ErrorKind::kInsufficientData, "GNC needs at least 3 correspondences");
  if (!(opt.noise_bound > 0.0)) throw Error(ErrorKind::kInvalidArgument, "noise bound must be > 0");
  const double c2 = opt.noise_bound * opt.noise_bound;

  std::vector<double> weights(n, 1.0);
  std::vector<double> r2(n);
  RigidTransform t = kabsch_weighted(pairs, weights);
  auto update_residuals = [&] {
    double max_r2 = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      r2[k] = (t * pairs.source[k] - pairs.target[k]).squaredNorm();
      max_r2 = std::max(max_r2, r2[k]);
    }
    return max_r2;
  };
  const double max_r2 = update_residuals();

  SolverReport report;
  report.converged = true;
  if (max_r2 > c2) {
    double mu = std::max(c2 / std::max(2.0 * max_r2 - c2, 1e-300), 1e-12);
    double prev_cost = std::numeric_limits<double>::infinity();
    report.converged = false;
    for (int it = 0; it < opt.max_iterations; ++it) {
      ++report.iterations;
      const double upper = (mu + 1.0) / mu * c2;
      const double lower = mu / (mu + 1.0) * c2;
      for (std::size_t k = 0; k < n; ++k) {
        if (r2[k] >= upper) weights[k] = 0.0;
        else if (r2[k] <= lower) weights[k] = 1.0;
        else weights[k] = std::sqrt(c2 * mu * (mu + 1.0) / r2[k]) - mu;
      }
      try {
        t = kabsch_weighted(pairs, weights);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::kDegenerate) throw;
        break;
      }
      update_residuals();
      double cost = 0.0;
      bool binary = true;
      std::size_t ones = 0;
      for (std::size_t k = 0; k < n; ++k) {
        cost += weights[k] * r2[k];
        if (std::min(weights[k], 1.0 - weights[k]) > opt.weight_tolerance) binary = false;
        ones += weights[k] > 0.5;
      }
      // Early on every weight can sit near zero; that is not convergence.
      if ((binary && ones >= 3) || std::abs(cost - prev_cost) < opt.cost_tolerance) {
        report.converged = true;
        break;
      }
      prev_cost = cost;
      mu *= opt.mu_factor;
    }
  }

  auto inliers_of = [&](const RigidTransform& tr) {
    std::vector<std::uint32_t> in;
    for (std::size_t k = 0; k < n; ++k)
      if ((tr * pairs.source[k] - pairs.target[k]).squaredNorm() <= c2) in.push_back(static_cast<std::uint32_t>(k));
    return in;
  };
  report.transform = t;
  report.inliers = inliers_of(t);
  if (report.inliers.size() >= 3 && report.inliers.size() < n) {
    try {
      const RigidTransform refit = kabsch_subset(pairs, report.inliers);
      auto refit_inliers = inliers_of(refit);
      if (refit_inliers.size() >= report.inliers.size()) {
        report.transform = refit;
        report.inliers = std::move(refit_inliers);
      }
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kDegenerate) throw;
    }
  }
  report.wall_ms = detail::elapsed_ms(start);
  return report;
}

/// Deterministic solver: compatibility graph with noise bound beta, maximum
/// k-core pruning, then GNC-TLS on the surviving pairs with the same bound.
/// Inlier indices refer to `pairs`.
inline SolverReport kiss_solver(const CorrespondenceSet& pairs, double noise_bound, int gnc_max_iter = 100,
                                double gnc_mu_factor = 1.4) {
  const auto start = std::chrono::steady_clock::now();
  if (pairs.size() < 3) throw Error(ErrorKind::kInsufficientStructure, "fewer than 3 correspondences");
  const auto graph = build_compatibility_graph(pairs, noise_bound);
  std::uint32_t k = 0;
  const auto core = max_kcore(graph, &k);
  // Three mutually consistent pairs form a triangle, i.e. at least a 2-core.
  if (core.size() < 3 || k < 2) {
    throw Error(ErrorKind::kInsufficientStructure,
                "maximum core has " + std::to_string(core.size()) + " vertices at k=" + std::to_string(k));
  }
  const auto pruned = pairs.subset(core);
  GncOptions opt;
  opt.noise_bound = noise_bound;
  opt.max_iterations = gnc_max_iter;
  opt.mu_factor = gnc_mu_factor;
  SolverReport report;
  try {
    report = gnc_tls(pruned, opt);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::kDegenerate) throw;
    throw Error(ErrorKind::kInsufficientStructure, std::string("core is degenerate: ") + e.what());
  }
  if (report.inliers.size() < 3) {
    throw Error(ErrorKind::kInsufficientStructure, "fewer than 3 inliers after GNC");
  }
  for (auto& i : report.inliers) i = core[i];
  report.wall_ms = detail::elapsed_ms(start);
  return report;
}

}  // namespace zeroreg
