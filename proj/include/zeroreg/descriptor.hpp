#pragma once

#include "zeroreg/config.hpp"
#include "zeroreg/error.hpp"
#include "zeroreg/kdtree.hpp"
#include "zeroreg/parallel.hpp"
#include "zeroreg/rng.hpp"
#include "zeroreg/sampling.hpp"
#include "zeroreg/types.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

namespace zeroreg {

/// Dense H x W x D grid: height bins x yaw sectors x channels, row-major in
/// that order.
class CylindricalMap {
 public:
  CylindricalMap() = default;
  CylindricalMap(int h, int w, int d) : h_(h), w_(w), d_(d), data_(static_cast<std::size_t>(h) * w * d, 0.0) {}

  int height() const { return h_; }
  int sectors() const { return w_; }
  int channels() const { return d_; }

  double& at(int h, int w, int d) { return data_[index(h, w, d)]; }
  double at(int h, int w, int d) const { return data_[index(h, w, d)]; }

  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  /// Copy with sector w moved to (w + k) mod W.
  CylindricalMap shifted(int k) const {
    CylindricalMap out(h_, w_, d_);
    const int kk = ((k % w_) + w_) % w_;
    for (int h = 0; h < h_; ++h)
      for (int w = 0; w < w_; ++w)
        for (int d = 0; d < d_; ++d) out.at(h, (w + kk) % w_, d) = at(h, w, d);
    return out;
  }

 private:
  std::size_t index(int h, int w, int d) const {
    return (static_cast<std::size_t>(h) * w_ + static_cast<std::size_t>(w)) * d_ + static_cast<std::size_t>(d);
  }

  int h_ = 0, w_ = 0, d_ = 0;
  std::vector<double> data_;
};

using FeatureVector = Eigen::VectorXd;

struct Descriptor {
  FeatureVector feature;
  CylindricalMap map;
};

/// Pluggable patch descriptor. Implementations must be deterministic and
/// thread-safe for concurrent `describe` calls.
class DescriptorBackend {
 public:
  virtual ~DescriptorBackend() = default;
  virtual std::string name() const = 0;
  virtual Descriptor describe(const Patch& patch) const = 0;
};

enum class FeaturePooling { kRadial, kHeight, kSpectrum };

inline std::string to_string(FeaturePooling p) {
  switch (p) {
    case FeaturePooling::kRadial: return "radial";
    case FeaturePooling::kHeight: return "height";
    case FeaturePooling::kSpectrum: return "spectrum";
  }
  return "?";
}

inline FeaturePooling parse_pooling(const std::string& s) {
  if (s == "radial") return FeaturePooling::kRadial;
  if (s == "height") return FeaturePooling::kHeight;
  if (s == "spectrum") return FeaturePooling::kSpectrum;
  throw Error(ErrorKind::kConfig, "feature_pooling: expects radial, height or spectrum, got '" + s + "'");
}

/// Length of the feature vector for a map shape and pooling.
inline int feature_dim(int h, int d, FeaturePooling pooling, int harmonics) {
  switch (pooling) {
    case FeaturePooling::kRadial: return d;
    case FeaturePooling::kHeight: return h * d;
    case FeaturePooling::kSpectrum: return h * d * (harmonics + 1);
  }
  return d;
}

/// Yaw-invariant pooling of a cylindrical map, L2-normalized. With `root`, the
/// pooling runs on the element-wise square root of the map.
///   radial:   sum over height and sectors (D values)
///   height:   sum over sectors (H x D values)
///   spectrum: magnitudes of the sector-axis DFT at frequencies 0..harmonics
///             for every (height, channel); frequency 0 equals `height`.
/// A circular sector shift multiplies each DFT coefficient by a unit phase, so
/// all three are invariant to it.
inline FeatureVector pool_feature(const CylindricalMap& map, FeaturePooling pooling, int harmonics,
                                  bool root = false) {
  CylindricalMap rooted;
  if (root) {
    rooted = map;
    for (auto& v : rooted.data()) v = std::sqrt(v);
  }
  const CylindricalMap& m = root ? rooted : map;
  const int H = m.height(), W = m.sectors(), D = m.channels();
  FeatureVector f = FeatureVector::Zero(feature_dim(H, D, pooling, harmonics));
  if (pooling == FeaturePooling::kRadial) {
    for (int h = 0; h < H; ++h)
      for (int w = 0; w < W; ++w)
        for (int d = 0; d < D; ++d) f[d] += m.at(h, w, d);
  } else if (pooling == FeaturePooling::kHeight) {
    for (int h = 0; h < H; ++h)
      for (int w = 0; w < W; ++w)
        for (int d = 0; d < D; ++d) f[h * D + d] += m.at(h, w, d);
  } else {
    constexpr double kTwoPi = 2.0 * std::numbers::pi;
    std::vector<double> re(D), im(D);
    for (int k = 0; k <= harmonics; ++k) {
      for (int h = 0; h < H; ++h) {
        std::fill(re.begin(), re.end(), 0.0);
        std::fill(im.begin(), im.end(), 0.0);
        for (int w = 0; w < W; ++w) {
          const double c = std::cos(kTwoPi * k * w / W), s = std::sin(kTwoPi * k * w / W);
          for (int d = 0; d < D; ++d) {
            re[d] += c * m.at(h, w, d);
            im[d] -= s * m.at(h, w, d);
          }
        }
        for (int d = 0; d < D; ++d) f[(k * H + h) * D + d] = std::hypot(re[d], im[d]);
      }
    }
  }
  const double norm = f.norm();
  if (norm > 0.0) f /= norm;
  return f;
}

/// Hand-crafted backend. Points are expressed in the patch frame and binned by
/// height (H uniform bins over [-1, 1]) and yaw (W sectors over [0, 2*pi);
/// with `soft_sectors` a point is shared linearly between the two nearest
/// sector centers).
/// Each cell holds a D-bin histogram of the cylindrical radius with linear
/// weights between nodes at rho = i / D; the map is divided by the point count.
/// The feature is a yaw-invariant pooling of the map (see pool_feature).
class CylindricalHistogramBackend final : public DescriptorBackend {
 public:
  CylindricalHistogramBackend(int h, int w, int d, FeaturePooling pooling = FeaturePooling::kSpectrum,
                              int harmonics = 2, bool root = true, bool soft_sectors = true)
      : h_(h), w_(w), d_(d), pooling_(pooling), harmonics_(harmonics), root_(root), soft_sectors_(soft_sectors) {
    if (h < 1 || w < 2 || d < 1) throw Error(ErrorKind::kInvalidArgument, "bad cylindrical map shape");
    if (harmonics < 0 || harmonics > w / 2) throw Error(ErrorKind::kInvalidArgument, "harmonics must be in [0, W/2]");
  }

  std::string name() const override { return "cylindrical"; }

  CylindricalMap map(const Patch& patch) const {
    CylindricalMap out(h_, w_, d_);
    if (patch.points.empty()) return out;
    constexpr double kTwoPi = 2.0 * std::numbers::pi;
    for (const auto& x : patch.points) {
      const Vec3 y = patch.frame * x;
      const double rho = std::min(1.0, std::hypot(y.x(), y.y()));
      const double z = std::clamp(y.z(), -1.0, 1.0);
      double phi = std::atan2(y.y(), y.x());
      if (phi < 0.0) phi += kTwoPi;
      const int h = std::min(h_ - 1, static_cast<int>(std::floor((z + 1.0) * 0.5 * h_)));
      int w0, w1;
      double fw;  // share of sector w1
      if (soft_sectors_) {
        const double s = phi * w_ / kTwoPi - 0.5;  // 0 at the center of sector 0
        double s0 = std::floor(s);
        fw = s - s0;
        // Snap rounding residue so points at sector centers stay in one sector.
        if (fw < 1e-9) {
          fw = 0.0;
        } else if (fw > 1.0 - 1e-9) {
          fw = 0.0;
          s0 += 1.0;
        }
        w0 = ((static_cast<int>(s0) % w_) + w_) % w_;
        w1 = (w0 + 1) % w_;
      } else {
        w0 = w1 = static_cast<int>(std::floor(phi * w_ / kTwoPi)) % w_;
        fw = 0.0;
      }
      const double u = rho * d_;
      const int i0 = static_cast<int>(std::floor(u));
      auto add = [&](int i, double weight) {
        out.at(h, w0, i) += weight * (1.0 - fw);
        if (fw > 0.0) out.at(h, w1, i) += weight * fw;
      };
      if (i0 >= d_ - 1) {
        add(d_ - 1, 1.0);
      } else {
        const double frac = u - i0;
        add(i0, 1.0 - frac);
        add(i0 + 1, frac);
      }
    }
    const double inv_n = 1.0 / static_cast<double>(patch.points.size());
    for (auto& v : out.data()) v *= inv_n;
    return out;
  }

  Descriptor describe(const Patch& patch) const override {
    Descriptor out;
    out.map = map(patch);
    out.feature = pool_feature(out.map, pooling_, harmonics_, root_);
    return out;
  }

 private:
  int h_, w_, d_;
  FeaturePooling pooling_;
  int harmonics_;
  bool root_;
  bool soft_sectors_;
};

inline std::unique_ptr<DescriptorBackend> make_backend(const PipelineConfig& cfg) {
  if (cfg.descriptor_backend == "cylindrical") {
    return std::make_unique<CylindricalHistogramBackend>(cfg.h, cfg.w, cfg.d, parse_pooling(cfg.feature_pooling),
                                                         cfg.feature_harmonics, cfg.feature_root, cfg.soft_sectors);
  }
  throw Error(ErrorKind::kConfig, "descriptor_backend: unknown backend '" + cfg.descriptor_backend + "'");
}

/// Per-keypoint descriptors for one cloud at one scale. All sequences have
/// equal length; `source_index` refers to the keypoint's index in the cloud.
struct DescriptorSet {
  Scale scale = Scale::kMiddle;
  std::vector<Point3> keypoints;
  std::vector<std::uint32_t> source_index;
  std::vector<Mat3> frames;
  std::vector<FeatureVector> features;
  std::vector<CylindricalMap> maps;
  std::size_t dropped = 0;

  std::size_t size() const { return keypoints.size(); }
};

/// Describes the patches around `keypoints` (indices into `cloud`). Keypoints
/// whose patch cannot be built are dropped from every sequence.
inline DescriptorSet describe_set(const PointCloud& cloud, const SpatialIndex& index,
                                  const std::vector<std::uint32_t>& keypoints, double radius, Scale scale,
                                  const PipelineConfig& cfg, const DescriptorBackend& backend, std::uint64_t seed) {
  const std::size_t n = keypoints.size();
  std::vector<std::optional<Patch>> patches(n);
  std::vector<Descriptor> descriptors(n);
  parallel_for(n, cfg.threads, [&](std::size_t k) {
    const auto idx = keypoints[k];
    patches[k] = extract_patch(cloud, index, cloud[idx], radius, static_cast<std::size_t>(cfg.n_patch),
                               mix_seed(seed, static_cast<std::uint64_t>(scale), idx), cfg.sensor_origin, scale);
    if (patches[k]) descriptors[k] = backend.describe(*patches[k]);
  });

  DescriptorSet set;
  set.scale = scale;
  for (std::size_t k = 0; k < n; ++k) {
    if (!patches[k]) {
      ++set.dropped;
      continue;
    }
    set.keypoints.push_back(patches[k]->center);
    set.source_index.push_back(keypoints[k]);
    set.frames.push_back(patches[k]->frame);
    set.features.push_back(std::move(descriptors[k].feature));
    set.maps.push_back(std::move(descriptors[k].map));
  }
  if (set.keypoints.empty()) {
    throw Error(ErrorKind::kInsufficientData, std::string("no valid patches at the ") + to_string(scale) + " scale");
  }
  return set;
}

}  // namespace zeroreg
