#include "support.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace zeroreg;
using namespace zeroreg::testing;

namespace {

std::vector<IndexPair> mutual_oracle(const std::vector<FeatureVector>& p, const std::vector<FeatureVector>& q) {
  auto nn = [](const FeatureVector& x, const std::vector<FeatureVector>& set) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < set.size(); ++j)
      if ((x - set[j]).squaredNorm() < (x - set[best]).squaredNorm()) best = j;
    return best;
  };
  std::vector<IndexPair> out;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto j = nn(p[i], q);
    if (nn(q[j], p) == i) out.emplace_back(static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j));
  }
  return out;
}

std::vector<FeatureVector> random_features(Rng& rng, int n, int dim) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<FeatureVector> out;
  for (int i = 0; i < n; ++i) {
    FeatureVector f(dim);
    for (int k = 0; k < dim; ++k) f[k] = g(rng);
    out.push_back(f.normalized());
  }
  return out;
}

CylindricalMap random_map(Rng& rng, int h, int w, int d) {
  CylindricalMap m(h, w, d);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& v : m.data()) v = u(rng) < 0.15 ? u(rng) : 0.0;
  return m;
}

double circular_distance(double a, double b, int w) {
  const double d = std::fmod(std::abs(a - b), w);
  return std::min(d, w - d);
}

// Bumpy height field sampled densely: gives well-defined, varied normals.
PointCloud bumpy_surface(Rng& rng, std::size_t n, double half) {
  std::uniform_real_distribution<double> u(-half, half);
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = u(rng), y = u(rng);
    c.points.emplace_back(x, y, 0.3 * std::sin(1.3 * x) * std::cos(0.9 * y) + 0.1 * std::sin(3.1 * x + 2.0 * y));
  }
  return c;
}

}  // namespace

TEST(MutualMatch, IdenticalListsGiveIdentityPairing) {
  Rng rng(1);
  const auto f = random_features(rng, 50, 16);
  const auto m = mutual_match(f, f);
  ASSERT_EQ(m.size(), 50u);
  for (std::uint32_t k = 0; k < 50; ++k) EXPECT_EQ(m[k], IndexPair(k, k));
}

TEST(MutualMatch, SingleQueryPicksExactCopy) {
  FeatureVector a(3);
  a << 0.6, 0.8, 0.0;
  FeatureVector b = a;
  b[0] += 1e-3;
  EXPECT_EQ(mutual_match({a}, {a, b}), (std::vector<IndexPair>{{0, 0}}));
}

TEST(MutualMatch, NonMutualPairExcluded) {
  auto v = [](double x, double y) {
    FeatureVector f(2);
    f << x, y;
    return f;
  };
  // P0 -> Q1, but Q1 -> P2 (closer), so (0, 1) is not mutual.
  const std::vector<FeatureVector> p = {v(0.0, 0.0), v(10.0, 0.0), v(2.9, 0.0)};
  const std::vector<FeatureVector> q = {v(-5.0, 0.0), v(3.0, 0.0), v(10.5, 0.0)};
  const auto m = mutual_match(p, q);
  EXPECT_EQ(m, mutual_oracle(p, q));
  EXPECT_EQ(m, (std::vector<IndexPair>{{1, 2}, {2, 1}}));
  for (const auto& pr : m) EXPECT_NE(pr, IndexPair(0, 1));
}

TEST(MutualMatch, MatchesExhaustiveOracle) {
  Rng rng(2);
  for (int t = 0; t < 20; ++t) {
    const auto p = random_features(rng, 30 + 7 * t, 8);
    const auto q = random_features(rng, 200 - 5 * t, 8);
    EXPECT_EQ(mutual_match(p, q, 1 + t % 3), mutual_oracle(p, q));
  }
}

TEST(MutualMatch, SymmetricAsPairSet) {
  Rng rng(3);
  const auto p = random_features(rng, 300, 12);
  const auto q = random_features(rng, 250, 12);
  std::set<IndexPair> a, b;
  for (auto [i, j] : mutual_match(p, q)) a.emplace(i, j);
  for (auto [j, i] : mutual_match(q, p)) b.emplace(i, j);
  EXPECT_EQ(a, b);
}

TEST(MutualMatch, EachIndexAtMostOnce) {
  Rng rng(4);
  const auto p = random_features(rng, 400, 6);
  const auto q = random_features(rng, 400, 6);
  std::set<std::uint32_t> is, js;
  for (auto [i, j] : mutual_match(p, q)) {
    EXPECT_TRUE(is.insert(i).second);
    EXPECT_TRUE(js.insert(j).second);
  }
}

TEST(MutualMatch, EmptyInputGivesEmptyOutput) {
  Rng rng(5);
  const auto f = random_features(rng, 3, 4);
  EXPECT_TRUE(mutual_match({}, f).empty());
  EXPECT_TRUE(mutual_match(f, {}).empty());
}

TEST(MutualMatch, DimensionMismatchThrows) {
  Rng rng(6);
  EXPECT_THROW(mutual_match(random_features(rng, 3, 4), random_features(rng, 3, 5)), Error);
}

TEST(YawOffset, IdenticalMapsGiveZero) {
  Rng rng(7);
  const auto m = random_map(rng, 7, 20, 32);
  EXPECT_LT(circular_distance(estimate_yaw_offset(m, m), 0.0, 20), 1e-6);
}

TEST(YawOffset, RecoversEveryShift) {
  Rng rng(8);
  const auto m = random_map(rng, 7, 20, 32);
  for (auto mode : {YawMode::kParabolic, YawMode::kWindow}) {
    for (int k = 0; k < 20; ++k) {
      const double d = estimate_yaw_offset(m, m.shifted(k), mode);
      EXPECT_GE(d, 0.0);
      EXPECT_LT(d, 20.0);
      EXPECT_LT(circular_distance(d, k, 20), 1e-6) << "k = " << k;
    }
  }
}

TEST(YawOffset, Antisymmetric) {
  Rng rng(9);
  for (int k = 0; k < 20; ++k) {
    const auto m = random_map(rng, 7, 20, 32);
    const auto s = m.shifted(k);
    for (auto mode : {YawMode::kParabolic, YawMode::kWindow}) {
      const double sum = estimate_yaw_offset(m, s, mode) + estimate_yaw_offset(s, m, mode);
      EXPECT_LT(circular_distance(sum, 0.0, 20), 1e-6);
    }
  }
}

TEST(YawOffset, ConstantMapsAreDegenerate) {
  CylindricalMap a(7, 20, 32), b(7, 20, 32);
  for (auto& v : a.data()) v = 0.25;
  for (auto& v : b.data()) v = 1.0;
  try {
    estimate_yaw_offset(a, b);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDegenerate);
  }
  EXPECT_THROW(estimate_yaw_offset(CylindricalMap(7, 20, 32), CylindricalMap(7, 20, 32)), Error);
}

TEST(YawOffset, ScoresAreCircularCrossCorrelation) {
  Rng rng(10);
  const auto a = random_map(rng, 2, 6, 3), b = random_map(rng, 2, 6, 3);
  const auto beta = yaw_scores(a, b);
  for (int s = 0; s < 6; ++s) {
    double ref = 0.0;
    for (int h = 0; h < 2; ++h)
      for (int w = 0; w < 6; ++w)
        for (int d = 0; d < 3; ++d) ref += a.at(h, w, d) * b.at(h, (w + s) % 6, d);
    EXPECT_NEAR(beta[s], ref, 1e-14);
  }
  EXPECT_THROW(yaw_scores(a, CylindricalMap(2, 5, 3)), Error);
}

TEST(YawOffset, WindowHandlesWrapAroundPeak) {
  // Peak at sector 0 with heavier mass on sector 19: window mode returns a
  // value just below W (or near 0); a literal mean would be pulled to ~W/2.
  std::vector<double> beta(20, 0.0);
  beta[0] = 10.0;
  beta[19] = 9.9;
  beta[1] = 9.0;
  const double d = yaw_offset_from_scores(beta, YawMode::kWindow);
  EXPECT_LT(circular_distance(d, 19.6, 20), 0.45);
  const double lit = yaw_offset_from_scores(beta, YawMode::kLiteral);
  EXPECT_GT(circular_distance(lit, 0.0, 20), 3.0);
}

TEST(YawOffset, SubSectorInterpolation) {
  std::vector<double> beta(20, 0.0);
  beta[5] = 1.0;
  beta[6] = 1.0;
  EXPECT_NEAR(yaw_offset_from_scores(beta, YawMode::kParabolic), 5.5, 1e-9);
  EXPECT_NEAR(yaw_offset_from_scores(beta, YawMode::kWindow), 5.5, 1e-9);
  beta[6] = 0.5;
  beta[4] = 0.0;
  // Parabola through (4, 0), (5, 1), (6, 0.5): vertex at 5 + 0.5 * (0 - 0.5) / (0 - 2 + 0.5).
  EXPECT_NEAR(yaw_offset_from_scores(beta, YawMode::kParabolic), 5.0 + 1.0 / 6.0, 1e-12);
}

TEST(PairwiseTransform, IdentityCase) {
  const auto t = pairwise_transform(Point3(1, 2, 3), Point3(1, 2, 3), Mat3::Identity(), Mat3::Identity(), 0.0, 20);
  EXPECT_LT((t.rotation - Mat3::Identity()).norm(), 1e-15);
  EXPECT_LT(t.translation.norm(), 1e-15);
}

TEST(PairwiseTransform, QuarterTurn) {
  const auto t = pairwise_transform(Point3(1, 0, 0), Point3(0, 1, 0), Mat3::Identity(), Mat3::Identity(), 5.0, 20);
  const Mat3 rz = Eigen::AngleAxisd(std::numbers::pi / 2, Vec3::UnitZ()).toRotationMatrix();
  EXPECT_LT((t.rotation - rz).norm(), 1e-12);
  EXPECT_LT(t.translation.norm(), 1e-12);
}

TEST(PairwiseTransform, MapsPToQExactly) {
  Rng rng(11);
  std::uniform_real_distribution<double> u(0.0, 20.0);
  for (int i = 0; i < 1000; ++i) {
    const Point3 p = 50.0 * random_unit(rng), q = 50.0 * random_unit(rng);
    const auto t = pairwise_transform(p, q, random_rotation(rng), random_rotation(rng), u(rng), 20);
    ASSERT_LT((t * p - q).norm(), 1e-12);
    ASSERT_TRUE(is_rotation(t.rotation, 1e-9));
  }
}

// Rotating a patch by whole sectors about the sensor axis shifts its map
// exactly, so the recovered hypothesis must equal the planted transform.
TEST(PairwiseTransform, PlantedPatchPairsRecovered) {
  Rng rng(12);
  const auto scene = bumpy_surface(rng, 40000, 4.0);
  const Point3 sensor(0, 0, 10);
  const CylindricalHistogramBackend backend(7, 20, 32);
  int good = 0, total = 0;
  for (int k : {1, 3, 7, 12, 19}) {
    const RigidTransform t{yaw_rotation(k, 20), Vec3(0.7, -1.1, 0.4)};
    const auto moved = apply(t, scene);
    const SpatialIndex ia(scene), ib(moved);
    for (std::uint32_t i = 0; i < 20; ++i) {
      const std::uint32_t idx = i * 997 % 40000;
      if (scene[idx].head<2>().norm() > 3.0) continue;
      const auto pa = extract_patch(scene, ia, scene[idx], 0.6, 512, idx, sensor);
      const auto pb = extract_patch(moved, ib, moved[idx], 0.6, 512, idx, t * sensor);
      ASSERT_TRUE(pa && pb);
      const double d = estimate_yaw_offset(backend.map(*pa), backend.map(*pb));
      const auto h = pairwise_transform(pa->center, pb->center, pa->frame, pb->frame, d, 20);
      ++total;
      if (rre(h.rotation, t.rotation) < 1.0 && rte(h.translation, t.translation) < 0.01) ++good;
    }
  }
  EXPECT_EQ(good, total);
}

TEST(MatchScale, IdentityCopyGivesIdentityHypotheses) {
  Rng rng(13);
  const auto scene = box_surface(rng, 20000, Vec3(3, 2, 1.5));
  PipelineConfig cfg;
  const SpatialIndex index(scene);
  const auto kp = farthest_point_sampling(scene, 200);
  const auto backend = make_backend(cfg);
  const auto s = describe_set(scene, index, kp, 0.7, Scale::kMiddle, cfg, *backend, 1);
  ScaleMatchStats stats;
  const auto cs = match_scale(s, s, cfg, &stats);
  EXPECT_EQ(stats.mutual_matches, s.size());
  ASSERT_EQ(cs.size(), s.size());
  for (std::size_t i = 0; i < cs.size(); ++i) {
    EXPECT_LT((cs.hypotheses[i].rotation - Mat3::Identity()).norm(), 1e-6);
    EXPECT_LT(cs.hypotheses[i].translation.norm(), 1e-6);
    EXPECT_EQ(cs.scales[i], Scale::kMiddle);
  }
}

TEST(MatchScale, RigidCopyMostlyCorrect) {
  Rng rng(14);
  // Cluttered room about 4 m across: walls plus boxes, so patches are
  // distinctive. Translation error grows with distance from the origin.
  PointCloud scene = box_surface(rng, 30000, Vec3(2, 1.5, 0.75));
  for (int b = 0; b < 6; ++b) {
    const Vec3 c(-1.25 + 0.5 * b, (b % 2 ? 0.5 : -0.6), -0.5 + 0.1 * b);
    auto obj = box_surface(rng, 3000, Vec3(0.15 + 0.025 * b, 0.1, 0.125 + 0.015 * b));
    for (auto& p : obj.points) scene.points.push_back(p + c);
  }
  const auto t = random_transform(rng, 2.0);
  const auto moved = apply(t, scene);
  PipelineConfig ca, cb;
  cb.sensor_origin = t * ca.sensor_origin;
  const SpatialIndex ia(scene), ib(moved);
  const auto kp = farthest_point_sampling(scene, 400);
  const auto backend = make_backend(ca);
  const auto sa = describe_set(scene, ia, kp, 0.3, Scale::kMiddle, ca, *backend, 2);
  const auto sb = describe_set(moved, ib, kp, 0.3, Scale::kMiddle, cb, *backend, 2);
  const auto cs = match_scale(sa, sb, ca);
  ASSERT_GT(cs.size(), 50u);
  std::size_t good = 0;
  for (const auto& h : cs.hypotheses) {
    if (rre(h.rotation, t.rotation) < 2.0 && rte(h.translation, t.translation) < 0.05) ++good;
  }
  EXPECT_GE(static_cast<double>(good), 0.8 * cs.size()) << good << " of " << cs.size();
}

TEST(CorrespondenceSet, AppendAndSubset) {
  CorrespondenceSet a, b;
  a.push_back(Point3(1, 0, 0), Point3(0, 1, 0), RigidTransform{}, Scale::kLocal);
  b.push_back(Point3(2, 0, 0), Point3(0, 2, 0), RigidTransform{}, Scale::kGlobal);
  b.push_back(Point3(3, 0, 0), Point3(0, 3, 0), RigidTransform{}, Scale::kGlobal);
  a.append(b);
  ASSERT_EQ(a.size(), 3u);
  const auto s = a.subset({2, 0});
  EXPECT_EQ(s.source[0], Point3(3, 0, 0));
  EXPECT_EQ(s.scales[1], Scale::kLocal);
  EXPECT_EQ(s.hypotheses.size(), 2u);
}
