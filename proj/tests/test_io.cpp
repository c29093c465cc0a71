#include "support.hpp"

#include <gtest/gtest.h>

#include <fstream>

using namespace zeroreg;
using namespace zeroreg::testing;

namespace {

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

template <class F>
Error catch_error(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e;
  }
  ADD_FAILURE() << "no error thrown";
  return Error(ErrorKind::kIo, "none");
}

}  // namespace

TEST(LoadCloud, AsciiThreeVertices) {
  const auto path = temp_path("three.ply");
  write_text(path,
             "ply\nformat ascii 1.0\ncomment hi\nelement vertex 3\nproperty float x\nproperty float y\n"
             "property float z\nend_header\n0.5 -1.25 3\n1e-3 2 -7.75\n100 0 0.125\n");
  const auto c = load_cloud(path);
  ASSERT_EQ(c.size(), 3u);
  EXPECT_EQ(c[0], Point3(0.5, -1.25, 3));
  EXPECT_EQ(c[1], Point3(1e-3, 2, -7.75));
  EXPECT_EQ(c[2], Point3(100, 0, 0.125));
}

TEST(LoadCloud, AsciiIgnoresExtraPropertiesAndElements) {
  const auto path = temp_path("extra.ply");
  write_text(path,
             "ply\nformat ascii 1.0\nelement vertex 2\nproperty uchar red\nproperty double z\nproperty double y\n"
             "property double x\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n"
             "255 3 2 1\n0 6 5 4\n3 0 1 2\n");
  const auto c = load_cloud(path);
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c[0], Point3(1, 2, 3));
  EXPECT_EQ(c[1], Point3(4, 5, 6));
}

TEST(LoadCloud, NonFinitePointsDroppedAndCounted) {
  const auto path = temp_path("nan.ply");
  write_text(path,
             "ply\nformat ascii 1.0\nelement vertex 4\nproperty float x\nproperty float y\nproperty float z\n"
             "end_header\n1 2 3\nnan 0 0\n0 inf 0\n4 5 6\n");
  std::size_t dropped = 99;
  const auto c = load_cloud(path, CloudFormat::kAuto, &dropped);
  EXPECT_EQ(c.size(), 2u);
  EXPECT_EQ(dropped, 2u);
}

TEST(LoadCloud, KittiRecordsDropIntensity) {
  const auto path = temp_path("scan.bin");
  const std::vector<float> raw = {1.f, 2.f, 3.f, 0.9f, -4.f, 5.5f, 6.f, 0.1f, 7.f, 8.f, -9.f, 0.f};
  {
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(raw.data()), raw.size() * sizeof(float));
  }
  const auto c = load_cloud(path);
  ASSERT_EQ(c.size(), 3u);
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(c[i], Point3(raw[4 * i], raw[4 * i + 1], raw[4 * i + 2]));
  }
}

TEST(LoadCloud, KittiRejectsTruncatedFile) {
  const auto path = temp_path("short.bin");
  write_text(path, std::string(20, '\0'));
  const auto e = catch_error([&] { load_cloud(path); });
  EXPECT_EQ(e.kind(), ErrorKind::kParse);
  EXPECT_NE(std::string(e.what()).find("at byte 16"), std::string::npos) << e.what();
}

TEST(LoadCloud, EmptyFileIsParseError) {
  const auto path = temp_path("empty.ply");
  write_text(path, "");
  EXPECT_EQ(catch_error([&] { load_cloud(path); }).kind(), ErrorKind::kParse);
}

TEST(LoadCloud, UnknownMagicIsParseErrorWithOffset) {
  const auto path = temp_path("bogus.xyz");
  write_text(path, "hello world\n");
  const auto e = catch_error([&] { load_cloud(path); });
  EXPECT_EQ(e.kind(), ErrorKind::kParse);
  EXPECT_NE(std::string(e.what()).find("at byte 0"), std::string::npos);
}

TEST(LoadCloud, MalformedHeaderReportsLineOffset) {
  const auto path = temp_path("badhdr.ply");
  write_text(path, "ply\nformat ascii 1.0\nelement vertex 1\nproperty quux x\nend_header\n1\n");
  const auto e = catch_error([&] { load_cloud(path); });
  EXPECT_EQ(e.kind(), ErrorKind::kParse);
  // "property quux x" starts after "ply\n" (4) + "format ascii 1.0\n" (17) + "element vertex 1\n" (17).
  EXPECT_NE(std::string(e.what()).find("at byte 38"), std::string::npos) << e.what();
}

TEST(LoadCloud, BigEndianRejected) {
  const auto path = temp_path("be.ply");
  write_text(path, "ply\nformat binary_big_endian 1.0\nelement vertex 0\nproperty float x\nend_header\n");
  EXPECT_EQ(catch_error([&] { load_cloud(path); }).kind(), ErrorKind::kParse);
}

TEST(LoadCloud, TruncatedBinaryRejected) {
  const auto path = temp_path("trunc.ply");
  write_text(path,
             "ply\nformat binary_little_endian 1.0\nelement vertex 2\nproperty float x\nproperty float y\n"
             "property float z\nend_header\n" +
                 std::string(13, '\0'));
  EXPECT_EQ(catch_error([&] { load_cloud(path); }).kind(), ErrorKind::kParse);
}

TEST(LoadCloud, MissingFileIsIoErrorNamingPath) {
  const auto e = catch_error([] { load_cloud("/nonexistent/dir/cloud.ply"); });
  EXPECT_EQ(e.kind(), ErrorKind::kIo);
  EXPECT_NE(std::string(e.what()).find("/nonexistent/dir/cloud.ply"), std::string::npos);
}

TEST(SaveCloud, BinaryPlyRoundTripWithinFloatPrecision) {
  Rng rng(42);
  const auto cloud = uniform_box(rng, 1000, Vec3::Constant(-50), Vec3::Constant(50));
  const auto path = temp_path("rt.ply");
  save_cloud(cloud, path, CloudFormat::kPlyBinary);
  const auto back = load_cloud(path);
  ASSERT_EQ(back.size(), cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    for (int a = 0; a < 3; ++a) ASSERT_EQ(back[i][a], static_cast<double>(static_cast<float>(cloud[i][a])));
  }
}

TEST(SaveCloud, KittiRoundTripWithinFloatPrecision) {
  Rng rng(43);
  const auto cloud = uniform_box(rng, 500, Vec3::Constant(-80), Vec3::Constant(80));
  const auto path = temp_path("rt.bin");
  save_cloud(cloud, path, CloudFormat::kKittiBin);
  const auto back = load_cloud(path);
  ASSERT_EQ(back.size(), cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) ASSERT_LT((back[i] - cloud[i]).cwiseAbs().maxCoeff(), 1e-5);
}

TEST(SaveCloud, AsciiRoundTripIsExact) {
  Rng rng(44);
  const auto cloud = uniform_box(rng, 200, Vec3::Constant(-1), Vec3::Constant(1));
  const auto path = temp_path("rt_ascii.ply");
  save_cloud(cloud, path, CloudFormat::kPlyAscii);
  const auto back = load_cloud(path);
  ASSERT_EQ(back.size(), cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) ASSERT_EQ(back[i], cloud[i]);
}

TEST(SaveCloud, EmptyCloudGivesValidZeroVertexPly) {
  const auto path = temp_path("empty_out.ply");
  save_cloud(PointCloud{}, path);
  EXPECT_EQ(load_cloud(path).size(), 0u);
  const auto ascii = temp_path("empty_out_ascii.ply");
  save_cloud(PointCloud{}, ascii, CloudFormat::kPlyAscii);
  EXPECT_EQ(load_cloud(ascii).size(), 0u);
}

TEST(SaveCloud, UnwritablePathIsIoError) {
  const auto e = catch_error([] { save_cloud(PointCloud{}, "/nonexistent/dir/out.ply"); });
  EXPECT_EQ(e.kind(), ErrorKind::kIo);
  EXPECT_NE(std::string(e.what()).find("/nonexistent/dir/out.ply"), std::string::npos);
}

TEST(Config, EmptyObjectGivesTableDefaults) {
  const auto c = config_from_json(nlohmann::json::object());
  EXPECT_EQ(c.kappa_spheric, 0.10);
  EXPECT_EQ(c.kappa_disc, 0.15);
  EXPECT_EQ(c.tau_v, 0.05);
  EXPECT_EQ(c.tau_l, 0.005);
  EXPECT_EQ(c.tau_m, 0.02);
  EXPECT_EQ(c.tau_g, 0.05);
  EXPECT_EQ(c.delta_v, 0.10);
  EXPECT_EQ(c.n_r, 2000);
  EXPECT_EQ(c.r_max, 5.0);
  EXPECT_EQ(c.n_fps, 1500);
  EXPECT_EQ(c.n_patch, 512);
  EXPECT_EQ(c.h, 7);
  EXPECT_EQ(c.w, 20);
  EXPECT_EQ(c.d, 32);
  EXPECT_EQ(c.ransac_max_iter, 50000);
  EXPECT_EQ(c.tau_n, 25);
  EXPECT_EQ(c.solver, SolverKind::kKcoreGnc);
}

TEST(Config, TauOrderingViolationNamesField) {
  const auto e = catch_error([] { config_from_json({{"tau_l", 0.03}, {"tau_m", 0.02}}); });
  EXPECT_EQ(e.kind(), ErrorKind::kConfig);
  EXPECT_NE(std::string(e.what()).find("tau_l <= tau_m violated"), std::string::npos) << e.what();
}

TEST(Config, SingleOverrideKeepsDefaults) {
  const auto c = config_from_json({{"n_fps", 500}});
  EXPECT_EQ(c.n_fps, 500);
  PipelineConfig expected;
  expected.n_fps = 500;
  EXPECT_EQ(to_json(c), to_json(expected));
}

TEST(Config, UnknownKeyRejected) {
  const auto e = catch_error([] { config_from_json({{"n_fsp", 500}}); });
  EXPECT_EQ(e.kind(), ErrorKind::kConfig);
  EXPECT_NE(std::string(e.what()).find("n_fsp"), std::string::npos);
}

TEST(Config, WrongTypeRejected) {
  EXPECT_THROW(config_from_json({{"n_fps", "many"}}), Error);
  EXPECT_THROW(config_from_json({{"solver", "magic"}}), Error);
}

TEST(Config, InvariantsEnforced) {
  EXPECT_THROW(config_from_json({{"kappa_spheric", 0.2}}), Error);
  EXPECT_THROW(config_from_json({{"n_fps", 0}}), Error);
  EXPECT_THROW(config_from_json({{"r_max", -1.0}}), Error);
  EXPECT_THROW(config_from_json({{"tau_g", 0.01}}), Error);
}

TEST(Config, JsonRoundTrip) {
  PipelineConfig c;
  c.solver = SolverKind::kRansac;
  c.seed = 77;
  c.sensor_origin = Point3(1, 2, 3);
  c.tau_n = 10;
  const auto back = config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_EQ(config_keys().size(), to_json(c).size());
}

TEST(Config, LoadFromFile) {
  const auto path = temp_path("cfg.json");
  write_text(path, R"({"n_fps": 700, "solver": "ransac"})");
  const auto c = load_config(path);
  EXPECT_EQ(c.n_fps, 700);
  EXPECT_EQ(c.solver, SolverKind::kRansac);

  const auto bad = temp_path("bad_cfg.json");
  write_text(bad, "{ not json");
  EXPECT_EQ(catch_error([&] { load_config(bad); }).kind(), ErrorKind::kParse);
  EXPECT_EQ(catch_error([] { load_config("/nonexistent/cfg.json"); }).kind(), ErrorKind::kIo);
}
