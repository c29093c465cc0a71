// zeroreg command-line driver: register, benchmark, synth, inspect.
//
// JSON goes to stdout (or --out); a one-line summary goes to stderr.
// Exit codes: 0 ok, 1 usage / I/O / config, 2 registration failure or
// insufficient data.

#include "zeroreg/zeroreg.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

namespace {

using namespace zeroreg;

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kRegistrationFailure:
    case ErrorKind::kInsufficientData:
    case ErrorKind::kDegenerate:
    case ErrorKind::kNoHypothesis:
    case ErrorKind::kInsufficientStructure:
      return 2;
    default:
      return 1;
  }
}

std::string flag_name(const std::string& key) {
  std::string out = key;
  for (auto& c : out)
    if (c == '_') c = '-';
  return "--" + out;
}

// One string-valued option per config key. Values are read as JSON literals
// when they parse (numbers, booleans), otherwise as plain strings;
// sensor_origin takes "x,y,z".
struct ConfigFlags {
  std::string config_path;
  std::map<std::string, std::string> values;

  void attach(CLI::App& app) {
    app.add_option("--config", config_path, "JSON config file; flags override its keys")->check(CLI::ExistingFile);
    for (const auto& key : config_keys()) {
      app.add_option(flag_name(key), values[key], "config key " + key);
    }
  }

  // File first, then flags, then ZEROREG_THREADS when threads is still unset.
  PipelineConfig resolve(const CLI::App& app) const {
    nlohmann::json doc = nlohmann::json::object();
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw Error(ErrorKind::kIo, "cannot open config '" + config_path + "'");
      try {
        in >> doc;
      } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorKind::kParse, config_path + ": " + e.what());
      }
      if (!doc.is_object()) throw Error(ErrorKind::kConfig, config_path + ": config must be a JSON object");
    }
    for (const auto& [key, text] : values) {
      if (app.count(flag_name(key)) == 0) continue;
      if (key == "sensor_origin") {
        doc[key] = nlohmann::json::parse("[" + text + "]", nullptr, false);
        if (doc[key].is_discarded()) throw Error(ErrorKind::kConfig, "sensor_origin: expects x,y,z");
        continue;
      }
      auto value = nlohmann::json::parse(text, nullptr, false);
      doc[key] = value.is_discarded() || value.is_object() || value.is_array() ? nlohmann::json(text) : value;
    }
    if (!doc.contains("threads")) {
      if (const char* env = std::getenv("ZEROREG_THREADS"); env && *env) {
        try {
          doc["threads"] = std::stoi(env);
        } catch (const std::exception&) {
          throw Error(ErrorKind::kConfig, std::string("ZEROREG_THREADS: not an integer: '") + env + "'");
        }
      }
    }
    return config_from_json(doc);
  }
};

void emit(const nlohmann::json& doc, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << doc.dump(2) << '\n';
    return;
  }
  std::ofstream out(out_path);
  if (!out) throw Error(ErrorKind::kIo, "cannot open '" + out_path + "' for writing");
  out << doc.dump(2) << '\n';
}

std::string fixed(double v, int digits = 3) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

int cmd_register(const std::string& src, const std::string& dst, const PipelineConfig& cfg, const std::string& mode,
                 const std::string& out) {
  const auto m = parse_mode(mode);
  const auto p = load_cloud(src);
  const auto q = load_cloud(dst);
  nlohmann::json doc = {{"source", src}, {"target", dst}, {"mode", to_string(m)}, {"config", to_json(cfg)}};
  try {
    const auto result = register_clouds(p, q, cfg, m);
    doc["status"] = "ok";
    doc["result"] = to_json(result);
    emit(doc, out);
    std::cerr << "registered " << src << " -> " << dst << ": " << result.inlier_count << " inliers, v = "
              << fixed(result.voxel_size, 4) << " m, " << fixed(result.total_ms, 1) << " ms"
              << (result.early_exited ? " (early exit)" : "") << '\n';
    return 0;
  } catch (const RegistrationFailure& f) {
    doc["status"] = "failed";
    doc["error"] = {{"stage", f.stage()}, {"cause", std::string(to_string(f.cause()))}, {"message", f.what()}};
    emit(doc, out);
    std::cerr << "registration failed at stage '" << f.stage() << "': " << f.what() << '\n';
    return 2;
  }
}

int cmd_inspect(const std::string& path, const PipelineConfig& cfg, const std::string& out) {
  std::size_t dropped = 0;
  const auto cloud = load_cloud(path, CloudFormat::kAuto, &dropped);
  const auto est = estimate_voxel(cloud, cloud, cfg);
  const auto down = voxel_downsample(cloud, est.voxel_size);
  const auto radii = estimate_radii(down, cfg, mix_seed(cfg.seed, 0x726164));
  nlohmann::json doc = {
      {"path", path},
      {"points", cloud.size()},
      {"dropped_nonfinite", dropped},
      {"sphericity", est.shape.sphericity},
      {"spread", est.shape.spread},
      {"branch", est.spheric ? "spheric" : "disc"},
      {"voxel_size", est.voxel_size},
      {"downsampled", down.size()},
      {"radii", {{"local", radii.local}, {"middle", radii.middle}, {"global", radii.global}}},
      {"config", to_json(cfg)},
  };
  emit(doc, out);
  std::cerr << path << ": " << cloud.size() << " points, " << (est.spheric ? "spheric" : "disc") << " branch, v = "
            << fixed(est.voxel_size, 4) << " m, r = " << fixed(radii.local) << " / " << fixed(radii.middle) << " / "
            << fixed(radii.global) << " m\n";
  return 0;
}

struct BenchArgs {
  std::string spec_path;
  std::string preset;
  std::size_t pairs = 10;
  std::optional<double> overlap;
  std::optional<double> noise_fraction;
  std::string csv;
};

int cmd_benchmark(const BenchArgs& a, const PipelineConfig& cfg, const std::string& mode, const std::string& out) {
  const auto m = parse_mode(mode);
  std::vector<SceneSpec> specs;
  if (!a.spec_path.empty()) {
    specs = load_benchmark_specs(a.spec_path);
  } else {
    SceneSpec base;
    if (a.overlap) base.overlap = *a.overlap;
    if (a.noise_fraction) base.noise_voxel_fraction = *a.noise_fraction;
    base.validate();
    specs = preset_specs(a.preset.empty() ? "mixed" : a.preset, a.pairs, cfg.seed, base);
  }
  const auto report = run_benchmark(specs, cfg, m);
  emit(to_json(report, cfg), out);
  std::string csv_path = a.csv;
  if (csv_path.empty() && !out.empty()) csv_path = std::filesystem::path(out).replace_extension(".csv").string();
  if (!csv_path.empty()) {
    std::ofstream csv(csv_path);
    if (!csv) throw Error(ErrorKind::kIo, "cannot open '" + csv_path + "' for writing");
    csv << to_csv(report);
  }
  std::cerr << "benchmark " << to_string(m) << ": " << report.rows.size() << " pairs, success "
            << fixed(100.0 * report.success_rate, 1) << "%, mean " << fixed(report.mean_wall_ms, 1) << " ms/pair";
  if (m == RegistrationMode::kLite) std::cerr << ", early exit " << fixed(100.0 * report.early_exit_fraction, 1) << "%";
  std::cerr << '\n';
  return 0;
}

struct SynthArgs {
  std::string preset = "indoor";
  std::uint64_t seed = 0;
  double overlap = 0.7;
  std::optional<double> noise;
  std::optional<double> noise_fraction;
  double max_rotation_deg = 180.0;
  bool negative = false;
  std::string dir = ".";
};

int cmd_synth(const SynthArgs& a, const PipelineConfig& cfg, const std::string& out) {
  SceneSpec spec;
  spec.preset = a.preset;
  spec.seed = a.seed;
  spec.overlap = a.overlap;
  spec.max_rotation_deg = a.max_rotation_deg;
  if (a.noise) spec.noise_sigma = *a.noise;
  if (a.noise_fraction) spec.noise_voxel_fraction = *a.noise_fraction;
  spec.validate();
  const auto pair = a.negative ? generate_negative_pair(spec, cfg) : generate_pair(spec, cfg);
  std::filesystem::create_directories(a.dir);
  const auto src = (std::filesystem::path(a.dir) / "source.ply").string();
  const auto dst = (std::filesystem::path(a.dir) / "target.ply").string();
  save_cloud(pair.p, src);
  save_cloud(pair.q, dst);
  nlohmann::json doc = {{"source", src},
                        {"target", dst},
                        {"source_points", pair.p.size()},
                        {"target_points", pair.q.size()},
                        {"t_gt", to_json(pair.t_gt)},
                        {"noise_sigma", pair.noise_sigma},
                        {"overlap", pair.overlap},
                        {"tau_trans", pair.thresholds.translation_m},
                        {"tau_rot", pair.thresholds.rotation_deg},
                        {"scene", to_json(spec)}};
  emit(doc, out);
  std::cerr << "wrote " << src << " (" << pair.p.size() << ") and " << dst << " (" << pair.q.size() << ")\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Training-free point cloud registration"};
  app.require_subcommand(1);
  // Config keys h, w, d become --h, --w, --d, which clash with -h.
  app.set_help_flag("--help", "print this help message and exit");

  std::string mode = "full", out;

  auto* reg = app.add_subcommand("register", "estimate T with T * source ~ target");
  std::string src, dst;
  ConfigFlags reg_flags;
  reg->add_option("source", src, "source cloud (.ply or KITTI .bin)")->required();
  reg->add_option("target", dst, "target cloud (.ply or KITTI .bin)")->required();
  reg->add_option("--mode", mode, "full or lite")->check(CLI::IsMember({"full", "lite"}));
  reg->add_option("--out", out, "write JSON here instead of stdout");
  reg_flags.attach(*reg);

  auto* bench = app.add_subcommand("benchmark", "synthetic benchmark with planted ground truth");
  BenchArgs bargs;
  ConfigFlags bench_flags;
  bench->add_option("spec", bargs.spec_path, "benchmark spec JSON");
  bench->add_option("--preset", bargs.preset, "object, indoor, outdoor or mixed")
      ->check(CLI::IsMember({"object", "indoor", "outdoor", "mixed"}));
  bench->add_option("--pairs", bargs.pairs, "number of pairs for a preset")->check(CLI::PositiveNumber);
  bench->add_option("--overlap", bargs.overlap, "target overlap for a preset");
  bench->add_option("--noise-voxel-fraction", bargs.noise_fraction, "noise sigma as a fraction of v");
  bench->add_option("--csv", bargs.csv, "per-pair CSV path (default: next to --out)");
  bench->add_option("--mode", mode, "full or lite")->check(CLI::IsMember({"full", "lite"}));
  bench->add_option("--out", out, "write the JSON report here instead of stdout");
  bench_flags.attach(*bench);

  auto* synth = app.add_subcommand("synth", "write one synthetic pair as PLY files");
  SynthArgs sargs;
  ConfigFlags synth_flags;
  synth->add_option("--preset", sargs.preset, "object, indoor or outdoor")
      ->check(CLI::IsMember({"object", "indoor", "outdoor"}));
  synth->add_option("--scene-seed", sargs.seed, "scene seed");
  synth->add_option("--overlap", sargs.overlap, "target overlap");
  synth->add_option("--noise", sargs.noise, "noise sigma in meters");
  synth->add_option("--noise-voxel-fraction", sargs.noise_fraction, "noise sigma as a fraction of v");
  synth->add_option("--max-rotation-deg", sargs.max_rotation_deg, "largest rotation angle");
  synth->add_flag("--negative", sargs.negative, "target from an unrelated scene");
  synth->add_option("--dir", sargs.dir, "output directory");
  synth->add_option("--out", out, "write JSON here instead of stdout");
  synth_flags.attach(*synth);

  auto* inspect = app.add_subcommand("inspect", "bootstrapping diagnostics for one cloud");
  std::string cloud_path;
  ConfigFlags inspect_flags;
  inspect->add_option("cloud", cloud_path, "cloud (.ply or KITTI .bin)")->required();
  inspect->add_option("--out", out, "write JSON here instead of stdout");
  inspect_flags.attach(*inspect);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (reg->parsed()) return cmd_register(src, dst, reg_flags.resolve(*reg), mode, out);
    if (bench->parsed()) {
      if (!bargs.spec_path.empty() && !bargs.preset.empty()) {
        throw Error(ErrorKind::kInvalidArgument, "give either a spec file or --preset, not both");
      }
      return cmd_benchmark(bargs, bench_flags.resolve(*bench), mode, out);
    }
    if (synth->parsed()) return cmd_synth(sargs, synth_flags.resolve(*synth), out);
    if (inspect->parsed()) return cmd_inspect(cloud_path, inspect_flags.resolve(*inspect), out);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
