#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "skelbridge/ad/checkpoint.hpp"
#include "skelbridge/geom/ply_io.hpp"
#include "skelbridge/shapes/dataset.hpp"
#include "skelbridge/train/eval.hpp"
#include "skelbridge/train/trainer.hpp"

namespace fs = std::filesystem;
using namespace skelbridge;
using ordered_json = nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

int resolve_threads(int flag_value) {
  if (flag_value > 0) return flag_value;
  if (const char* env = std::getenv("SKELBRIDGE_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

void write_run_manifest(const std::string& path, const std::string& command,
                        const ordered_json& config_snapshot,
                        const std::vector<std::pair<std::string, std::string>>& input_hashes,
                        const std::vector<std::string>& outputs,
                        const ordered_json& extra = ordered_json::object()) {
  ordered_json j;
  j["schema"] = "skelbridge-run-v1";
  j["command"] = command;
  j["config"] = config_snapshot;
  for (const auto& [name, hash] : input_hashes) j["inputs"][name] = hash;
  j["outputs"] = outputs;
  if (!extra.empty()) j["notes"] = extra;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write run manifest: " + path);
  out << j.dump(2) << "\n";
}

net::NetConfig net_config_from_meta(const std::string& ckpt_path) {
  const std::string meta_path = ckpt_path + ".meta.json";
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(read_file(meta_path));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("cannot parse checkpoint meta " + meta_path + ": " + e.what());
  }
  if (!meta.contains("net")) throw IoError("checkpoint meta lacks a net config: " + meta_path);
  return net::NetConfig::from_json_text(meta.at("net").dump());
}

int cmd_gen_data(const std::string& config_path, const std::string& out_dir,
                 std::optional<std::uint64_t> seed) {
  shapes::DatasetConfig cfg = shapes::DatasetConfig::from_json_text(read_file(config_path));
  if (seed) cfg.seed = *seed;
  const shapes::Manifest manifest = shapes::generate_dataset(cfg, out_dir);

  std::vector<std::string> outputs = {"dataset.json"};
  for (const auto& s : manifest.shapes) {
    outputs.push_back(s.surface_path);
    outputs.push_back(s.skeleton_path);
  }
  for (const auto& s : manifest.samples) outputs.push_back(s.partial_path);
  write_run_manifest((fs::path(out_dir) / "run_manifest.json").string(), "gen-data",
                     ordered_json::parse(cfg.to_json_text()),
                     {{config_path, fnv1a_hex(read_file(config_path))}}, outputs);
  std::cout << "generated " << manifest.shapes.size() << " shapes, "
            << manifest.samples.size() << " samples under " << out_dir << "\n";
  return kExitOk;
}

void apply_ablation(train::TrainConfig& cfg, const std::string& ablation) {
  if (ablation.empty() || ablation == "full") {
    cfg.net.attention = true;
    cfg.net.adjust = true;
    cfg.adversarial = true;
  } else if (ablation == "c1") {
    cfg.net.attention = false;
    cfg.net.adjust = false;
    cfg.adversarial = false;
  } else if (ablation == "c2") {
    cfg.net.attention = false;
    cfg.net.adjust = true;
    cfg.adversarial = true;
  } else if (ablation == "c3") {
    cfg.net.attention = true;
    cfg.net.adjust = false;
    cfg.adversarial = false;
  } else {
    throw ConfigError("unknown ablation '" + ablation + "' (expected c1|c2|c3|full)");
  }
}

int cmd_train(const std::string& data_dir, const std::string& config_path,
              const std::string& out_dir, const std::string& ablation,
              std::optional<std::uint64_t> seed, std::optional<int> epochs, int threads,
              const std::string& resume) {
  train::TrainConfig cfg = train::TrainConfig::from_json_text(read_file(config_path));
  if (seed) cfg.seed = *seed;
  if (epochs) cfg.epochs = *epochs;
  cfg.threads = threads;
  apply_ablation(cfg, ablation);
  cfg.validate();

  const std::string manifest_path = (fs::path(data_dir) / "dataset.json").string();
  if (!fs::exists(manifest_path))
    throw IoError("dataset manifest not found: " + manifest_path);

  const train::Dataset data = train::load_dataset(data_dir, cfg.net);

  int start_epoch = 0;
  std::optional<net::ParamStore> initial;
  if (!resume.empty()) {
    initial = train::load_params_checked(resume, cfg.net);
    nlohmann::json meta = nlohmann::json::parse(read_file(resume + ".meta.json"));
    start_epoch = meta.value("epochs_completed", 0);
  }

  fs::create_directories(out_dir);
  const train::TrainResult result =
      train::train_staged(data, cfg, out_dir, start_epoch, initial ? &*initial : nullptr);
  const std::string log_path = (fs::path(out_dir) / "runlog.csv").string();
  result.log.write_csv(log_path);

  std::vector<std::string> outputs = {"runlog.csv"};
  for (const auto& [label, path] : result.checkpoints)
    outputs.push_back(fs::path(path).filename().string());
  write_run_manifest((fs::path(out_dir) / "run_manifest.json").string(), "train",
                     ordered_json::parse(cfg.to_json_text()),
                     {{config_path, fnv1a_hex(read_file(config_path))},
                      {manifest_path, fnv1a_hex(read_file(manifest_path))}},
                     outputs);
  std::cout << "trained " << result.log.rows.size() << " epochs; checkpoints in " << out_dir
            << "\n";
  return kExitOk;
}

int cmd_eval(const std::string& data_dir, const std::string& ckpt_path,
             const std::string& out_csv, bool oracle, int threads) {
  net::NetConfig cfg;
  net::ParamStore params;
  if (oracle && ckpt_path.empty()) {
    const shapes::Manifest manifest =
        shapes::Manifest::load((fs::path(data_dir) / "dataset.json").string());
    cfg.n_points = manifest.config.n_points;
    Rng rng(0);
    params = net::init_params(cfg, rng);
  } else {
    cfg = net_config_from_meta(ckpt_path);
    params = train::load_params_checked(ckpt_path, cfg);
  }

  const train::Dataset data = train::load_dataset(data_dir, cfg);
  const std::vector<train::TrainSample>& samples =
      data.test.empty() ? data.val : data.test;
  if (samples.empty()) throw IoError("dataset has no test or val samples to evaluate");

  train::EvalOptions opts;
  opts.threads = threads;
  opts.oracle = oracle;
  const metrics::EvalReport report = train::evaluate(samples, params, cfg, opts);
  report.write_csv(out_csv);
  std::cout << report.format_table();

  write_run_manifest(out_csv + ".manifest.json", "eval",
                     ordered_json::parse(cfg.to_json_text()),
                     {{ckpt_path.empty() ? "(oracle)" : ckpt_path,
                       ckpt_path.empty() ? "-" : fnv1a_hex(read_file(ckpt_path))}},
                     {out_csv}, ordered_json{{"oracle", oracle}});
  return kExitOk;
}

int cmd_complete(const std::string& ckpt_path, const std::string& in_ply,
                 const std::string& out_dir) {
  const net::NetConfig cfg = net_config_from_meta(ckpt_path);
  const net::ParamStore params = train::load_params_checked(ckpt_path, cfg);

  const geom::PlyContents scan = geom::read_ply(in_ply);
  if (scan.pts.rows() < cfg.n_points)
    throw IoError("input scan has " + std::to_string(scan.pts.rows()) +
                  " points; the model needs at least " + std::to_string(cfg.n_points));
  Mat3 pts = scan.pts;
  Mat3 normals;
  bool estimated = false;
  if (static_cast<int>(pts.rows()) > cfg.n_points) {
    const std::vector<int> idx = geom::farthest_point_sample(pts, cfg.n_points, 0);
    Mat3 sub(cfg.n_points, 3);
    Mat3 subn(cfg.n_points, 3);
    for (int i = 0; i < cfg.n_points; ++i) {
      sub.row(i) = pts.row(idx[i]);
      if (scan.has_normals()) subn.row(i) = scan.normals->row(idx[i]);
    }
    pts = sub;
    if (scan.has_normals()) normals = subn;
  } else if (scan.has_normals()) {
    normals = *scan.normals;
  }
  if (normals.rows() == 0) {
    normals = net::estimate_normals(pts, 8);
    estimated = true;
  }
  for (Eigen::Index i = 0; i < normals.rows(); ++i) {
    const double len = normals.row(i).norm();
    if (len > 1e-12) normals.row(i) /= len;
    else normals.row(i) = Vec3(0, 0, 1);
  }
  const geom::OrientedPointCloud partial{pts, normals};

  ad::Graph g;
  net::Bound bound(g, params);
  const net::GeneratorOutput out = net::generator_forward(g, partial, bound, cfg);

  fs::create_directories(out_dir);
  const std::string skel_path = (fs::path(out_dir) / "skeleton.ply").string();
  const std::string raw_path = (fs::path(out_dir) / "surface_raw.ply").string();
  const std::string refined_path = (fs::path(out_dir) / "surface_refined.ply").string();
  geom::write_ply(skel_path, out.skeleton.val());
  geom::write_ply(raw_path, out.raw.pos.val(), out.raw.normals.val());
  geom::write_ply(refined_path, out.refined.pos.val(), out.refined.normals.val());

  write_run_manifest((fs::path(out_dir) / "run_manifest.json").string(), "complete",
                     ordered_json::parse(cfg.to_json_text()),
                     {{ckpt_path, fnv1a_hex(read_file(ckpt_path))},
                      {in_ply, fnv1a_hex(read_file(in_ply))}},
                     {"skeleton.ply", "surface_raw.ply", "surface_refined.ply"},
                     ordered_json{{"normals", estimated ? "knn-plane-fit" : "from-input"}});
  std::cout << "wrote " << skel_path << ", " << raw_path << ", " << refined_path << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"skeleton-bridged point cloud completion"};
  app.require_subcommand(1);

  std::string config_path, data_dir, out_path, ckpt_path, in_ply, ablation, resume;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
  int threads = 0;
  bool oracle = false;

  CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  gen->add_option("--config", config_path, "dataset config JSON")->required();
  gen->add_option("--out", out_path, "output directory")->required();
  gen->add_option("--seed", seed, "override the config seed");

  CLI::App* tr = app.add_subcommand("train", "staged training");
  tr->add_option("--data", data_dir, "dataset directory")->required();
  tr->add_option("--config", config_path, "train config JSON")->required();
  tr->add_option("--out", out_path, "output directory")->required();
  tr->add_option("--ablation", ablation, "c1|c2|c3|full");
  tr->add_option("--seed", seed, "override the config seed");
  tr->add_option("--epochs", epochs, "override the config epoch count");
  tr->add_option("--threads", threads, "worker cap (or SKELBRIDGE_THREADS)");
  tr->add_option("--resume", resume, "checkpoint to resume from");

  CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  ev->add_option("--data", data_dir, "dataset directory")->required();
  ev->add_option("--ckpt", ckpt_path, "checkpoint path");
  ev->add_option("--out", out_path, "report CSV path")->required();
  ev->add_flag("--oracle", oracle, "score the ground truth against itself");
  ev->add_option("--threads", threads, "worker cap (or SKELBRIDGE_THREADS)");

  CLI::App* co = app.add_subcommand("complete", "complete a single scan");
  co->add_option("--ckpt", ckpt_path, "checkpoint path")->required();
  co->add_option("--in", in_ply, "input scan PLY")->required();
  co->add_option("--out", out_path, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_data(config_path, out_path, seed);
    if (tr->parsed())
      return cmd_train(data_dir, config_path, out_path, ablation, seed, epochs,
                       resolve_threads(threads), resume);
    if (ev->parsed()) {
      if (!oracle && ckpt_path.empty()) throw ConfigError("eval requires --ckpt or --oracle");
      return cmd_eval(data_dir, ckpt_path, out_path, oracle, resolve_threads(threads));
    }
    if (co->parsed()) return cmd_complete(ckpt_path, in_ply, out_path);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ParseError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const IoError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const NumericError& e) {
    std::cerr << "numeric abort: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitOk;
}
