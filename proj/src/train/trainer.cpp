#include "skelbridge/train/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <thread>

#include <nlohmann/json.hpp>

#include "skelbridge/ad/checkpoint.hpp"
#include "skelbridge/ad/optim.hpp"
#include "skelbridge/geom/ply_io.hpp"
#include "skelbridge/train/schedule.hpp"

namespace skelbridge::train {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
  if (batch < 1) throw ConfigError("train: batch must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("train: lr must be positive");
  if (plateau_patience < 1) throw ConfigError("train: plateau_patience must be >= 1");
  if (!(plateau_factor > 0.0 && plateau_factor < 1.0))
    throw ConfigError("train: plateau_factor must lie in (0,1)");
  if (!(lr_floor > 0.0)) throw ConfigError("train: lr_floor must be positive");
  double total = 0.0;
  for (double f : stage_fractions) {
    if (f < 0.0) throw ConfigError("train: stage_fractions must be non-negative");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("train: stage_fractions must sum to 1");
  if (threads < 0) throw ConfigError("train: threads must be >= 0");
  if (weights.lambda_k < 0 || weights.lambda_s < 0 || weights.lambda_m < 0 ||
      weights.lambda_n < 0 || weights.lambda_r < 0 || weights.lambda_g < 0)
    throw ConfigError("train: loss weights must be non-negative");
  if (!(repulsion.d > 0.0)) throw ConfigError("train: repulsion.d must be positive");
  if (repulsion.k < 1) throw ConfigError("train: repulsion.k must be >= 1");
  net.validate();
}

std::array<int, 4> TrainConfig::stage_epochs() const {
  std::array<int, 4> e{};
  const int e0 = static_cast<int>(std::floor(stage_fractions[0] * epochs));
  const int e1 = static_cast<int>(std::floor(stage_fractions[1] * epochs));
  const int e2 = static_cast<int>(std::floor(stage_fractions[2] * epochs));
  e[0] = e0;
  e[1] = e1;
  e[2] = net.adjust ? e2 : 0;  // skipped, not redistributed
  e[3] = std::max(0, epochs - e0 - e1 - e2);
  return e;
}

namespace {

void require_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                  const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key()))
      throw ConfigError("unknown key '" + it.key() + "' in " + where);
}

}  // namespace

TrainConfig TrainConfig::from_json_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config is not valid JSON: ") + e.what());
  }
  require_keys(j,
               {"epochs", "batch", "lr", "plateau_patience", "plateau_factor", "lr_floor",
                "stage_fractions", "seed", "adversarial", "threads", "weights", "repulsion",
                "net"},
               "train config");
  TrainConfig c;
  try {
    if (j.contains("epochs")) c.epochs = j.at("epochs").get<int>();
    if (j.contains("batch")) c.batch = j.at("batch").get<int>();
    if (j.contains("lr")) c.lr = j.at("lr").get<double>();
    if (j.contains("plateau_patience")) c.plateau_patience = j.at("plateau_patience").get<int>();
    if (j.contains("plateau_factor")) c.plateau_factor = j.at("plateau_factor").get<double>();
    if (j.contains("lr_floor")) c.lr_floor = j.at("lr_floor").get<double>();
    if (j.contains("stage_fractions")) {
      auto v = j.at("stage_fractions").get<std::vector<double>>();
      if (v.size() != 4) throw ConfigError("train: stage_fractions must have 4 entries");
      for (int i = 0; i < 4; ++i) c.stage_fractions[i] = v[i];
    }
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("adversarial")) c.adversarial = j.at("adversarial").get<bool>();
    if (j.contains("threads")) c.threads = j.at("threads").get<int>();
    if (j.contains("weights")) {
      const auto& w = j.at("weights");
      require_keys(w, {"lambda_k", "lambda_s", "lambda_m", "lambda_n", "lambda_r", "lambda_g"},
                   "train config field 'weights'");
      if (w.contains("lambda_k")) c.weights.lambda_k = w.at("lambda_k").get<double>();
      if (w.contains("lambda_s")) c.weights.lambda_s = w.at("lambda_s").get<double>();
      if (w.contains("lambda_m")) c.weights.lambda_m = w.at("lambda_m").get<double>();
      if (w.contains("lambda_n")) c.weights.lambda_n = w.at("lambda_n").get<double>();
      if (w.contains("lambda_r")) c.weights.lambda_r = w.at("lambda_r").get<double>();
      if (w.contains("lambda_g")) c.weights.lambda_g = w.at("lambda_g").get<double>();
    }
    if (j.contains("repulsion")) {
      const auto& r = j.at("repulsion");
      require_keys(r, {"d", "k"}, "train config field 'repulsion'");
      if (r.contains("d")) c.repulsion.d = r.at("d").get<double>();
      if (r.contains("k")) c.repulsion.k = r.at("k").get<int>();
    }
    if (j.contains("net")) c.net = net::NetConfig::from_json_text(j.at("net").dump());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config field has the wrong type: ") + e.what());
  }
  c.validate();
  return c;
}

std::string TrainConfig::to_json_text() const {
  nlohmann::ordered_json j;
  j["epochs"] = epochs;
  j["batch"] = batch;
  j["lr"] = lr;
  j["plateau_patience"] = plateau_patience;
  j["plateau_factor"] = plateau_factor;
  j["lr_floor"] = lr_floor;
  j["stage_fractions"] = std::vector<double>(stage_fractions.begin(), stage_fractions.end());
  j["seed"] = seed;
  j["adversarial"] = adversarial;
  j["threads"] = threads;
  j["weights"] = {{"lambda_k", weights.lambda_k}, {"lambda_s", weights.lambda_s},
                  {"lambda_m", weights.lambda_m}, {"lambda_n", weights.lambda_n},
                  {"lambda_r", weights.lambda_r}, {"lambda_g", weights.lambda_g}};
  j["repulsion"] = {{"d", repulsion.d}, {"k", repulsion.k}};
  j["net"] = nlohmann::json::parse(net.to_json_text());
  return j.dump(2);
}

void RunLog::write_csv(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write run log: " + path);
  out << "epoch,stage,l_pk,l_ps,l_psm,l_g,l_d,val_loss,lr,seconds\n";
  char buf[512];
  auto field = [](double v, char* b, std::size_t n) {
    if (std::isnan(v)) {
      b[0] = '\0';
      return;
    }
    std::snprintf(b, n, "%.17g", v);
  };
  for (const EpochLog& r : rows) {
    char f[5][64];
    field(r.l_pk, f[0], 64);
    field(r.l_ps, f[1], 64);
    field(r.l_psm, f[2], 64);
    field(r.l_g, f[3], 64);
    field(r.l_d, f[4], 64);
    std::snprintf(buf, sizeof buf, "%d,%d,%s,%s,%s,%s,%s,%.17g,%.17g,%.3f\n", r.epoch,
                  r.stage, f[0], f[1], f[2], f[3], f[4], r.val_loss, r.lr, r.seconds);
    out << buf;
  }
  if (!out) throw IoError("run log write failed: " + path);
}

Dataset load_dataset(const std::string& dir, const net::NetConfig& net_cfg) {
  const shapes::Manifest manifest = shapes::Manifest::load((fs::path(dir) / "dataset.json").string());
  if (manifest.config.n_points != net_cfg.n_points)
    throw ConfigError("dataset N=" + std::to_string(manifest.config.n_points) +
                      " does not match net n_points=" + std::to_string(net_cfg.n_points));

  struct ShapeData {
    std::shared_ptr<const geom::OrientedPointCloud> surface;
    std::shared_ptr<const Mat3> skeleton;
    std::shared_ptr<const geom::SpatialIndex> surface_index;
    std::shared_ptr<const geom::SpatialIndex> skeleton_index;
  };
  std::map<std::string, ShapeData> by_surface_path;

  Dataset ds;
  for (const shapes::SampleRecord& rec : manifest.samples) {
    auto it = by_surface_path.find(rec.surface_path);
    if (it == by_surface_path.end()) {
      ShapeData sd;
      auto surf = std::make_shared<geom::OrientedPointCloud>(
          geom::read_ply((fs::path(dir) / rec.surface_path).string()).as_oriented());
      surf->validate();
      if (surf->count() != 4 * net_cfg.n_points)
        throw ConfigError("surface " + rec.surface_path + " has " +
                          std::to_string(surf->count()) + " points, expected " +
                          std::to_string(4 * net_cfg.n_points));
      auto skel = std::make_shared<Mat3>(
          geom::read_ply((fs::path(dir) / rec.skeleton_path).string()).pts);
      sd.surface_index = std::make_shared<geom::SpatialIndex>(surf->pts);
      sd.skeleton_index = std::make_shared<geom::SpatialIndex>(*skel);
      sd.surface = std::move(surf);
      sd.skeleton = std::move(skel);
      it = by_surface_path.emplace(rec.surface_path, std::move(sd)).first;
    }
    const ShapeData& sd = it->second;

    TrainSample s;
    s.id = rec.id;
    s.family = rec.family;
    Mat3 partial_pts = geom::read_ply((fs::path(dir) / rec.partial_path).string()).pts;
    if (partial_pts.rows() != net_cfg.n_points)
      throw ConfigError("partial " + rec.partial_path + " has " +
                        std::to_string(partial_pts.rows()) + " points, expected " +
                        std::to_string(net_cfg.n_points));
    // partial points are copies of gt surface points; recover their normals
    Mat3 normals(partial_pts.rows(), 3);
    std::vector<int> idx;
    std::vector<double> dist;
    for (Eigen::Index i = 0; i < partial_pts.rows(); ++i) {
      sd.surface_index->knn(partial_pts.row(i), 1, idx, dist);
      if (dist[0] > 1e-6)
        throw IoError("partial point in " + rec.partial_path +
                      " is not on the ground-truth surface");
      normals.row(i) = sd.surface->normals.row(idx[0]);
    }
    s.partial = geom::OrientedPointCloud{std::move(partial_pts), std::move(normals)};
    s.gt_surface = sd.surface;
    s.gt_skeleton = sd.skeleton;
    s.gt_surface_index = sd.surface_index;
    s.gt_skeleton_index = sd.skeleton_index;
    s.scan_plan = std::make_shared<net::PyramidPlan>(net::plan_pyramid(s.partial.pts, net_cfg));

    if (rec.split == "train") ds.train.push_back(std::move(s));
    else if (rec.split == "val") ds.val.push_back(std::move(s));
    else ds.test.push_back(std::move(s));
  }
  return ds;
}

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

struct StepResult {
  std::map<std::string, MatX> grads;
  double objective = 0.0;
  double l_pk = kNan, l_ps = kNan, l_psm = kNan, l_g = kNan;
  Mat3 refined_pos, refined_nrm;
  std::vector<int> disc_seeds;
};

template <class Fn>
void parallel_for(int count, int threads, Fn&& fn) {
  threads = std::max(1, std::min(threads, count));
  if (threads == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int w = 0; w < threads; ++w) {
    pool.emplace_back([&, w]() {
      try {
        for (int i = w; i < count; i += threads) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (std::thread& t : pool) t.join();
  for (const std::exception_ptr& e : errors)
    if (e) std::rethrow_exception(e);
}

class Trainer {
 public:
  Trainer(const Dataset& data, const TrainConfig& cfg, const std::string& out_dir)
      : data_(data), cfg_(cfg), out_dir_(out_dir) {
    threads_ = cfg.threads > 0 ? cfg.threads
                               : std::max(1u, std::thread::hardware_concurrency());
  }

  TrainResult run(int start_epoch, const net::ParamStore* initial) {
    Rng init_rng(cfg_.seed);
    params_ = initial ? *initial : net::init_params(cfg_.net, init_rng);

    TrainResult result;
    const std::array<int, 4> stage_len = cfg_.stage_epochs();
    int stage_end[4];
    int acc = 0;
    for (int s = 0; s < 4; ++s) {
      acc += stage_len[s];
      stage_end[s] = acc;
    }
    const int total_epochs = acc;

    int current_stage = 0;  // 1..4 once entered
    double best_val = std::numeric_limits<double>::infinity();
    fs::create_directories(out_dir_);

    for (int epoch = start_epoch; epoch < total_epochs; ++epoch) {
      int stage = 4;
      for (int s = 0; s < 4; ++s)
        if (epoch < stage_end[s]) {
          stage = s + 1;
          break;
        }
      if (stage != current_stage) {
        enter_stage(stage, result);
        current_stage = stage;
      }

      const auto t0 = std::chrono::steady_clock::now();
      EpochLog row{};
      row.epoch = epoch + 1;
      row.stage = stage;
      row.lr = lr_;
      train_epoch(stage, epoch, row);
      row.val_loss = evaluate_split(stage, data_.val.empty() ? data_.train : data_.val);
      if (!std::isfinite(row.val_loss))
        throw NumericError("training divergence: non-finite validation loss (last good "
                           "checkpoint: " + last_path() + ")");
      lr_ = lr_on_plateau(plateau_, row.val_loss, lr_, cfg_.plateau_factor,
                          cfg_.plateau_patience, cfg_.lr_floor);
      row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      result.log.rows.push_back(row);

      epochs_completed_ = epoch + 1;
      save(last_path());
      if (stage == 4 && row.val_loss < best_val) {
        best_val = row.val_loss;
        save((fs::path(out_dir_) / "best.ckpt").string());
        result.checkpoints["best"] = (fs::path(out_dir_) / "best.ckpt").string();
      }
      if (epoch + 1 == stage_end[stage - 1]) {
        const std::string p =
            (fs::path(out_dir_) / ("stage" + std::to_string(stage) + ".ckpt")).string();
        save(p);
        result.checkpoints["stage" + std::to_string(stage)] = p;
      }
    }

    const std::string final_path = (fs::path(out_dir_) / "final.ckpt").string();
    save(final_path);
    result.checkpoints["final"] = final_path;
    if (!result.checkpoints.count("best")) {
      save((fs::path(out_dir_) / "best.ckpt").string());
      result.checkpoints["best"] = (fs::path(out_dir_) / "best.ckpt").string();
    }
    result.params = params_;
    return result;
  }

 private:
  std::string last_path() const { return (fs::path(out_dir_) / "last.ckpt").string(); }

  void save(const std::string& path) const {
    ad::save_checkpoint(path, params_);
    nlohmann::ordered_json meta;
    meta["schema"] = "skelbridge-checkpoint-meta-v1";
    meta["epochs_completed"] = epochs_completed_;
    meta["net"] = nlohmann::json::parse(cfg_.net.to_json_text());
    meta["train"] = nlohmann::json::parse(cfg_.to_json_text());
    std::ofstream out(path + ".meta.json", std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint meta: " + path + ".meta.json");
    out << meta.dump(2) << "\n";
  }

  void enter_stage(int stage, TrainResult& result) {
    (void)result;
    net::set_trainable(params_, net::stage_prefixes(stage));
    adam_ = ad::Adam();
    adam_d_ = ad::Adam();
    lr_ = cfg_.lr;
    plateau_ = PlateauState{};
    if (stage == 2) {
      build_skeleton_cache(data_.train, skel_train_);
      build_skeleton_cache(data_.val, skel_val_);
    } else if (stage == 3) {
      build_raw_cache(data_.train, raw_train_);
      build_raw_cache(data_.val, raw_val_);
    }
  }

  void build_skeleton_cache(const std::vector<TrainSample>& samples,
                            std::vector<Mat3>& cache) {
    cache.assign(samples.size(), Mat3());
    parallel_for(static_cast<int>(samples.size()), threads_, [&](int i) {
      ad::Graph g;
      net::Bound bound(g, params_);
      auto [feats, pyr] = net::msfa_encode(g, g.constant(samples[i].partial.pts),
                                           *samples[i].scan_plan, bound, "skel_enc",
                                           cfg_.net);
      cache[i] = net::skeleton_head(g, feats, bound, cfg_.net).val();
    });
  }

  void build_raw_cache(const std::vector<TrainSample>& samples,
                       std::vector<std::pair<Mat3, Mat3>>& cache) {
    cache.assign(samples.size(), {});
    parallel_for(static_cast<int>(samples.size()), threads_, [&](int i) {
      ad::Graph g;
      net::Bound bound(g, params_);
      const ad::Value scan = g.constant(samples[i].partial.pts);
      auto [feats, pyr] =
          net::msfa_encode(g, scan, *samples[i].scan_plan, bound, "skel_enc", cfg_.net);
      const ad::Value skel = net::skeleton_head(g, feats, bound, cfg_.net);
      const ad::Value fused =
          net::fuse(g, skel, scan, *samples[i].scan_plan, bound, cfg_.net);
      net::DisplacementOut disp = net::displacement_head(g, skel, fused, bound, cfg_.net);
      cache[i] = {disp.out.pos.val(), disp.out.normals.val()};
    });
  }

  StepResult run_sample(int stage, const TrainSample& s, const Mat3* cached_skel,
                        const std::pair<Mat3, Mat3>* cached_raw, bool with_grads,
                        std::uint64_t rng_salt) {
    ad::Graph g;
    net::Bound bound(g, params_);
    StepResult r;
    ad::Value loss;
    const losses::LossWeights& w = cfg_.weights;

    switch (stage) {
      case 1: {
        auto [feats, pyr] = net::msfa_encode(g, g.constant(s.partial.pts), *s.scan_plan,
                                             bound, "skel_enc", cfg_.net);
        const ad::Value pk = net::skeleton_head(g, feats, bound, cfg_.net);
        const ad::Value lpk =
            losses::point_loss(g, {pk, pk}, {*s.gt_skeleton, Mat3()}, w, cfg_.repulsion,
                               false, s.gt_skeleton_index.get());
        r.l_pk = lpk.val()(0, 0);
        loss = ad::scale(lpk, w.lambda_k);
        break;
      }
      case 2: {
        const ad::Value scan = g.constant(s.partial.pts);
        const ad::Value skel = g.constant(*cached_skel);
        const ad::Value fused = net::fuse(g, skel, scan, *s.scan_plan, bound, cfg_.net);
        net::DisplacementOut disp = net::displacement_head(g, skel, fused, bound, cfg_.net);
        const ad::Value lps = losses::point_loss(g, disp.out, *s.gt_surface, w,
                                                 cfg_.repulsion, true,
                                                 s.gt_surface_index.get());
        r.l_ps = lps.val()(0, 0);
        loss = ad::scale(lps, w.lambda_s);
        break;
      }
      case 3: {
        const losses::OrientedValue pred{g.constant(cached_raw->first),
                                         g.constant(cached_raw->second)};
        net::AdjustOut adj = net::surface_adjust(g, s.partial, pred, bound, cfg_.net);
        const ad::Value lpsm = losses::point_loss(g, adj.out, *s.gt_surface, w,
                                                  cfg_.repulsion, true,
                                                  s.gt_surface_index.get());
        r.l_psm = lpsm.val()(0, 0);
        loss = ad::scale(lpsm, w.lambda_m);
        break;
      }
      case 4: {
        net::GeneratorOutput out =
            net::generator_forward(g, s.partial, bound, cfg_.net, s.scan_plan.get());
        const ad::Value lpk =
            losses::point_loss(g, {out.skeleton, out.skeleton}, {*s.gt_skeleton, Mat3()}, w,
                               cfg_.repulsion, false, s.gt_skeleton_index.get());
        const ad::Value lps = losses::point_loss(g, out.raw, *s.gt_surface, w,
                                                 cfg_.repulsion, true,
                                                 s.gt_surface_index.get());
        const ad::Value lpsm =
            cfg_.net.adjust ? losses::point_loss(g, out.refined, *s.gt_surface, w,
                                                 cfg_.repulsion, true,
                                                 s.gt_surface_index.get())
                            : lps;
        r.l_pk = lpk.val()(0, 0);
        r.l_ps = lps.val()(0, 0);
        r.l_psm = lpsm.val()(0, 0);
        loss = ad::add(ad::add(ad::scale(lpk, w.lambda_k), ad::scale(lps, w.lambda_s)),
                       ad::scale(lpsm, w.lambda_m));
        if (cfg_.adversarial && with_grads) {
          Rng disc_rng(cfg_.seed ^ (rng_salt * 0x9E3779B97F4A7C15ull + 0x1234ABCDull));
          net::DiscriminatorOut disc =
              net::discriminate(g, s.partial.pts, out.refined, bound, cfg_.net, disc_rng);
          const ad::Value lg = losses::lsgan_generator(g, disc.scores);
          r.l_g = lg.val()(0, 0);
          loss = ad::add(loss, ad::scale(lg, w.lambda_g));
          r.disc_seeds = disc.seeds;
          r.refined_pos = out.refined.pos.val();
          r.refined_nrm = out.refined.normals.val();
        }
        break;
      }
      default:
        throw InvalidInputError("run_sample: bad stage");
    }

    r.objective = loss.val()(0, 0);
    if (!std::isfinite(r.objective))
      throw NumericError("training divergence: non-finite loss for sample " + s.id +
                         " (last good checkpoint: " + last_path() + ")");
    if (with_grads) {
      g.backward(loss);
      for (const auto& [name, value] : bound.bound())
        if (params_.at(name).requires_grad) r.grads.emplace(name, g.grad(value));
    }
    return r;
  }

  double disc_step(const std::vector<int>& ids, const std::vector<StepResult>& gen_results) {
    std::vector<StepResult> results(ids.size());
    parallel_for(static_cast<int>(ids.size()), threads_, [&](int slot) {
      const TrainSample& s = data_.train[ids[slot]];
      const StepResult& gen = gen_results[slot];
      ad::Graph g;
      net::Bound bound(g, params_);
      Rng unused(0);
      const losses::OrientedValue fake{g.constant(gen.refined_pos),
                                       g.constant(gen.refined_nrm)};
      net::DiscriminatorOut fake_out = net::discriminate(
          g, s.partial.pts, fake, bound, cfg_.net, unused, &gen.disc_seeds);
      const losses::OrientedValue real{g.constant(s.gt_surface->pts),
                                       g.constant(s.gt_surface->normals)};
      net::DiscriminatorOut real_out = net::discriminate(
          g, s.partial.pts, real, bound, cfg_.net, unused, &gen.disc_seeds);
      const ad::Value ld = losses::lsgan_discriminator(g, fake_out.scores, real_out.scores);
      results[slot].objective = ld.val()(0, 0);
      g.backward(ld);
      for (const auto& [name, value] : bound.bound())
        if (name.rfind("disc/", 0) == 0) results[slot].grads.emplace(name, g.grad(value));
    });

    std::map<std::string, MatX> grads;
    double loss_sum = 0.0;
    for (const StepResult& r : results) {
      loss_sum += r.objective;
      for (const auto& [name, gmat] : r.grads) {
        auto it = grads.find(name);
        if (it == grads.end()) grads.emplace(name, gmat);
        else it->second += gmat;
      }
    }
    const double inv = 1.0 / static_cast<double>(ids.size());
    for (auto& [name, gmat] : grads) adam_d_.step(name, params_.at(name), gmat * inv, lr_);
    return loss_sum * inv;
  }

  void train_epoch(int stage, int epoch, EpochLog& row) {
    std::vector<int> order(data_.train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    Rng shuffle_rng(cfg_.seed * 1000003ull + static_cast<std::uint64_t>(epoch) + 7ull);
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i)
      std::swap(order[i], order[shuffle_rng.uniform_int(i + 1)]);

    double sums[5] = {0, 0, 0, 0, 0};
    long counts[5] = {0, 0, 0, 0, 0};
    auto tally = [&](int k, double v) {
      if (!std::isnan(v)) {
        sums[k] += v;
        ++counts[k];
      }
    };

    for (std::size_t base = 0; base < order.size(); base += cfg_.batch) {
      const std::size_t end = std::min(order.size(), base + cfg_.batch);
      std::vector<int> ids(order.begin() + base, order.begin() + end);
      std::vector<StepResult> results(ids.size());
      parallel_for(static_cast<int>(ids.size()), threads_, [&](int slot) {
        const int si = ids[slot];
        results[slot] = run_sample(
            stage, data_.train[si], stage == 2 ? &skel_train_[si] : nullptr,
            stage == 3 ? &raw_train_[si] : nullptr, true,
            static_cast<std::uint64_t>(epoch) * 1000003ull + static_cast<std::uint64_t>(si));
      });

      std::map<std::string, MatX> grads;
      for (const StepResult& r : results) {
        tally(0, r.l_pk);
        tally(1, r.l_ps);
        tally(2, r.l_psm);
        tally(3, r.l_g);
        for (const auto& [name, gmat] : r.grads) {
          auto it = grads.find(name);
          if (it == grads.end()) grads.emplace(name, gmat);
          else it->second += gmat;
        }
      }
      const double inv = 1.0 / static_cast<double>(ids.size());
      for (auto& [name, gmat] : grads) adam_.step(name, params_.at(name), gmat * inv, lr_);

      if (stage == 4 && cfg_.adversarial) tally(4, disc_step(ids, results));
    }

    row.l_pk = counts[0] ? sums[0] / counts[0] : kNan;
    row.l_ps = counts[1] ? sums[1] / counts[1] : kNan;
    row.l_psm = counts[2] ? sums[2] / counts[2] : kNan;
    row.l_g = counts[3] ? sums[3] / counts[3] : kNan;
    row.l_d = counts[4] ? sums[4] / counts[4] : kNan;
  }

  double evaluate_split(int stage, const std::vector<TrainSample>& samples) {
    if (samples.empty()) return 0.0;
    const bool is_val = !data_.val.empty() && samples.data() == data_.val.data();
    std::vector<double> vals(samples.size(), 0.0);
    parallel_for(static_cast<int>(samples.size()), threads_, [&](int i) {
      const Mat3* skel = stage == 2 ? (is_val ? &skel_val_[i] : &skel_train_[i]) : nullptr;
      const std::pair<Mat3, Mat3>* raw =
          stage == 3 ? (is_val ? &raw_val_[i] : &raw_train_[i]) : nullptr;
      vals[i] = run_sample(stage, samples[i], skel, raw, false, 0).objective;
    });
    double total = 0.0;
    for (double v : vals) total += v;
    return total / static_cast<double>(samples.size());
  }

  const Dataset& data_;
  TrainConfig cfg_;
  std::string out_dir_;
  int threads_ = 1;
  net::ParamStore params_;
  ad::Adam adam_, adam_d_;
  double lr_ = 1e-3;
  PlateauState plateau_;
  int epochs_completed_ = 0;
  std::vector<Mat3> skel_train_, skel_val_;
  std::vector<std::pair<Mat3, Mat3>> raw_train_, raw_val_;
};

}  // namespace

TrainResult train_staged(const Dataset& data, const TrainConfig& cfg,
                         const std::string& out_dir, int start_epoch,
                         const net::ParamStore* initial) {
  cfg.validate();
  if (data.train.empty()) throw InvalidInputError("train_staged: no training samples");
  Trainer trainer(data, cfg, out_dir);
  return trainer.run(start_epoch, initial);
}

}  // namespace skelbridge::train
