#include "skelbridge/train/eval.hpp"

#include <algorithm>
#include <thread>

#include "skelbridge/ad/checkpoint.hpp"

namespace skelbridge::train {

namespace {

Mat3 fps_subsample(const Mat3& pts, int k) {
  if (pts.rows() <= k) return pts;
  const std::vector<int> idx = geom::farthest_point_sample(pts, k, 0);
  Mat3 out(k, 3);
  for (int i = 0; i < k; ++i) out.row(i) = pts.row(idx[i]);
  return out;
}

template <class Fn>
void parallel_for(int count, int threads, Fn&& fn) {
  threads = std::max(1, std::min(threads, count));
  if (threads == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (int w = 0; w < threads; ++w)
    pool.emplace_back([&, w]() {
      try {
        for (int i = w; i < count; i += threads) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  for (std::thread& t : pool) t.join();
  for (const std::exception_ptr& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

double emd_with_subsample(const Mat3& pred, const Mat3& gt, int cap) {
  const int target = std::min({static_cast<int>(pred.rows()), static_cast<int>(gt.rows()), cap});
  return metrics::emd_exact(fps_subsample(pred, target), fps_subsample(gt, target), cap);
}

net::ParamStore load_params_checked(const std::string& ckpt_path, const net::NetConfig& cfg) {
  net::ParamStore loaded = ad::load_checkpoint(ckpt_path);
  Rng rng(0);
  const net::ParamStore reference = net::init_params(cfg, rng);
  std::string diff;
  for (const auto& [name, tensor] : reference) {
    auto it = loaded.find(name);
    if (it == loaded.end()) {
      diff += "  missing parameter " + name + "\n";
      continue;
    }
    if (it->second.value.rows() != tensor.value.rows() ||
        it->second.value.cols() != tensor.value.cols())
      diff += "  " + name + ": checkpoint " + std::to_string(it->second.value.rows()) + "x" +
              std::to_string(it->second.value.cols()) + " vs config " +
              std::to_string(tensor.value.rows()) + "x" +
              std::to_string(tensor.value.cols()) + "\n";
  }
  for (const auto& [name, tensor] : loaded)
    if (!reference.count(name)) diff += "  unexpected parameter " + name + "\n";
  if (!diff.empty())
    throw IoError("checkpoint does not match the net config:\n" + diff);
  return loaded;
}

metrics::EvalReport evaluate(const std::vector<TrainSample>& samples,
                             const net::ParamStore& params, const net::NetConfig& cfg,
                             const EvalOptions& opts) {
  const int threads =
      opts.threads > 0 ? opts.threads : std::max(1u, std::thread::hardware_concurrency());
  metrics::EvalReport report;
  report.rows.resize(samples.size());
  parallel_for(static_cast<int>(samples.size()), threads, [&](int i) {
    const TrainSample& s = samples[i];
    geom::OrientedPointCloud pred;
    if (opts.oracle) {
      pred = *s.gt_surface;
    } else {
      ad::Graph g;
      net::Bound bound(g, params);
      const net::GeneratorOutput out =
          net::generator_forward(g, s.partial, bound, cfg, s.scan_plan.get());
      pred = geom::OrientedPointCloud{out.refined.pos.val(), out.refined.normals.val()};
    }
    metrics::SampleMetrics m;
    m.id = s.id;
    m.family = s.family;
    const auto [comp, acc] = metrics::cd_split(pred.pts, s.gt_surface->pts);
    m.cd_comp = comp;
    m.cd_acc = acc;
    m.cd = 0.5 * (comp + acc);
    m.emd = emd_with_subsample(pred.pts, s.gt_surface->pts, opts.emd_cap);
    m.nc = metrics::normal_consistency(pred, *s.gt_surface);
    report.rows[i] = std::move(m);
  });
  return report;
}

}  // namespace skelbridge::train
