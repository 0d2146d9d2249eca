#include "skelbridge/net/params.hpp"

#include <cmath>

namespace skelbridge::net {

ad::Value Bound::operator()(const std::string& name) {
  auto hit = cache_.find(name);
  if (hit != cache_.end()) return hit->second;
  auto it = store_->find(name);
  if (it == store_->end()) throw InvalidInputError("unknown parameter '" + name + "'");
  ad::Value v = g_->leaf(it->second);
  cache_.emplace(name, v);
  return v;
}

namespace {

MatX he_uniform(int rows, int cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / rows);
  MatX m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = rng.uniform(-limit, limit);
  return m;
}

void add_linear(ParamStore& p, const std::string& prefix, int in, int out, Rng& rng) {
  p.emplace(prefix + "_w", ad::Tensor(he_uniform(in, out, rng), true));
  p.emplace(prefix + "_b", ad::Tensor(MatX::Zero(1, out), true));
}

void add_encoder(ParamStore& p, const std::string& name, const NetConfig& cfg, Rng& rng) {
  for (int i = 0; i < cfg.levels; ++i) {
    const int in = i == 0 ? 3 : 3 + cfg.widths[i - 1];
    const int out = cfg.widths[i];
    const std::string lv = name + "/l" + std::to_string(i);
    add_linear(p, lv + "/mlp0", in, out, rng);
    add_linear(p, lv + "/mlp1", out, out, rng);
  }
}

}  // namespace

ParamStore init_params(const NetConfig& cfg, Rng& rng) {
  cfg.validate();
  ParamStore p;
  const int fw = cfg.feature_width();

  add_encoder(p, "skel_enc", cfg, rng);
  {
    int in = fw;
    for (std::size_t i = 0; i < cfg.head_widths.size(); ++i) {
      add_linear(p, "skel_head/fc" + std::to_string(i), in, cfg.head_widths[i], rng);
      in = cfg.head_widths[i];
    }
    add_linear(p, "skel_head/out", in, 3, rng);
    p.at("skel_head/out_b").value = MatX::Constant(1, 3, 0.5);  // start at the cube center
  }

  add_encoder(p, "fuse_enc", cfg, rng);
  for (int i = 0; i < cfg.levels; ++i) {
    const int c = cfg.widths[i];
    const int d = c / cfg.heads;
    const std::string lv = "attn/l" + std::to_string(i);
    for (int h = 0; h < cfg.heads; ++h) {
      const std::string hd = lv + "/h" + std::to_string(h);
      p.emplace(hd + "/wq", ad::Tensor(he_uniform(c, d, rng), true));
      p.emplace(hd + "/wp", ad::Tensor(he_uniform(c, d, rng), true));
    }
    add_linear(p, lv + "/proj", cfg.heads * c, c, rng);
  }

  for (int gi = 0; gi < cfg.upsample; ++gi)
    p.emplace("disp/g" + std::to_string(gi) + "_w",
              ad::Tensor(he_uniform(fw, cfg.disp_width, rng), true));
  p.emplace("disp/g_b",
            ad::Tensor(MatX::Zero(1, cfg.upsample * cfg.disp_width), true));
  add_linear(p, "disp/fc0", cfg.disp_width, cfg.disp_width, rng);
  add_linear(p, "disp/out", cfg.disp_width, 6, rng);
  p.at("disp/out_w").value.setZero();
  MatX nb = MatX::Zero(1, 6);
  nb(0, 5) = 1.0;  // raw normal starts at (0,0,1): never zero length
  p.at("disp/out_b").value = nb;

  const int a0 = cfg.adjust_widths[0];
  const int a1 = cfg.adjust_widths[1];
  add_linear(p, "adjust/mlp0", 6, a0, rng);
  add_linear(p, "adjust/mlp1", a0, a1, rng);
  add_linear(p, "adjust/off0", 2 * a1, a0, rng);
  add_linear(p, "adjust/off1", a0, 6, rng);
  p.at("adjust/off1_w").value.setZero();  // identity merge at start

  const int disc_in = cfg.disc_use_normals ? 6 : 3;
  add_linear(p, "disc/mlp0", disc_in, 64, rng);
  add_linear(p, "disc/mlp1", 64, 128, rng);
  add_linear(p, "disc/head0", 128, 64, rng);
  add_linear(p, "disc/head1", 64, 1, rng);

  return p;
}

std::vector<std::string> stage_prefixes(int stage) {
  switch (stage) {
    case 1: return {"skel_enc/", "skel_head/"};
    case 2: return {"fuse_enc/", "attn/", "disp/"};
    case 3: return {"adjust/"};
    case 4: return {"skel_enc/", "skel_head/", "fuse_enc/", "attn/", "disp/", "adjust/"};
    default: throw InvalidInputError("stage_prefixes: stage must be 1..4");
  }
}

bool name_has_prefix(const std::string& name, const std::vector<std::string>& prefixes) {
  for (const std::string& p : prefixes)
    if (name.rfind(p, 0) == 0) return true;
  return false;
}

void set_trainable(ParamStore& params, const std::vector<std::string>& prefixes) {
  for (auto& [name, tensor] : params) tensor.requires_grad = name_has_prefix(name, prefixes);
}

}  // namespace skelbridge::net
