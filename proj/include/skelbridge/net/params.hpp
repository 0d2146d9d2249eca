#pragma once

#include <map>
#include <string>
#include <vector>

#include "skelbridge/ad/graph.hpp"
#include "skelbridge/net/config.hpp"

namespace skelbridge::net {

using ParamStore = std::map<std::string, ad::Tensor>;

/// Lazily binds store tensors into a graph so each parameter becomes exactly
/// one leaf per forward; the bound map is how the trainer reads gradients.
class Bound {
 public:
  Bound(ad::Graph& g, const ParamStore& store) : g_(&g), store_(&store) {}

  ad::Value operator()(const std::string& name);
  const std::map<std::string, ad::Value>& bound() const { return cache_; }

 private:
  ad::Graph* g_;
  const ParamStore* store_;
  std::map<std::string, ad::Value> cache_;
};

/// He-uniform initialization for all generator and discriminator weights.
/// Special cases: the skeleton head's output bias starts at the cube center,
/// and the displacement head's final layer starts at zero weights with a
/// (0,0,1)-favoring raw-normal bias so positions begin exactly on the
/// repeated skeleton and raw normals are never zero. The adjustment offset
/// head's final layer starts at zero, making the module an identity merge.
ParamStore init_params(const NetConfig& cfg, Rng& rng);

/// Name prefixes trained in each stage: 1 skeleton path, 2 fusion +
/// displacement, 3 surface adjustment, 4 all generator parameters.
/// The discriminator lives under "disc/".
std::vector<std::string> stage_prefixes(int stage);

bool name_has_prefix(const std::string& name, const std::vector<std::string>& prefixes);

/// Sets requires_grad so exactly the named prefixes are trainable.
void set_trainable(ParamStore& params, const std::vector<std::string>& prefixes);

}  // namespace skelbridge::net
