#include "skelbridge/net/config.hpp"

#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

namespace skelbridge::net {

int NetConfig::feature_width() const {
  return std::accumulate(widths.begin(), widths.end(), 0);
}

void NetConfig::validate() const {
  if (levels < 1) throw ConfigError("net: levels must be >= 1");
  if (static_cast<int>(widths.size()) != levels)
    throw ConfigError("net: widths must have one entry per level");
  if (static_cast<int>(radii.size()) != levels)
    throw ConfigError("net: radii must have one entry per level");
  if (n_points % (1 << levels) != 0)
    throw ConfigError("net: n_points must be divisible by 2^levels");
  if (heads < 1) throw ConfigError("net: heads must be >= 1");
  for (int c : widths) {
    if (c < 1) throw ConfigError("net: widths must be positive");
    if (c % heads != 0) throw ConfigError("net: every width must be divisible by heads");
  }
  for (double r : radii)
    if (!(r > 0.0)) throw ConfigError("net: radii must be positive");
  if (group_size < 1) throw ConfigError("net: group_size must be >= 1");
  if (upsample != 4) throw ConfigError("net: upsample factor is fixed at 4");
  if (head_widths.empty()) throw ConfigError("net: head_widths must be nonempty");
  if (disp_width < 1) throw ConfigError("net: disp_width must be >= 1");
  if (adjust_widths.size() != 2) throw ConfigError("net: adjust_widths must have 2 entries");
  if (disc_seeds < 1) throw ConfigError("net: disc_seeds (m) must be >= 1");
  if (disc_patch < 1) throw ConfigError("net: disc_patch (n) must be >= 1");
  if (!(disc_radius_frac > 0.0)) throw ConfigError("net: disc_radius_frac must be positive");
}

namespace {

void require_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                  const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key()))
      throw ConfigError("unknown key '" + it.key() + "' in " + where);
}

}  // namespace

NetConfig NetConfig::from_json_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("net config is not valid JSON: ") + e.what());
  }
  require_keys(j,
               {"n_points", "levels", "widths", "radii", "group_size", "heads",
                "upsample", "head_widths", "disp_width", "adjust_widths", "disc_seeds",
                "disc_patch", "disc_radius_frac", "disc_use_normals", "attention",
                "adjust"},
               "net config");
  NetConfig c;
  try {
    if (j.contains("n_points")) c.n_points = j.at("n_points").get<int>();
    if (j.contains("levels")) c.levels = j.at("levels").get<int>();
    if (j.contains("widths")) c.widths = j.at("widths").get<std::vector<int>>();
    if (j.contains("radii")) c.radii = j.at("radii").get<std::vector<double>>();
    if (j.contains("group_size")) c.group_size = j.at("group_size").get<int>();
    if (j.contains("heads")) c.heads = j.at("heads").get<int>();
    if (j.contains("upsample")) c.upsample = j.at("upsample").get<int>();
    if (j.contains("head_widths")) c.head_widths = j.at("head_widths").get<std::vector<int>>();
    if (j.contains("disp_width")) c.disp_width = j.at("disp_width").get<int>();
    if (j.contains("adjust_widths"))
      c.adjust_widths = j.at("adjust_widths").get<std::vector<int>>();
    if (j.contains("disc_seeds")) c.disc_seeds = j.at("disc_seeds").get<int>();
    if (j.contains("disc_patch")) c.disc_patch = j.at("disc_patch").get<int>();
    if (j.contains("disc_radius_frac"))
      c.disc_radius_frac = j.at("disc_radius_frac").get<double>();
    if (j.contains("disc_use_normals"))
      c.disc_use_normals = j.at("disc_use_normals").get<bool>();
    if (j.contains("attention")) c.attention = j.at("attention").get<bool>();
    if (j.contains("adjust")) c.adjust = j.at("adjust").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("net config field has the wrong type: ") + e.what());
  }
  c.validate();
  return c;
}

std::string NetConfig::to_json_text() const {
  nlohmann::ordered_json j;
  j["n_points"] = n_points;
  j["levels"] = levels;
  j["widths"] = widths;
  j["radii"] = radii;
  j["group_size"] = group_size;
  j["heads"] = heads;
  j["upsample"] = upsample;
  j["head_widths"] = head_widths;
  j["disp_width"] = disp_width;
  j["adjust_widths"] = adjust_widths;
  j["disc_seeds"] = disc_seeds;
  j["disc_patch"] = disc_patch;
  j["disc_radius_frac"] = disc_radius_frac;
  j["disc_use_normals"] = disc_use_normals;
  j["attention"] = attention;
  j["adjust"] = adjust;
  return j.dump(2);
}

}  // namespace skelbridge::net
