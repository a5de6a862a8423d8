#include "bpe/space_io.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "bpe/error.hpp"

namespace bpe {

using nlohmann::json;

namespace {

std::optional<double> parse_number(const std::string& s) {
  double v = 0.0;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc{} || ptr != end) return std::nullopt;
  return v;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

json space_to_json(const HyperSpace& space) {
  json dims = json::array();
  for (const auto& d : space.dims()) {
    json levels = json::array();
    for (const auto& l : d.levels())
      levels.push_back({{"value", l.value}, {"encoding", l.encoding}, {"cost", l.cost}});
    dims.push_back({{"name", d.name()}, {"levels", std::move(levels)}});
  }
  return {{"dimensions", std::move(dims)}};
}

HyperSpace space_from_json(const json& j) {
  try {
    std::vector<Dimension> dims;
    for (const auto& jd : j.at("dimensions")) {
      std::vector<Level> levels;
      const auto& jl = jd.at("levels");
      for (std::size_t i = 0; i < jl.size(); ++i) {
        Level l;
        const auto& v = jl[i].at("value");
        l.value = v.is_string() ? v.get<std::string>() : v.dump();
        if (jl[i].contains("encoding")) {
          l.encoding = jl[i]["encoding"].get<double>();
        } else if (auto num = parse_number(l.value)) {
          l.encoding = *num;
        } else {
          l.encoding = static_cast<double>(i);
        }
        l.cost = jl[i].value("cost", 0.0);
        levels.push_back(std::move(l));
      }
      dims.emplace_back(jd.at("name").get<std::string>(), std::move(levels));
    }
    return HyperSpace(std::move(dims));
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("malformed space definition: ") + e.what());
  }
}

json definition_to_json(const SpaceDefinition& def) {
  json j = space_to_json(def.space);
  if (def.reference) j["reference"] = config_to_json(def.space, def.reference->config);
  return j;
}

SpaceDefinition definition_from_json(const json& j) {
  SpaceDefinition def{space_from_json(j), std::nullopt};
  if (j.contains("reference")) def.reference = ReferenceConfig{config_from_json(def.space, j["reference"])};
  return def;
}

SpaceDefinition load_space_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open space file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw InvalidArgument("space file " + path.string() + " is not valid JSON: " + e.what());
  }
  return definition_from_json(j);
}

json config_to_json(const HyperSpace& space, const BpeConfig& config) {
  json j = json::object();
  for (const auto& [k, v] : space.values_of(config)) j[k] = v;
  return j;
}

BpeConfig config_from_json(const HyperSpace& space, const json& j) {
  if (!j.is_object()) throw InvalidArgument("config must be a JSON object");
  std::map<std::string, std::string> values;
  for (const auto& [k, v] : j.items()) values[k] = v.is_string() ? v.get<std::string>() : v.dump();
  if (values.size() != space.size())
    throw InvalidArgument("config must assign every dimension exactly once");
  return space.config_from_values(values);
}

std::string format_bpe_cfg(const HyperSpace& space, const BpeConfig& config) {
  space.validate(config);
  std::string out;
  for (std::size_t i = 0; i < space.size(); ++i) {
    out += space.dim(i).name();
    out += " = ";
    out += space.dim(i).level(config.levels[i]).value;
    out += '\n';
  }
  return out;
}

BpeConfig parse_bpe_cfg(const HyperSpace& space, const std::string& text) {
  std::map<std::string, std::string> values;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw InvalidArgument("bpe.cfg line " + std::to_string(lineno) + ": expected 'name = value'");
    std::string key = trim(std::string_view(t).substr(0, eq));
    std::string value = trim(std::string_view(t).substr(eq + 1));
    if (!values.emplace(key, value).second)
      throw InvalidArgument("bpe.cfg: duplicate key '" + key + "'");
  }
  if (values.size() != space.size())
    throw InvalidArgument("bpe.cfg must assign all " + std::to_string(space.size()) + " dimensions");
  return space.config_from_values(values);
}

}  // namespace bpe
