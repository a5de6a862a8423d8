#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "json.hpp"

#include "bpe/hyperspace.hpp"

namespace bpe {

// Space file (JSON):
//   {
//     "dimensions": [
//       {"name": "epoch",
//        "levels": [{"value": "10", "encoding": 10, "cost": 0.0167}, ...]},
//       ...
//     ],
//     "reference": {"epoch": "600", ...}        // optional
//   }
// "encoding" defaults to the numeric value of "value" when it parses as a
// number, else to the level index. "cost" defaults to 0.
struct SpaceDefinition {
  HyperSpace space;
  std::optional<ReferenceConfig> reference;
};

nlohmann::json space_to_json(const HyperSpace& space);
HyperSpace space_from_json(const nlohmann::json& j);

nlohmann::json definition_to_json(const SpaceDefinition& def);
SpaceDefinition definition_from_json(const nlohmann::json& j);

SpaceDefinition load_space_file(const std::filesystem::path& path);

// Config as a JSON object {"dim name": "display value", ...}.
nlohmann::json config_to_json(const HyperSpace& space, const BpeConfig& config);
BpeConfig config_from_json(const HyperSpace& space, const nlohmann::json& j);

// bpe.cfg: one "name = value" line per dimension in space order, LF endings.
std::string format_bpe_cfg(const HyperSpace& space, const BpeConfig& config);
// Accepts blank lines and '#' comments; every dimension must appear once.
BpeConfig parse_bpe_cfg(const HyperSpace& space, const std::string& text);

}  // namespace bpe
