#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "bpe/evaluators.hpp"
#include "bpe/mip.hpp"
#include "bpe/space_io.hpp"
#include "json.hpp"

namespace bpe {

// Run directory layout:
//
//   manifest.json     kind, seed, space definition, architecture set,
//                     evaluator spec, parameters; written once
//   state.json        MIP snapshot, rewritten after every iteration
//   trials.jsonl      one record_to_json() object per trial, in sampling order
//   report.tsv        one row per iteration: importances, pin, best so far
//   forest_<k>.json   forest fitted in iteration k (1-based)
//   trace.jsonl       search runs only, see trace_to_jsonl()
//
// Every file is replaced by write-then-rename.
enum class RunKind { mip, search };

// {"kind": "surrogate", "model": {...}} or {"kind": "external", "protocol": {...}}
std::unique_ptr<Evaluator> make_evaluator(const nlohmann::json& spec, const HyperSpace& space);

nlohmann::json archs_to_json(const ArchSet& archs);
ArchSet archs_from_json(const nlohmann::json& j);

void write_atomic(const std::filesystem::path& path, const std::string& content);

class RunArchive {
 public:
  // Creates the directory and writes the manifest. Refuses to overwrite an
  // existing manifest.
  static RunArchive create(const std::filesystem::path& dir, nlohmann::json manifest);
  // Throws ArchiveError when the manifest is missing or unparseable.
  static RunArchive open(const std::filesystem::path& dir);

  const std::filesystem::path& dir() const noexcept { return dir_; }
  RunKind kind() const noexcept { return kind_; }
  const nlohmann::json& manifest() const noexcept { return manifest_; }

  SpaceDefinition space_definition() const;
  ArchSet archs() const;
  std::unique_ptr<Evaluator> evaluator() const;

  bool has_state() const;
  // Loads state.json and every forest snapshot that exists. Missing snapshots
  // leave empty entries.
  MipState load_state() const;
  void save_state(const MipState& state) const;

 private:
  RunArchive(std::filesystem::path dir, nlohmann::json manifest, RunKind kind);

  std::filesystem::path dir_;
  nlohmann::json manifest_;
  RunKind kind_;
};

std::string report_tsv(const MipState& state);

}  // namespace bpe
