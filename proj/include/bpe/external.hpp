#pragma once

#include <atomic>
#include <filesystem>
#include <string>

#include "bpe/evaluators.hpp"
#include "json.hpp"

namespace bpe {

// Work directory protocol, one directory per (config, genotype):
//
//   <work_root>/<key>/genotype.txt   encode(genotype)
//   <work_root>/<key>/bpe.cfg        format_bpe_cfg(space, config)
//   <work_root>/<key>/result.txt     written by the command: one decimal number
//
// The command runs through `/bin/sh -c` with the work directory as its cwd and
// in BPE_WORK_DIR; BPE_ARCH_ID carries the architecture id. <key> is the
// lowercase hex SHA-256 of bpe.cfg, a NUL byte, then genotype.txt. Successful
// results are cached as <cache_dir>/<key> holding "score seconds" printed with
// 17 significant digits.
struct ExternalProtocol {
  std::string command;
  std::filesystem::path work_root = "bpe-work";
  std::filesystem::path cache_dir = "bpe-cache";
  double timeout_seconds = 3600.0;
  std::size_t parallelism = 1;
  std::string result_file = "result.txt";

  void validate() const;
  nlohmann::json to_json() const;
  static ExternalProtocol from_json(const nlohmann::json& j);
};

std::string content_key(const std::string& bpe_cfg, const std::string& genotype_text);

class ExternalEvaluator final : public Evaluator {
 public:
  ExternalEvaluator(HyperSpace space, ExternalProtocol protocol);

  // Per-architecture failures are recorded; never throws for them.
  EvalResult run(const BpeConfig& config, const ArchSet& archs);

  // As run(), but throws EvaluatorError naming the first failure when no
  // architecture succeeded.
  EvalResult evaluate(const BpeConfig& config, const ArchSet& archs) override;
  const HyperSpace& space() const noexcept override { return space_; }

  std::size_t command_invocations() const noexcept { return invocations_; }
  std::size_t cache_hits() const noexcept { return cache_hits_; }

 private:
  struct Outcome {
    std::optional<double> score;
    ArchStatus status = ArchStatus::ok;
    std::string message;
    double seconds = 0.0;
  };
  Outcome run_one(const std::string& cfg_text, const std::string& arch_id, const Genotype& g);

  HyperSpace space_;
  ExternalProtocol protocol_;
  std::atomic<std::size_t> invocations_{0};
  std::atomic<std::size_t> cache_hits_{0};
};

}  // namespace bpe
