#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bpe/cellspace.hpp"
#include "bpe/hyperspace.hpp"
#include "json.hpp"

namespace bpe {

// The fixed architecture sample scored under every candidate config.
struct ArchSet {
  std::vector<std::string> ids;
  std::vector<Genotype> genotypes;

  std::size_t size() const noexcept { return genotypes.size(); }
  // Throws InvalidArgument when empty, misaligned, or ids repeat.
  void validate() const;

  // n uniform genotypes with ids "a000", "a001", ...
  static ArchSet random(std::size_t n, int nodes, std::uint64_t seed);
  // One genotype whose id is derived from its text, so equal genotypes share ids.
  static ArchSet single(const Genotype& g);
};

std::string genotype_id(const Genotype& g);

enum class ArchStatus { ok, timeout, nonzero_exit, parse_error, launch_error };

std::string_view status_name(ArchStatus s) noexcept;

struct EvalResult {
  std::vector<std::optional<double>> scores;  // empty for failed architectures
  std::vector<ArchStatus> status;
  std::vector<std::string> messages;          // failure detail per architecture
  std::vector<double> seconds;                // per-architecture cost
  double mean_cost = 0.0;

  std::size_t size() const noexcept { return scores.size(); }
  std::size_t effective_n() const noexcept;
  bool operator==(const EvalResult&) const = default;
};

// Score vectors restricted to architectures that succeeded in both results.
struct PairedScores {
  std::vector<double> a;
  std::vector<double> b;
};
PairedScores paired_scores(const EvalResult& a, const EvalResult& b);

// Runs of at least this fraction of successful architectures count as valid.
inline constexpr double kMinEffectiveFraction = 0.8;

class Evaluator {
 public:
  virtual ~Evaluator() = default;

  // Deterministic in (config, archs, evaluator seed). Per-architecture failures
  // are reported in the result; a result with no successes throws
  // EvaluatorError.
  virtual EvalResult evaluate(const BpeConfig& config, const ArchSet& archs) = 0;
  virtual const HyperSpace& space() const noexcept = 0;
};

// Synthetic stand-in for training. Architecture quality is a logistic squash of
// per-edge op weights; a config adds a shared bias and Gaussian noise whose
// standard deviation shrinks as fidelity-weighted levels grow.
struct SurrogateModel {
  int nodes = 4;
  std::vector<double> op_scores;         // [cell][edge][op], 2 * edge_count(nodes) * 8
  std::vector<double> fidelity_weights;  // one per dimension
  std::vector<double> bias_weights;      // one per dimension
  double noise_scale = 0.05;
  std::uint64_t seed = 0;

  double op_score(std::size_t cell, std::size_t edge, OpKind op) const;
  double& op_score(std::size_t cell, std::size_t edge, OpKind op);

  // Throws InvalidArgument on incomplete tables or noise_scale <= 0.
  void validate(const HyperSpace& space) const;

  // op_scores ~ N(0, op_scale^2); fidelity and bias weights start at zero.
  static SurrogateModel random(const HyperSpace& space, int nodes, std::uint64_t seed, double op_scale = 0.1,
                               double noise_scale = 0.05);

  nlohmann::json to_json() const;
  static SurrogateModel from_json(const nlohmann::json& j);
};

double surrogate_true_quality(const SurrogateModel& model, const Genotype& g);
double surrogate_bias(const SurrogateModel& model, const HyperSpace& space, const BpeConfig& config);
double surrogate_noise_sd(const SurrogateModel& model, const HyperSpace& space, const BpeConfig& config);

// mean_cost is the config_cost proxy of the config.
EvalResult surrogate_evaluate(const SurrogateModel& model, const HyperSpace& space, const BpeConfig& config,
                              const ArchSet& archs);

class SurrogateEvaluator final : public Evaluator {
 public:
  SurrogateEvaluator(HyperSpace space, SurrogateModel model);

  EvalResult evaluate(const BpeConfig& config, const ArchSet& archs) override;
  const HyperSpace& space() const noexcept override { return space_; }
  const SurrogateModel& model() const noexcept { return model_; }

 private:
  HyperSpace space_;
  SurrogateModel model_;
};

}  // namespace bpe
