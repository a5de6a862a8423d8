#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "bpe/evaluators.hpp"
#include "bpe/forest.hpp"
#include "bpe/hyperspace.hpp"
#include "bpe/ranking.hpp"
#include "json.hpp"

namespace bpe {

struct TrialRecord {
  BpeConfig config;
  double r_s = 0.0;
  double mean_cost = 0.0;
  double objective = 0.0;
  std::size_t iteration = 0;    // 1-based iteration that sampled this config
  std::size_t effective_n = 0;  // architectures scored under both reference and config
  // False when fewer than kMinEffectiveFraction of the architectures scored or
  // the correlation was undefined; such records never train the forest or win.
  bool valid = true;

  bool operator==(const TrialRecord&) const = default;
};

// Append-only experience set.
class Dataset {
 public:
  void append(TrialRecord r) { records_.push_back(std::move(r)); }
  std::span<const TrialRecord> records() const noexcept { return records_; }
  std::size_t size() const noexcept { return records_.size(); }
  bool empty() const noexcept { return records_.empty(); }
  bool contains(const BpeConfig& c) const noexcept;

  bool operator==(const Dataset&) const = default;

 private:
  std::vector<TrialRecord> records_;
};

enum class SelectBy { objective, rs };

struct MipParams {
  std::size_t samples_per_iteration = 10;
  // Below this importance a pruned dimension goes to its cheapest level. Any
  // value >= 1 sends every pin to the cheapest level.
  double tau = 0.1;
  ObjectiveParams objective{};  // cost_normalizer is overwritten by the reference cost
  ForestParams forest{};
  std::uint64_t seed = 0;
  SelectBy select_by = SelectBy::objective;
  std::size_t duplicate_retries = 100;

  void validate() const;
};

enum class PinBranch { min_cost, best_rs };

struct PinDecision {
  std::size_t dim = 0;
  std::size_t level = 0;
  PinBranch branch = PinBranch::min_cost;
  double importance = 0.0;

  bool operator==(const PinDecision&) const = default;
};

struct IterationReport {
  std::size_t iteration = 0;
  std::vector<std::optional<double>> importances;  // nullopt for dims pinned earlier
  bool uniform_fallback = false;                    // forest gave no usable importances
  PinDecision pin;
  std::optional<std::size_t> best_record;           // index into the dataset

  bool operator==(const IterationReport&) const = default;
};

struct MipState {
  HyperSpace space;
  ReferenceConfig reference;
  PinMask mask;
  std::size_t iteration = 0;
  Dataset dataset;
  EvalResult reference_result;
  MipParams params;
  std::vector<IterationReport> reports;
  // One per completed iteration, empty when the fit failed. Features are the
  // encodings of the dims unpinned at that iteration, in dimension order.
  std::vector<std::optional<RandomForest>> forests;

  bool finished() const noexcept { return iteration >= space.size(); }
};

// Scores the architecture set under the full-training config.
EvalResult compute_reference(const ArchSet& archs, Evaluator& evaluator, const ReferenceConfig& reference);

// Runs the reference evaluation and returns iteration-0 state. The objective's
// cost normalizer becomes the reference run's mean cost.
MipState start_state(const HyperSpace& space, const ReferenceConfig& reference, const ArchSet& archs,
                     Evaluator& evaluator, MipParams params);

// Scores one candidate against the reference.
TrialRecord score_trial(const MipState& state, const BpeConfig& config, const EvalResult& result);

// Strong guarantee: if the evaluator throws, `state` is untouched.
void run_iteration(MipState& state, const ArchSet& archs, Evaluator& evaluator);

// Chooses the unpinned dim with the least importance (ties to the lower
// index) and the level to pin it at. `importances` is indexed by dimension;
// entries for pinned dims are ignored.
PinDecision prune_rule(std::span<const double> importances, const Dataset& dataset, const HyperSpace& space,
                       const PinMask& mask, double tau);

// Valid record maximizing the selection key; ties go to the earliest record.
std::optional<std::size_t> select_best(const Dataset& dataset, SelectBy by);

struct MipOutcome {
  TrialRecord best;
  Dataset dataset;
  std::vector<IterationReport> reports;
};

using IterationObserver = std::function<void(const MipState&)>;

// Continues `state` until every dimension is pinned, calling `observer` after
// each iteration. Throws EvaluatorError if no valid record exists at the end.
MipOutcome finish(MipState& state, const ArchSet& archs, Evaluator& evaluator,
                  const IterationObserver& observer = {});

MipOutcome run(const HyperSpace& space, const ReferenceConfig& reference, const ArchSet& archs,
               Evaluator& evaluator, const MipParams& params, const IterationObserver& observer = {});

nlohmann::json params_to_json(const MipParams& p);
MipParams params_from_json(const nlohmann::json& j);
nlohmann::json record_to_json(const HyperSpace& space, const TrialRecord& r);
TrialRecord record_from_json(const HyperSpace& space, const nlohmann::json& j);
nlohmann::json eval_result_to_json(const EvalResult& r);
EvalResult eval_result_from_json(const nlohmann::json& j);
// Forests are not part of this document.
nlohmann::json state_to_json(const MipState& s);
MipState state_from_json(const HyperSpace& space, const ReferenceConfig& reference, const nlohmann::json& j);

}  // namespace bpe
