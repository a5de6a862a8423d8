#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bpe/cellspace.hpp"
#include "bpe/evaluators.hpp"
#include "bpe/hyperspace.hpp"

namespace bpe {

struct SearchBudget {
  std::size_t max_evaluations = 100;  // counted as evaluator invocations (cache misses)
  std::uint64_t seed = 0;

  void validate() const;
};

struct TraceEntry {
  std::size_t step = 0;  // 1-based candidate index, including cache hits
  std::string genotype_id;
  std::string genotype_text;
  double score = 0.0;
  std::size_t evaluations = 0;  // cumulative evaluator invocations after this step
};

struct SearchResult {
  Genotype best;
  double best_score = 0.0;
  std::vector<TraceEntry> trace;
  std::size_t evaluations = 0;
};

// Scores single genotypes under a fixed config through an evaluator, caching by
// genotype text. Only cache misses reach the evaluator.
class ArchScorer {
 public:
  ArchScorer(Evaluator& evaluator, BpeConfig config);

  // Throws EvaluatorError if the architecture fails.
  double score(const Genotype& g);
  std::size_t evaluations() const noexcept { return evaluations_; }
  bool cached(const Genotype& g) const { return cache_.contains(encode(g)); }

 private:
  Evaluator& evaluator_;
  BpeConfig config_;
  std::map<std::string, double> cache_;
  std::size_t evaluations_ = 0;
};

double arch_score(ArchScorer& scorer, const Genotype& g);

SearchResult random_search(int nodes, ArchScorer& scorer, const SearchBudget& budget);

struct EvolutionParams {
  std::size_t population = 50;
  std::size_t tournament = 10;
};

// Aging evolution: tournament parent from the live population, one-edge
// mutation, and removal of the oldest member after every child.
SearchResult evolution_search(int nodes, ArchScorer& scorer, const SearchBudget& budget,
                              const EvolutionParams& params = {});

struct PolicyParams {
  double learning_rate = 0.05;
  double baseline_decay = 0.9;
  // Steps allowed per budgeted evaluation before giving up on finding
  // unseen genotypes.
  std::size_t max_steps_per_evaluation = 20;
};

// Independent categorical over the eight ops for every (cell, edge).
class Policy {
 public:
  Policy(int nodes, PolicyParams params);

  int nodes() const noexcept { return nodes_; }
  std::size_t edges_per_cell() const noexcept { return edges_; }
  std::vector<double> probabilities(std::size_t cell, std::size_t edge) const;
  double logit(std::size_t cell, std::size_t edge, OpKind op) const;
  std::optional<double> baseline() const noexcept { return baseline_; }
  const PolicyParams& params() const noexcept { return params_; }

  Genotype sample(Rng& rng) const;
  // REINFORCE step: logits += lr * (reward - baseline) * d log p(g) / d logits,
  // using the baseline from before this reward, then folds the reward into the
  // moving-average baseline. The first reward seeds the baseline.
  // Throws Error if any logit becomes non-finite.
  void update(const Genotype& g, double reward);

 private:
  std::size_t offset(std::size_t cell, std::size_t edge) const noexcept { return (cell * edges_ + edge) * kNumOps; }

  int nodes_;
  std::size_t edges_;
  PolicyParams params_;
  std::vector<double> logits_;
  std::optional<double> baseline_;
};

struct RlSearchResult {
  SearchResult search;
  Policy policy;
};

RlSearchResult rl_search(int nodes, ArchScorer& scorer, const SearchBudget& budget, const PolicyParams& params = {});

// One JSON object per line: {"step":..,"genotype":"..","score":..,"evaluations":..}
std::string trace_to_jsonl(const std::vector<TraceEntry>& trace);

}  // namespace bpe
