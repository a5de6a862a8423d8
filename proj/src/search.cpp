#include "bpe/search.hpp"

#include <cmath>
#include <deque>
#include <numeric>

#include "bpe/error.hpp"
#include "json.hpp"

namespace bpe {

void SearchBudget::validate() const {
  if (max_evaluations < 1) throw InvalidArgument("search budget must allow at least one evaluation");
}

ArchScorer::ArchScorer(Evaluator& evaluator, BpeConfig config) : evaluator_(evaluator), config_(std::move(config)) {
  evaluator_.space().validate(config_);
}

double ArchScorer::score(const Genotype& g) {
  std::string key = encode(g);
  if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  const EvalResult r = evaluator_.evaluate(config_, ArchSet::single(g));
  ++evaluations_;
  if (r.size() != 1 || !r.scores[0])
    throw EvaluatorError("architecture " + genotype_id(g) + " failed: " + (r.messages.empty() ? "" : r.messages[0]));
  cache_.emplace(std::move(key), *r.scores[0]);
  return *r.scores[0];
}

double arch_score(ArchScorer& scorer, const Genotype& g) { return scorer.score(g); }

namespace {

// Accumulates the trace and the running best.
class TraceRecorder {
 public:
  explicit TraceRecorder(ArchScorer& scorer) : scorer_(scorer) {}

  double observe(const Genotype& g) {
    const double s = scorer_.score(g);
    TraceEntry e{trace_.size() + 1, genotype_id(g), encode(g), s, scorer_.evaluations()};
    trace_.push_back(std::move(e));
    if (!best_ || s > best_score_) {
      best_ = g;
      best_score_ = s;
    }
    return s;
  }

  SearchResult result() && {
    if (!best_) throw EvaluatorError("search finished without scoring any architecture");
    return SearchResult{std::move(*best_), best_score_, std::move(trace_), scorer_.evaluations()};
  }

  std::size_t steps() const noexcept { return trace_.size(); }

 private:
  ArchScorer& scorer_;
  std::vector<TraceEntry> trace_;
  std::optional<Genotype> best_;
  double best_score_ = 0.0;
};

std::size_t step_limit(const SearchBudget& budget, std::size_t per_eval) {
  return budget.max_evaluations * std::max<std::size_t>(per_eval, 1);
}

}  // namespace

SearchResult random_search(int nodes, ArchScorer& scorer, const SearchBudget& budget) {
  budget.validate();
  Rng rng(derive_seed(budget.seed, 0x5EA1));
  TraceRecorder rec(scorer);
  const std::size_t start = scorer.evaluations();
  const std::size_t limit = step_limit(budget, 20);
  while (scorer.evaluations() - start < budget.max_evaluations && rec.steps() < limit)
    rec.observe(random_genotype(nodes, rng));
  return std::move(rec).result();
}

SearchResult evolution_search(int nodes, ArchScorer& scorer, const SearchBudget& budget,
                              const EvolutionParams& params) {
  budget.validate();
  if (params.population < 1 || params.tournament < 1 || params.tournament > params.population)
    throw InvalidArgument("evolution needs 1 <= tournament <= population");
  if (budget.max_evaluations < params.population)
    throw InvalidArgument("evolution budget must cover the initial population");

  Rng rng(derive_seed(budget.seed, 0xE70));
  TraceRecorder rec(scorer);
  const std::size_t start = scorer.evaluations();
  auto used = [&] { return scorer.evaluations() - start; };

  struct Member {
    Genotype g;
    double score;
  };
  std::deque<Member> population;  // front is oldest
  const std::size_t limit = step_limit(budget, 20);
  while (population.size() < params.population && rec.steps() < limit) {
    Genotype g = random_genotype(nodes, rng);
    const double s = rec.observe(g);
    population.push_back({std::move(g), s});
  }

  std::vector<std::size_t> slots(population.size());
  while (used() < budget.max_evaluations && rec.steps() < limit) {
    // Tournament without replacement so tournament == population is greedy.
    std::iota(slots.begin(), slots.end(), 0);
    std::size_t parent = 0;
    for (std::size_t k = 0; k < params.tournament; ++k) {
      std::swap(slots[k], slots[k + uniform_index(rng, slots.size() - k)]);
      if (k == 0 || population[slots[k]].score > population[parent].score) parent = slots[k];
    }
    Genotype child = mutate(population[parent].g, rng);
    const double s = rec.observe(child);
    population.push_back({std::move(child), s});
    population.pop_front();
  }
  return std::move(rec).result();
}

Policy::Policy(int nodes, PolicyParams params)
    : nodes_(nodes), edges_(edge_count(nodes)), params_(params), logits_(2 * edges_ * kNumOps, 0.0) {
  if (!(params_.learning_rate >= 0.0) || !std::isfinite(params_.learning_rate))
    throw InvalidArgument("policy learning rate must be nonnegative");
  if (!(params_.baseline_decay >= 0.0 && params_.baseline_decay <= 1.0))
    throw InvalidArgument("baseline decay must lie in [0, 1]");
}

std::vector<double> Policy::probabilities(std::size_t cell, std::size_t edge) const {
  const std::size_t o = offset(cell, edge);
  double hi = logits_[o];
  for (std::size_t k = 1; k < kNumOps; ++k) hi = std::max(hi, logits_[o + k]);
  std::vector<double> p(kNumOps);
  double z = 0.0;
  for (std::size_t k = 0; k < kNumOps; ++k) z += p[k] = std::exp(logits_[o + k] - hi);
  for (double& v : p) v /= z;
  return p;
}

double Policy::logit(std::size_t cell, std::size_t edge, OpKind op) const {
  return logits_.at(offset(cell, edge) + op_index(op));
}

Genotype Policy::sample(Rng& rng) const {
  auto draw_cell = [&](std::size_t c) {
    std::vector<OpKind> ops(edges_);
    for (std::size_t e = 0; e < edges_; ++e) ops[e] = kAllOps[draw_categorical(rng, probabilities(c, e))];
    return CellGenotype(nodes_, std::move(ops));
  };
  CellGenotype normal = draw_cell(0);
  CellGenotype reduction = draw_cell(1);
  return {std::move(normal), std::move(reduction)};
}

void Policy::update(const Genotype& g, double reward) {
  if (g.nodes() != nodes_) throw InvalidArgument("genotype does not match the policy's cell size");
  if (!std::isfinite(reward)) throw Error("policy update received a non-finite reward");
  const double advantage = baseline_ ? reward - *baseline_ : 0.0;
  baseline_ = baseline_ ? params_.baseline_decay * *baseline_ + (1.0 - params_.baseline_decay) * reward : reward;
  if (advantage == 0.0 || params_.learning_rate == 0.0) return;

  const double step = params_.learning_rate * advantage;
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t e = 0; e < edges_; ++e) {
      const auto p = probabilities(c, e);
      const std::size_t chosen = op_index(g.cell(c).op(e));
      const std::size_t o = offset(c, e);
      for (std::size_t k = 0; k < kNumOps; ++k) {
        logits_[o + k] += step * ((k == chosen ? 1.0 : 0.0) - p[k]);
        if (!std::isfinite(logits_[o + k]))
          throw Error("policy logits diverged at cell " + std::to_string(c) + " edge " + std::to_string(e));
      }
    }
}

RlSearchResult rl_search(int nodes, ArchScorer& scorer, const SearchBudget& budget, const PolicyParams& params) {
  budget.validate();
  Policy policy(nodes, params);
  Rng rng(derive_seed(budget.seed, 0x71));
  TraceRecorder rec(scorer);
  const std::size_t start = scorer.evaluations();
  const std::size_t limit = step_limit(budget, params.max_steps_per_evaluation);
  while (scorer.evaluations() - start < budget.max_evaluations && rec.steps() < limit) {
    Genotype g = policy.sample(rng);
    const double reward = rec.observe(g);
    policy.update(g, reward);
  }
  return {std::move(rec).result(), std::move(policy)};
}

std::string trace_to_jsonl(const std::vector<TraceEntry>& trace) {
  std::string out;
  for (const auto& e : trace) {
    nlohmann::json j = {{"step", e.step},
                        {"genotype_id", e.genotype_id},
                        {"genotype", e.genotype_text},
                        {"score", e.score},
                        {"evaluations", e.evaluations}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

}  // namespace bpe
