#include "bpe/evaluators.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <set>

#include "bpe/error.hpp"
#include "bpe/random.hpp"

namespace bpe {

using nlohmann::json;

void ArchSet::validate() const {
  if (genotypes.empty()) throw InvalidArgument("architecture set is empty");
  if (ids.size() != genotypes.size()) throw InvalidArgument("architecture ids and genotypes are misaligned");
  std::set<std::string> seen;
  for (const auto& id : ids)
    if (!seen.insert(id).second) throw InvalidArgument("duplicate architecture id '" + id + "'");
}

ArchSet ArchSet::random(std::size_t n, int nodes, std::uint64_t seed) {
  ArchSet out;
  Rng rng(derive_seed(seed, 0xA5C4));
  for (std::size_t i = 0; i < n; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "a%03zu", i);
    out.ids.emplace_back(id);
    out.genotypes.push_back(random_genotype(nodes, rng));
  }
  return out;
}

std::string genotype_id(const Genotype& g) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "g%016llx", static_cast<unsigned long long>(fnv1a(encode(g))));
  return buf;
}

ArchSet ArchSet::single(const Genotype& g) { return ArchSet{{genotype_id(g)}, {g}}; }

std::string_view status_name(ArchStatus s) noexcept {
  switch (s) {
    case ArchStatus::ok: return "ok";
    case ArchStatus::timeout: return "timeout";
    case ArchStatus::nonzero_exit: return "nonzero_exit";
    case ArchStatus::parse_error: return "parse_error";
    case ArchStatus::launch_error: return "launch_error";
  }
  return "unknown";
}

std::size_t EvalResult::effective_n() const noexcept {
  std::size_t n = 0;
  for (const auto& s : scores) n += s.has_value();
  return n;
}

PairedScores paired_scores(const EvalResult& a, const EvalResult& b) {
  if (a.size() != b.size()) throw InvalidArgument("results cover different architecture sets");
  PairedScores out;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a.scores[i] && b.scores[i]) {
      out.a.push_back(*a.scores[i]);
      out.b.push_back(*b.scores[i]);
    }
  return out;
}

double SurrogateModel::op_score(std::size_t cell, std::size_t edge, OpKind op) const {
  return op_scores.at((cell * bpe::edge_count(nodes) + edge) * kNumOps + op_index(op));
}

double& SurrogateModel::op_score(std::size_t cell, std::size_t edge, OpKind op) {
  return op_scores.at((cell * bpe::edge_count(nodes) + edge) * kNumOps + op_index(op));
}

void SurrogateModel::validate(const HyperSpace& space) const {
  if (op_scores.size() != 2 * bpe::edge_count(nodes) * kNumOps)
    throw InvalidArgument("surrogate op score table does not match the cell size");
  if (fidelity_weights.size() != space.size() || bias_weights.size() != space.size())
    throw InvalidArgument("surrogate needs one fidelity and one bias weight per dimension");
  if (!(noise_scale > 0.0) || !std::isfinite(noise_scale)) throw InvalidArgument("noise scale must be positive");
  for (double v : op_scores)
    if (!std::isfinite(v)) throw InvalidArgument("non-finite surrogate op score");
  for (double v : fidelity_weights)
    if (!std::isfinite(v)) throw InvalidArgument("non-finite fidelity weight");
  for (double v : bias_weights)
    if (!std::isfinite(v)) throw InvalidArgument("non-finite bias weight");
}

namespace {

double standard_normal(Rng& rng) {
  // Box-Muller; 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t noise_seed(std::uint64_t seed, const BpeConfig& config, const std::string& arch_id) {
  std::uint64_t h = fnv1a(arch_id);
  for (auto l : config.levels) h = mix64(h ^ l);
  return derive_seed(seed, h);
}

}  // namespace

SurrogateModel SurrogateModel::random(const HyperSpace& space, int nodes, std::uint64_t seed, double op_scale,
                                      double noise_scale) {
  SurrogateModel m;
  m.nodes = nodes;
  m.seed = seed;
  m.noise_scale = noise_scale;
  m.op_scores.resize(2 * bpe::edge_count(nodes) * kNumOps);
  Rng rng(derive_seed(seed, 0x0b5c));
  for (double& v : m.op_scores) v = op_scale * standard_normal(rng);
  m.fidelity_weights.assign(space.size(), 0.0);
  m.bias_weights.assign(space.size(), 0.0);
  return m;
}

json SurrogateModel::to_json() const {
  return {{"nodes", nodes},
          {"op_scores", op_scores},
          {"fidelity_weights", fidelity_weights},
          {"bias_weights", bias_weights},
          {"noise_scale", noise_scale},
          {"seed", seed}};
}

SurrogateModel SurrogateModel::from_json(const json& j) {
  try {
    SurrogateModel m;
    m.nodes = j.at("nodes").get<int>();
    m.op_scores = j.at("op_scores").get<std::vector<double>>();
    m.fidelity_weights = j.at("fidelity_weights").get<std::vector<double>>();
    m.bias_weights = j.at("bias_weights").get<std::vector<double>>();
    m.noise_scale = j.at("noise_scale").get<double>();
    m.seed = j.at("seed").get<std::uint64_t>();
    return m;
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("malformed surrogate model: ") + e.what());
  }
}

double surrogate_true_quality(const SurrogateModel& model, const Genotype& g) {
  if (g.nodes() != model.nodes)
    throw InvalidArgument("genotype has " + std::to_string(g.nodes()) + " nodes, surrogate expects " +
                          std::to_string(model.nodes));
  double sum = 0.0;
  for (std::size_t c = 0; c < 2; ++c) {
    const auto& cell = g.cell(c);
    for (std::size_t e = 0; e < cell.edge_count(); ++e) sum += model.op_score(c, e, cell.op(e));
  }
  return 1.0 / (1.0 + std::exp(-sum));
}

double surrogate_bias(const SurrogateModel& model, const HyperSpace& space, const BpeConfig& config) {
  space.validate(config);
  double b = 0.0;
  for (std::size_t d = 0; d < space.size(); ++d)
    b += model.bias_weights.at(d) * space.dim(d).normalized_level(config.levels[d]);
  return b;
}

double surrogate_noise_sd(const SurrogateModel& model, const HyperSpace& space, const BpeConfig& config) {
  space.validate(config);
  double fidelity = 0.0;
  for (std::size_t d = 0; d < space.size(); ++d)
    fidelity += model.fidelity_weights.at(d) * space.dim(d).normalized_level(config.levels[d]);
  return model.noise_scale / (1.0 + fidelity);
}

EvalResult surrogate_evaluate(const SurrogateModel& model, const HyperSpace& space, const BpeConfig& config,
                              const ArchSet& archs) {
  model.validate(space);
  archs.validate();
  const double bias = surrogate_bias(model, space, config);
  const double sd = surrogate_noise_sd(model, space, config);
  const double cost = config_cost(space, config);

  EvalResult r;
  r.scores.reserve(archs.size());
  for (std::size_t i = 0; i < archs.size(); ++i) {
    Rng rng(noise_seed(model.seed, config, archs.ids[i]));
    const double eps = sd * standard_normal(rng);
    r.scores.emplace_back(surrogate_true_quality(model, archs.genotypes[i]) + bias + eps);
  }
  r.status.assign(archs.size(), ArchStatus::ok);
  r.messages.assign(archs.size(), std::string());
  r.seconds.assign(archs.size(), cost);
  r.mean_cost = cost;
  return r;
}

SurrogateEvaluator::SurrogateEvaluator(HyperSpace space, SurrogateModel model)
    : space_(std::move(space)), model_(std::move(model)) {
  model_.validate(space_);
}

EvalResult SurrogateEvaluator::evaluate(const BpeConfig& config, const ArchSet& archs) {
  return surrogate_evaluate(model_, space_, config, archs);
}

}  // namespace bpe
