#include "bpe/mip.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>

#include "bpe/error.hpp"
#include "bpe/space_io.hpp"

namespace bpe {

using nlohmann::json;

bool Dataset::contains(const BpeConfig& c) const noexcept {
  return std::any_of(records_.begin(), records_.end(), [&](const auto& r) { return r.config == c; });
}

void MipParams::validate() const {
  if (samples_per_iteration < 1) throw InvalidArgument("need at least one sample per iteration");
  if (!(tau >= 0.0) || !std::isfinite(tau)) throw InvalidArgument("importance threshold must be nonnegative");
  objective.validate();
  forest.validate();
}

EvalResult compute_reference(const ArchSet& archs, Evaluator& evaluator, const ReferenceConfig& reference) {
  evaluator.space().validate(reference.config);
  EvalResult r = evaluator.evaluate(reference.config, archs);
  if (r.size() != archs.size()) throw EvaluatorError("evaluator returned a result of the wrong length");
  return r;
}

MipState start_state(const HyperSpace& space, const ReferenceConfig& reference, const ArchSet& archs,
                     Evaluator& evaluator, MipParams params) {
  params.validate();
  archs.validate();
  space.validate(reference.config);
  EvalResult ref = compute_reference(archs, evaluator, reference);
  params.objective.cost_normalizer = ref.mean_cost > 0.0 ? ref.mean_cost : 1.0;
  return MipState{space, reference, PinMask(space.size()), 0, Dataset{}, std::move(ref), params, {}, {}};
}

TrialRecord score_trial(const MipState& state, const BpeConfig& config, const EvalResult& result) {
  TrialRecord rec;
  rec.config = config;
  rec.iteration = state.iteration + 1;
  rec.mean_cost = result.mean_cost;
  const PairedScores paired = paired_scores(state.reference_result, result);
  rec.effective_n = paired.a.size();
  const double needed = kMinEffectiveFraction * static_cast<double>(state.reference_result.size());
  rec.valid = static_cast<double>(rec.effective_n) >= needed;
  if (rec.effective_n >= 2) {
    try {
      rec.r_s = spearman(paired.a, paired.b);
    } catch (const UndefinedCorrelation&) {
      rec.r_s = 0.0;
      rec.valid = false;
    }
  } else {
    rec.valid = false;
  }
  rec.objective = objective(rec.r_s, rec.mean_cost, state.params.objective);
  return rec;
}

PinDecision prune_rule(std::span<const double> importances, const Dataset& dataset, const HyperSpace& space,
                       const PinMask& mask, double tau) {
  if (importances.size() != space.size()) throw InvalidArgument("one importance per dimension expected");
  if (!mask.valid_for(space)) throw InvalidArgument("pin mask does not match the space");
  std::optional<std::size_t> pick;
  for (std::size_t d = 0; d < space.size(); ++d) {
    if (mask.is_pinned(d)) continue;
    if (!pick || importances[d] < importances[*pick]) pick = d;
  }
  if (!pick) throw InvalidArgument("every dimension is already pinned");

  PinDecision out{*pick, space.dim(*pick).min_cost_level(), PinBranch::min_cost, importances[*pick]};
  if (out.importance < tau || tau >= 1.0) return out;

  if (auto best = select_best(dataset, SelectBy::rs)) {
    out.level = dataset.records()[*best].config.levels[*pick];
    out.branch = PinBranch::best_rs;
  }
  return out;
}

std::optional<std::size_t> select_best(const Dataset& dataset, SelectBy by) {
  std::optional<std::size_t> best;
  auto key = [by](const TrialRecord& r) { return by == SelectBy::objective ? r.objective : r.r_s; };
  const auto recs = dataset.records();
  for (std::size_t i = 0; i < recs.size(); ++i) {
    if (!recs[i].valid) continue;
    if (!best || key(recs[i]) > key(recs[*best])) best = i;
  }
  return best;
}

namespace {

struct Importances {
  std::vector<double> per_dim;  // full length; pinned dims hold 0
  bool fallback = false;
  std::optional<RandomForest> forest;
};

Importances estimate_importances(const MipState& state, const Dataset& dataset) {
  const auto unpinned = state.mask.unpinned();
  Importances out;
  out.per_dim.assign(state.space.size(), 0.0);

  std::vector<Sample> samples;
  for (const auto& r : dataset.records()) {
    if (!r.valid) continue;
    Sample s;
    for (auto d : unpinned) s.features.push_back(state.space.dim(d).level(r.config.levels[d]).encoding);
    s.target = r.r_s;
    samples.push_back(std::move(s));
  }

  std::vector<double> local;
  try {
    ForestParams fp = state.params.forest;
    fp.seed = derive_seed(state.params.seed, 0xF0 + state.iteration);
    RandomForest forest = RandomForest::fit(samples, fp);
    local = forest.feature_importance();
    out.forest = std::move(forest);
  } catch (const InvalidArgument& e) {
    spdlog::warn("iteration {}: forest fit failed ({}); using uniform importances", state.iteration + 1, e.what());
  }
  const bool usable = !local.empty() && std::any_of(local.begin(), local.end(), [](double v) { return v > 0.0; });
  if (!usable) {
    if (out.forest)
      spdlog::warn("iteration {}: forest has no informative split; using uniform importances", state.iteration + 1);
    local.assign(unpinned.size(), 1.0 / static_cast<double>(unpinned.size()));
    out.fallback = true;
  }
  for (std::size_t k = 0; k < unpinned.size(); ++k) out.per_dim[unpinned[k]] = local[k];
  return out;
}

}  // namespace

void run_iteration(MipState& state, const ArchSet& archs, Evaluator& evaluator) {
  if (state.finished()) throw InvalidArgument("every dimension is already pinned");
  const MipParams& params = state.params;

  Rng rng(derive_seed(params.seed, state.iteration + 1));
  std::vector<BpeConfig> batch;
  for (std::size_t k = 0; k < params.samples_per_iteration; ++k) {
    BpeConfig c = sample_config(state.space, state.mask, rng);
    for (std::size_t retry = 0; retry < params.duplicate_retries; ++retry) {
      const bool dup = state.dataset.contains(c) || std::find(batch.begin(), batch.end(), c) != batch.end();
      if (!dup) break;
      c = sample_config(state.space, state.mask, rng);
    }
    batch.push_back(std::move(c));
  }

  // Work on a copy of the dataset so an evaluator failure leaves state intact.
  Dataset dataset = state.dataset;
  for (const auto& c : batch) {
    EvalResult r = evaluator.evaluate(c, archs);
    if (r.size() != archs.size()) throw EvaluatorError("evaluator returned a result of the wrong length");
    dataset.append(score_trial(state, c, r));
  }

  Importances imp = estimate_importances(state, dataset);
  PinDecision pin = prune_rule(imp.per_dim, dataset, state.space, state.mask, params.tau);

  IterationReport report;
  report.iteration = state.iteration + 1;
  report.uniform_fallback = imp.fallback;
  report.pin = pin;
  for (std::size_t d = 0; d < state.space.size(); ++d)
    report.importances.push_back(state.mask.is_pinned(d) ? std::nullopt : std::optional<double>(imp.per_dim[d]));
  report.best_record = select_best(dataset, params.select_by);

  // commit
  state.dataset = std::move(dataset);
  state.mask.set(pin.dim, pin.level);
  state.iteration += 1;
  state.reports.push_back(std::move(report));
  state.forests.push_back(std::move(imp.forest));
}

MipOutcome finish(MipState& state, const ArchSet& archs, Evaluator& evaluator, const IterationObserver& observer) {
  while (!state.finished()) {
    run_iteration(state, archs, evaluator);
    if (observer) observer(state);
  }
  const auto best = select_best(state.dataset, state.params.select_by);
  if (!best) throw EvaluatorError("no valid trial record: every sampled config failed or had undefined correlation");
  return {state.dataset.records()[*best], state.dataset, state.reports};
}

MipOutcome run(const HyperSpace& space, const ReferenceConfig& reference, const ArchSet& archs, Evaluator& evaluator,
               const MipParams& params, const IterationObserver& observer) {
  MipState state = start_state(space, reference, archs, evaluator, params);
  if (observer) observer(state);
  return finish(state, archs, evaluator, observer);
}

// ---- serialization ----

namespace {

json objective_to_json(const ObjectiveParams& o) {
  return {{"lambda", o.lambda},
          {"cost_normalizer", o.cost_normalizer},
          {"sign", o.sign == CostSign::penalize ? "penalize" : "reward"}};
}

ObjectiveParams objective_from_json(const json& j) {
  ObjectiveParams o;
  o.lambda = j.at("lambda").get<double>();
  o.cost_normalizer = j.at("cost_normalizer").get<double>();
  const auto sign = j.at("sign").get<std::string>();
  if (sign != "penalize" && sign != "reward") throw InvalidArgument("unknown cost sign '" + sign + "'");
  o.sign = sign == "penalize" ? CostSign::penalize : CostSign::reward;
  return o;
}

ArchStatus status_from_name(const std::string& s) {
  for (auto st : {ArchStatus::ok, ArchStatus::timeout, ArchStatus::nonzero_exit, ArchStatus::parse_error,
                  ArchStatus::launch_error})
    if (status_name(st) == s) return st;
  throw InvalidArgument("unknown architecture status '" + s + "'");
}

}  // namespace

json params_to_json(const MipParams& p) {
  json forest = {{"n_trees", p.forest.n_trees},
                 {"min_leaf", p.forest.min_leaf},
                 {"bootstrap", p.forest.bootstrap},
                 {"feature_subsampling", p.forest.feature_subsampling}};
  forest["max_depth"] = p.forest.max_depth ? json(*p.forest.max_depth) : json(nullptr);
  return {{"samples_per_iteration", p.samples_per_iteration},
          {"tau", p.tau},
          {"objective", objective_to_json(p.objective)},
          {"forest", std::move(forest)},
          {"seed", p.seed},
          {"select_by", p.select_by == SelectBy::objective ? "objective" : "rs"},
          {"duplicate_retries", p.duplicate_retries}};
}

MipParams params_from_json(const json& j) {
  try {
    MipParams p;
    p.samples_per_iteration = j.at("samples_per_iteration").get<std::size_t>();
    p.tau = j.at("tau").get<double>();
    p.objective = objective_from_json(j.at("objective"));
    const auto& f = j.at("forest");
    p.forest.n_trees = f.at("n_trees").get<std::size_t>();
    p.forest.min_leaf = f.at("min_leaf").get<std::size_t>();
    p.forest.bootstrap = f.at("bootstrap").get<bool>();
    p.forest.feature_subsampling = f.value("feature_subsampling", false);
    if (f.contains("max_depth") && !f["max_depth"].is_null()) p.forest.max_depth = f["max_depth"].get<std::size_t>();
    p.seed = j.at("seed").get<std::uint64_t>();
    const auto sel = j.at("select_by").get<std::string>();
    if (sel != "objective" && sel != "rs") throw InvalidArgument("unknown selection key '" + sel + "'");
    p.select_by = sel == "objective" ? SelectBy::objective : SelectBy::rs;
    p.duplicate_retries = j.value("duplicate_retries", std::size_t{100});
    return p;
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("malformed MIP parameters: ") + e.what());
  }
}

json record_to_json(const HyperSpace& space, const TrialRecord& r) {
  return {{"iteration", r.iteration},
          {"config", config_to_json(space, r.config)},
          {"levels", r.config.levels},
          {"r_s", r.r_s},
          {"mean_cost", r.mean_cost},
          {"objective", r.objective},
          {"effective_n", r.effective_n},
          {"valid", r.valid}};
}

TrialRecord record_from_json(const HyperSpace& space, const json& j) {
  TrialRecord r;
  r.iteration = j.at("iteration").get<std::size_t>();
  r.config = config_from_json(space, j.at("config"));
  r.r_s = j.at("r_s").get<double>();
  r.mean_cost = j.at("mean_cost").get<double>();
  r.objective = j.at("objective").get<double>();
  r.effective_n = j.at("effective_n").get<std::size_t>();
  r.valid = j.at("valid").get<bool>();
  if (!(r.r_s >= -1.0 && r.r_s <= 1.0) || !(r.mean_cost >= 0.0)) throw InvalidArgument("trial record out of range");
  return r;
}

json eval_result_to_json(const EvalResult& r) {
  json scores = json::array();
  json status = json::array();
  for (std::size_t i = 0; i < r.size(); ++i) {
    scores.push_back(r.scores[i] ? json(*r.scores[i]) : json(nullptr));
    status.push_back(std::string(status_name(r.status[i])));
  }
  return {{"scores", std::move(scores)},
          {"status", std::move(status)},
          {"messages", r.messages},
          {"seconds", r.seconds},
          {"mean_cost", r.mean_cost}};
}

EvalResult eval_result_from_json(const json& j) {
  EvalResult r;
  for (const auto& s : j.at("scores")) r.scores.push_back(s.is_null() ? std::nullopt : std::optional(s.get<double>()));
  for (const auto& s : j.at("status")) r.status.push_back(status_from_name(s.get<std::string>()));
  r.messages = j.at("messages").get<std::vector<std::string>>();
  r.seconds = j.at("seconds").get<std::vector<double>>();
  r.mean_cost = j.at("mean_cost").get<double>();
  if (r.status.size() != r.scores.size() || r.messages.size() != r.scores.size() || r.seconds.size() != r.scores.size())
    throw InvalidArgument("evaluation result arrays are misaligned");
  return r;
}

json state_to_json(const MipState& s) {
  json mask = json::array();
  for (const auto& p : s.mask.pins()) mask.push_back(p ? json(*p) : json(nullptr));
  json records = json::array();
  for (const auto& r : s.dataset.records()) records.push_back(record_to_json(s.space, r));
  json reports = json::array();
  for (const auto& rep : s.reports) {
    json imp = json::array();
    for (const auto& v : rep.importances) imp.push_back(v ? json(*v) : json(nullptr));
    reports.push_back({{"iteration", rep.iteration},
                       {"importances", std::move(imp)},
                       {"uniform_fallback", rep.uniform_fallback},
                       {"pin",
                        {{"dim", rep.pin.dim},
                         {"level", rep.pin.level},
                         {"branch", rep.pin.branch == PinBranch::min_cost ? "min_cost" : "best_rs"},
                         {"importance", rep.pin.importance}}},
                       {"best_record", rep.best_record ? json(*rep.best_record) : json(nullptr)}});
  }
  return {{"iteration", s.iteration},
          {"mask", std::move(mask)},
          {"params", params_to_json(s.params)},
          {"reference_result", eval_result_to_json(s.reference_result)},
          {"records", std::move(records)},
          {"reports", std::move(reports)}};
}

MipState state_from_json(const HyperSpace& space, const ReferenceConfig& reference, const json& j) {
  try {
    MipState s{space, reference, PinMask(space.size()), 0, {}, {}, {}, {}, {}};
    s.iteration = j.at("iteration").get<std::size_t>();
    std::vector<std::optional<std::size_t>> pins;
    for (const auto& p : j.at("mask")) pins.push_back(p.is_null() ? std::nullopt : std::optional(p.get<std::size_t>()));
    s.mask = PinMask(std::move(pins));
    if (!s.mask.valid_for(space)) throw InvalidArgument("pin mask does not match the space");
    if (s.mask.pinned_count() != s.iteration) throw InvalidArgument("pin count differs from iteration count");
    s.params = params_from_json(j.at("params"));
    s.reference_result = eval_result_from_json(j.at("reference_result"));
    for (const auto& r : j.at("records")) s.dataset.append(record_from_json(space, r));
    for (const auto& jr : j.at("reports")) {
      IterationReport rep;
      rep.iteration = jr.at("iteration").get<std::size_t>();
      for (const auto& v : jr.at("importances"))
        rep.importances.push_back(v.is_null() ? std::nullopt : std::optional(v.get<double>()));
      rep.uniform_fallback = jr.at("uniform_fallback").get<bool>();
      const auto& jp = jr.at("pin");
      rep.pin.dim = jp.at("dim").get<std::size_t>();
      rep.pin.level = jp.at("level").get<std::size_t>();
      rep.pin.branch = jp.at("branch").get<std::string>() == "min_cost" ? PinBranch::min_cost : PinBranch::best_rs;
      rep.pin.importance = jp.at("importance").get<double>();
      if (!jr.at("best_record").is_null()) rep.best_record = jr["best_record"].get<std::size_t>();
      s.reports.push_back(std::move(rep));
    }
    if (s.reports.size() != s.iteration) throw InvalidArgument("report count differs from iteration count");
    return s;
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("malformed MIP state: ") + e.what());
  }
}

}  // namespace bpe
