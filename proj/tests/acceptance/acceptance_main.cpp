// Acceptance checks. One PASS/FAIL line per criterion; exits nonzero if any fail.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>

#include "bpe/cellspace.hpp"
#include "bpe/error.hpp"
#include "bpe/external.hpp"
#include "bpe/forest.hpp"
#include "bpe/hyperspace.hpp"
#include "bpe/mip.hpp"
#include "bpe/ranking.hpp"
#include "bpe/search.hpp"
#include "bpe/space_io.hpp"
#include "oracles.hpp"

using namespace bpe;
namespace fs = std::filesystem;

namespace {

// Collects the first few failure reasons of a criterion.
struct Check {
  bool ok = true;
  std::vector<std::string> why;

  void expect(bool cond, const std::string& msg) {
    if (cond) return;
    ok = false;
    if (why.size() < 3) why.push_back(msg);
  }
};

using Clock = std::chrono::steady_clock;

bool run_criterion(int id, const char* title, double limit_s, const std::function<void(Check&)>& body) {
  Check c;
  const auto t0 = Clock::now();
  try {
    body(c);
  } catch (const std::exception& e) {
    c.expect(false, std::string("exception: ") + e.what());
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  c.expect(secs < limit_s, "took " + std::to_string(secs) + " s, limit " + std::to_string(limit_s) + " s");
  std::printf("%s criterion %d: %s (%.2f s)\n", c.ok ? "PASS" : "FAIL", id, title, secs);
  for (const auto& w : c.why) std::printf("    %s\n", w.c_str());
  std::fflush(stdout);
  return c.ok;
}

class CountingEvaluator : public Evaluator {
 public:
  explicit CountingEvaluator(Evaluator& inner) : inner_(inner) {}
  EvalResult evaluate(const BpeConfig& c, const ArchSet& a) override {
    ++calls;
    return inner_.evaluate(c, a);
  }
  const HyperSpace& space() const noexcept override { return inner_.space(); }
  std::size_t calls = 0;

 private:
  Evaluator& inner_;
};

std::vector<double> softmax_oracle(std::vector<double> c) {
  const double lo = *std::min_element(c.begin(), c.end());
  const double hi = *std::max_element(c.begin(), c.end());
  double z = 0;
  for (auto& v : c) {
    v = std::exp(-(hi > lo ? (v - lo) / (hi - lo) : 0.0));
    z += v;
  }
  for (auto& v : c) v /= z;
  return c;
}

// ---------------------------------------------------------------------------

void spearman_oracle(Check& c) {
  Rng rng(20240101);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 2 + uniform_index(rng, 19);
    const bool ties = t % 2 == 0;
    std::vector<double> a(n), b(n);
    if (ties) {
      for (auto& x : a) x = static_cast<double>(uniform_index(rng, 4));
      for (auto& x : b) x = static_cast<double>(uniform_index(rng, 4));
    } else {
      // distinct values: shuffled integers plus a jitter that keeps order
      std::vector<double> base(n);
      for (std::size_t i = 0; i < n; ++i) base[i] = static_cast<double>(i);
      std::shuffle(base.begin(), base.end(), rng);
      a = base;
      std::shuffle(base.begin(), base.end(), rng);
      for (std::size_t i = 0; i < n; ++i) b[i] = base[i] * 1.7 + 0.25;
    }
    const double want = oracle::spearman(a, b);
    if (std::isnan(want)) {
      bool threw = false;
      try {
        spearman(a, b);
      } catch (const UndefinedCorrelation&) {
        threw = true;
      }
      c.expect(threw, "constant input did not raise UndefinedCorrelation");
      continue;
    }
    const double got = spearman(a, b);
    c.expect(std::abs(got - want) <= 1e-12, "trial " + std::to_string(t) + ": " + std::to_string(got) +
                                                " vs oracle " + std::to_string(want));
    if (!ties) {
      // Pearson of ranks and the d^2 shortcut are the same rational number:
      // cross-multiply in integers.
      const auto ra = oracle::doubled_ranks(a), rb = oracle::doubled_ranks(b);
      const long long N = static_cast<long long>(n);
      long long sa = 0, sb = 0, saa = 0, sab = 0, d2 = 0;
      for (std::size_t i = 0; i < n; ++i) {
        sa += ra[i];
        sb += rb[i];
        saa += ra[i] * ra[i];
        sab += ra[i] * rb[i];
        const long long d = (ra[i] - rb[i]) / 2;
        d2 += d * d;
      }
      const long long cov = N * sab - sa * sb, var = N * saa - sa * sa;
      const long long denom = N * (N * N - 1);
      c.expect(cov * denom == var * (denom - 6 * d2), "shortcut disagrees exactly on trial " + std::to_string(t));
      c.expect(std::abs(got - oracle::spearman_no_ties(a, b)) <= 1e-12, "shortcut value mismatch");
    }
  }
}

void forest_correctness(Check& c) {
  Rng rng(77);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 2 + uniform_index(rng, 29);
    const std::size_t d = 1 + uniform_index(rng, 4);
    std::vector<Sample> s(n);
    for (auto& x : s) {
      x.features.resize(d);
      for (auto& f : x.features) f = static_cast<double>(uniform_index(rng, 4));
      x.target = static_cast<double>(uniform_index(rng, 3));
    }
    std::vector<std::size_t> dims(d);
    std::iota(dims.begin(), dims.end(), 0);

    // exhaustive: every midpoint of every dim, children scored directly
    std::vector<double> all;
    for (const auto& x : s) all.push_back(x.target);
    const double slack = 1e-9 * std::max(oracle::variance(all), 1e-300);
    std::optional<SplitCandidate> want;
    double want_g = std::numeric_limits<double>::infinity();
    std::vector<std::pair<SplitCandidate, double>> cands;
    for (std::size_t k = 0; k < d; ++k) {
      std::set<double> vals;
      for (const auto& x : s) vals.insert(x.features[k]);
      for (auto it = vals.begin(); std::next(it) != vals.end(); ++it) {
        const double thr = 0.5 * (*it + *std::next(it));
        std::vector<double> l, r;
        for (const auto& x : s) (x.features[k] <= thr ? l : r).push_back(x.target);
        const double g = (l.size() * oracle::variance(l) + r.size() * oracle::variance(r)) / n;
        cands.push_back({{k, thr}, g});
        want_g = std::min(want_g, g);
      }
    }
    for (const auto& [cand, g] : cands)
      if (g <= want_g + slack) {
        want = cand;
        break;
      }
    const auto got = best_split(s, dims, 1);
    c.expect(got.has_value() == want.has_value() && (!got || *got == *want),
             "best_split differs from exhaustive enumeration on dataset " + std::to_string(t));

    const auto forest = RandomForest::fit(s, {.n_trees = 5, .min_leaf = 1, .seed = static_cast<std::uint64_t>(t)});
    bool any_split = false;
    for (const auto& tree : forest.trees())
      for (std::size_t i = 0; i < tree.nodes().size(); ++i)
        if (!tree.node(i).leaf) {
          c.expect(node_importance(tree, i) >= 0.0, "negative node importance");
          any_split = any_split || node_importance(tree, i) > 0.0;
        }
    if (any_split) {
      const auto imp = forest.feature_importance();
      c.expect(std::abs(std::accumulate(imp.begin(), imp.end(), 0.0) - 1.0) <= 1e-9, "importances do not sum to 1");
    }
  }

  std::vector<Sample> s(200);
  for (auto& x : s) {
    x.features.resize(8);
    for (auto& f : x.features) f = uniform01(rng);
    x.target = std::sin(6.0 * x.features[0]) + 0.05 * (uniform01(rng) - 0.5);
  }
  const auto forest = RandomForest::fit(s, {.n_trees = 50, .seed = 5});
  const double i0 = forest.feature_importance()[0];
  c.expect(i0 > 0.8, "importance of the signal feature is " + std::to_string(i0));
}

void sampling_law(Check& c) {
  auto preset = default_preset();
  std::vector<Dimension> dims(preset.space.dims().begin(), preset.space.dims().end());
  dims.push_back(Dimension("toy", {{"0", 0, 0}, {"1", 1, 1}, {"2", 2, 2}}));
  const HyperSpace space(dims);
  const PinMask mask(space.size());
  Rng rng(314159);
  const int draws = 10000;
  std::vector<std::vector<int>> counts(space.size());
  for (std::size_t d = 0; d < space.size(); ++d) counts[d].assign(space.dim(d).size(), 0);
  for (int i = 0; i < draws; ++i) {
    const auto cfg = sample_config(space, mask, rng);
    for (std::size_t d = 0; d < space.size(); ++d) ++counts[d][cfg.levels[d]];
  }
  for (std::size_t d = 0; d < space.size(); ++d) {
    const auto p = sampling_distribution(space.dim(d));
    const auto want = softmax_oracle(space.dim(d).costs());
    c.expect(std::abs(std::accumulate(p.begin(), p.end(), 0.0) - 1.0) <= 1e-9, "probabilities do not sum to 1");
    for (std::size_t j = 0; j < p.size(); ++j) {
      c.expect(std::abs(p[j] - want[j]) <= 1e-12, space.dim(d).name() + ": distribution differs from oracle");
      const double freq = counts[d][j] / static_cast<double>(draws);
      c.expect(std::abs(freq - want[j]) <= 0.02, space.dim(d).name() + " level " + std::to_string(j) +
                                                       ": frequency " + std::to_string(freq) + " vs " +
                                                       std::to_string(want[j]));
    }
  }
}

void search_space_count(Check& c) {
  BigInt want = 1;
  for (int i = 0; i < 14; ++i) want *= 8;
  want *= 2;
  c.expect(space_size(4, 8) == want, "space_size(4, 8) = " + space_size(4, 8).str());
  c.expect(want.str() == "8796093022208", "big-integer oracle mismatch");
  c.expect(edge_count(4) == 14, "edge_count(4) != 14");

  std::set<std::pair<int, int>> full;
  for (int dst = 1; dst <= 4; ++dst)
    for (int src = -1; src < dst; ++src) full.insert({src, dst});
  Rng rng(2718);
  for (int i = 0; i < 10000; ++i) {
    const auto g = random_genotype(4, rng);
    for (std::size_t cell = 0; cell < 2; ++cell) {
      std::set<std::pair<int, int>> seen;
      for (const auto& e : g.cell(cell).edges()) {
        c.expect(e.src < e.dst && e.src >= -1 && e.dst <= 4, "edge out of DAG order");
        c.expect(op_index(e.op) < kNumOps, "unknown op");
        seen.insert({e.src, e.dst});
      }
      c.expect(g.cell(cell).edge_count() == 14 && seen == full, "cell does not hold each DAG edge once");
    }
    c.expect(is_valid(g), "is_valid rejected a random genotype");
  }
}

void mip_structure(Check& c) {
  const auto p = default_preset();
  auto model = SurrogateModel::random(p.space, 4, 42, 0.1, 1.0);
  model.fidelity_weights[*p.space.index_of("epoch")] = 10;
  model.fidelity_weights[*p.space.index_of("layers")] = 10;
  const auto archs = ArchSet::random(100, 4, 43);
  MipParams params;
  params.samples_per_iteration = 10;
  params.seed = 44;

  std::string first_json;
  for (int rep = 0; rep < 2; ++rep) {
    SurrogateEvaluator inner(p.space, model);
    CountingEvaluator ev(inner);
    MipState st = start_state(p.space, p.reference, archs, ev, params);
    std::size_t observed = 0;
    finish(st, archs, ev, [&](const MipState& s) {
      ++observed;
      c.expect(s.mask.pinned_count() == s.iteration, "pin count differs from iteration");
    });
    c.expect(ev.calls == 81, "evaluations: " + std::to_string(ev.calls));
    c.expect(st.dataset.size() == 80, "dataset size " + std::to_string(st.dataset.size()));
    c.expect(observed == 8 && st.reports.size() == 8 && st.mask.pinned_count() == 8, "expected 8 iterations/pins");
    std::set<std::size_t> pinned;
    for (const auto& r : st.reports) pinned.insert(r.pin.dim);
    c.expect(pinned.size() == 8, "a dimension was pinned twice");
    std::string j = state_to_json(st).dump();
    for (const auto& f : st.forests) j += f ? f->to_json().dump() : "-";
    if (rep == 0) first_json = j;
    else c.expect(j == first_json, "rerun with the same seed is not bit-identical");
  }
}

void mip_ground_truth(Check& c) {
  const auto p = default_preset();
  const std::size_t epoch = *p.space.index_of("epoch");
  const std::size_t layers = *p.space.index_of("layers");
  auto median_value = [&](std::size_t d) {
    std::vector<double> v;
    for (const auto& l : p.space.dim(d).levels()) v.push_back(std::stod(l.value));
    std::sort(v.begin(), v.end());
    return v.size() % 2 ? v[v.size() / 2] : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
  };
  const double med_epoch = median_value(epoch), med_layers = median_value(layers);

  int first_ok = 0, final_ok = 0;
  const int runs = 10;
  for (int s = 0; s < runs; ++s) {
    auto model = SurrogateModel::random(p.space, 4, 1000 + s, 0.1, 1.0);
    model.fidelity_weights[epoch] = 10;
    model.fidelity_weights[layers] = 10;
    SurrogateEvaluator ev(p.space, model);
    const auto archs = ArchSet::random(100, 4, 2000 + s);
    MipParams params;
    params.seed = 3000 + s;
    const auto out = run(p.space, p.reference, archs, ev, params);
    const auto first = out.reports.front().pin.dim;
    first_ok += first != epoch && first != layers;
    const double e = std::stod(p.space.dim(epoch).level(out.best.config.levels[epoch]).value);
    const double l = std::stod(p.space.dim(layers).level(out.best.config.levels[layers]).value);
    final_ok += e >= med_epoch && l >= med_layers;
  }
  c.expect(first_ok >= 7, "first pin outside {epoch, layers} in " + std::to_string(first_ok) + "/10 runs");
  c.expect(final_ok >= 7, "final config at/above median epoch and layers in " + std::to_string(final_ok) + "/10 runs");
  std::printf("    first pin outside {epoch, layers}: %d/10; final config at/above medians: %d/10\n", first_ok,
              final_ok);
}

void prune_branches(Check& c) {
  const HyperSpace s({Dimension("a", {{"a0", 0, 0.5}, {"a1", 1, 0.1}, {"a2", 2, 0.9}}),
                      Dimension("b", {{"b0", 0, 0.0}, {"b1", 1, 1.0}, {"b2", 2, 2.0}, {"b3", 3, 3.0}}),
                      Dimension("c", {{"c0", 0, 0.3}, {"c1", 1, 0.2}})});
  const ReferenceConfig ref{BpeConfig{{2, 3, 1}}};
  auto model = SurrogateModel::random(s, 2, 5, 0.2, 1.0);
  model.fidelity_weights = {3, 3, 3};
  SurrogateEvaluator ev(s, model);
  const auto archs = ArchSet::random(40, 2, 6);
  for (double tau : {1.0, 0.0}) {
    MipParams params;
    params.tau = tau;
    params.seed = 7;
    MipState st = start_state(s, ref, archs, ev, params);
    finish(st, archs, ev);
    c.expect(st.reports.size() == 3, "expected three pins");
    const auto recs = st.dataset.records();
    for (std::size_t k = 0; k < st.reports.size(); ++k) {
      const auto& pin = st.reports[k].pin;
      std::size_t want;
      if (tau >= 1.0) {
        want = s.dim(pin.dim).min_cost_level();
      } else {
        std::optional<std::size_t> best;
        for (std::size_t i = 0; i < (k + 1) * params.samples_per_iteration; ++i)
          if (recs[i].valid && (!best || recs[i].r_s > recs[*best].r_s)) best = i;
        want = recs[*best].config.levels[pin.dim];
      }
      c.expect(pin.level == want, "tau " + std::to_string(tau) + " iteration " + std::to_string(k + 1) +
                                      ": pinned level " + std::to_string(pin.level) + ", expected " +
                                      std::to_string(want));
    }
  }
}

void search_strategies(Check& c) {
  const auto p = default_preset();
  const auto cfg = preset_bpe1(p.space);

  int ea_wins = 0;
  for (int s = 0; s < 10; ++s) {
    const auto model = SurrogateModel::random(p.space, 4, 500 + s, 0.1, 1e-12);
    SurrogateEvaluator ev(p.space, model);
    ArchScorer rs_scorer(ev, cfg), ea_scorer(ev, cfg);
    const auto rs = random_search(4, rs_scorer, {500, 600 + static_cast<std::uint64_t>(s)});
    const auto ea = evolution_search(4, ea_scorer, {500, 600 + static_cast<std::uint64_t>(s)}, {50, 10});
    ea_wins += surrogate_true_quality(model, ea.best) >= surrogate_true_quality(model, rs.best);
  }
  c.expect(ea_wins >= 8, "EA >= RS in " + std::to_string(ea_wins) + "/10 paired runs");

  // single-edge bandit: only edge 0 of the normal cell carries signal
  auto bandit = SurrogateModel::random(p.space, 1, 9, 0.0, 1e-12);
  bandit.op_score(0, 0, OpKind::sep_conv_5x5) = 3.0;
  SurrogateEvaluator bandit_ev(p.space, bandit);
  ArchScorer bandit_scorer(bandit_ev, cfg);
  Policy policy(1, {0.5, 0.9, 20});
  Rng rng(10);
  for (int step = 0; step < 500; ++step) {
    const auto g = policy.sample(rng);
    policy.update(g, bandit_scorer.score(g));
  }
  const double pd = policy.probabilities(0, 0)[op_index(OpKind::sep_conv_5x5)];
  c.expect(pd > 0.9, "dominant op probability after 500 steps: " + std::to_string(pd));

  int rs_hits = 0;
  for (int s = 0; s < 10; ++s) {
    const auto model = SurrogateModel::random(p.space, 4, 700 + s, 0.1, 1e-12);
    Rng base(800 + s);
    std::vector<double> q(10000);
    for (auto& v : q) v = surrogate_true_quality(model, random_genotype(4, base));
    std::sort(q.begin(), q.end());
    const double p95 = q[static_cast<std::size_t>(0.95 * (q.size() - 1))];
    SurrogateEvaluator ev(p.space, model);
    ArchScorer scorer(ev, cfg);
    const auto rs = random_search(4, scorer, {100, 900 + static_cast<std::uint64_t>(s)});
    rs_hits += surrogate_true_quality(model, rs.best) >= p95;
  }
  c.expect(rs_hits >= 9, "random search reached the 95th percentile in " + std::to_string(rs_hits) + "/10 runs");
  std::printf("    EA >= RS: %d/10; dominant-op probability: %.4f; RS >= p95: %d/10\n", ea_wins, pd, rs_hits);
}

void table_reproduction(Check& c) {
  const auto p = default_preset();
  const auto& s = p.space;
  const auto bpe1 = s.config_from_values({{"epoch", "10"}, {"batch_size", "128"}, {"learning_rate", "0.03"},
                                          {"layers", "6"}, {"channels", "8"}, {"image_size", "16"}},
                                         preset_bpe1(s));
  const auto bpe2 = s.config_from_values({{"epoch", "30"}, {"batch_size", "128"}, {"learning_rate", "0.03"},
                                          {"layers", "16"}, {"channels", "16"}, {"image_size", "16"}},
                                         preset_bpe2(s));
  c.expect(bpe1 == preset_bpe1(s), "BPE-1 preset differs from the published setting");
  c.expect(bpe2 == preset_bpe2(s), "BPE-2 preset differs from the published setting");
  c.expect(parse_bpe_cfg(s, format_bpe_cfg(s, bpe1)) == bpe1, "BPE-1 does not load back");
  c.expect(parse_bpe_cfg(s, format_bpe_cfg(s, bpe2)) == bpe2, "BPE-2 does not load back");

  // BPE-2: r_s 0.63 at 0.55 GPU-hours; DARTS setting: 0.57 at 1.38.
  // Difference is 0.06 + lambda (1 - 0.55/1.38) > 0 for every lambda > 0.
  for (int k = 1; k < 1000; ++k) {
    const ObjectiveParams op{k / 1000.0, 1.38, CostSign::penalize};
    const double ours = objective(0.63, 0.55, op), darts = objective(0.57, 1.38, op);
    c.expect(ours > darts, "BPE-2 does not beat DARTS at lambda " + std::to_string(op.lambda));
  }
  for (double lam : {1e-9, 1 - 1e-9}) {
    const ObjectiveParams op{lam, 1.38, CostSign::penalize};
    c.expect(objective(0.63, 0.55, op) > objective(0.57, 1.38, op), "comparison fails near the interval ends");
  }
}

void external_protocol(Check& c) {
  const auto p = default_preset();
  const fs::path root = fs::temp_directory_path() / "bpe_acceptance_external";
  fs::remove_all(root);
  fs::create_directories(root);
  const auto archs = ArchSet::random(5, 2, 11);
  const fs::path stub = root / "stub.sh";
  std::ofstream(stub) << "#!/bin/sh\n"
                         "case \"$BPE_ARCH_ID\" in\n"
                         "  " << archs.ids[1] << ") sleep 20 ;;\n"
                         "  " << archs.ids[3] << ") echo abc > result.txt ;;\n"
                         "  *) wc -c < genotype.txt | sed 's/^ */0./' > result.txt ;;\n"
                         "esac\n";
  fs::permissions(stub, fs::perms::owner_all);
  ExternalProtocol proto;
  proto.command = stub.string();
  proto.work_root = root / "work";
  proto.cache_dir = root / "cache";
  proto.timeout_seconds = 1.0;
  proto.parallelism = 2;
  const auto cfg = preset_bpe1(p.space);

  // 1. success, 2. timeout, 3. parse failure: one run, failures isolated per architecture
  ExternalEvaluator first(p.space, proto);
  const auto r = first.evaluate(cfg, archs);
  c.expect(first.command_invocations() == 5, "expected five command runs");
  c.expect(r.status[1] == ArchStatus::timeout, "timeout not reported for " + archs.ids[1]);
  c.expect(r.status[3] == ArchStatus::parse_error, "parse error not reported for " + archs.ids[3]);
  c.expect(r.messages[1].find(archs.ids[1]) != std::string::npos, "timeout message lacks the architecture id");
  c.expect(r.messages[3].find(archs.ids[3]) != std::string::npos, "parse message lacks the architecture id");
  for (std::size_t i : {0u, 2u, 4u}) {
    const double want = std::stod("0." + std::to_string(encode(archs.genotypes[i]).size()));
    c.expect(r.status[i] == ArchStatus::ok && r.scores[i] && *r.scores[i] == want,
             "architecture " + archs.ids[i] + " did not succeed with its own score");
  }
  c.expect(r.effective_n() == 3, "expected three successes");

  // 4. cache hit: successes come from the cache, failures are retried
  ExternalEvaluator second(p.space, proto);
  const auto r2 = second.evaluate(cfg, archs);
  c.expect(second.cache_hits() == 3 && second.command_invocations() == 2, "cache did not serve the successes");
  for (std::size_t i : {0u, 2u, 4u}) c.expect(r2.scores[i] == r.scores[i] && r2.seconds[i] == r.seconds[i],
                                              "cached entry is not bit-identical");
  fs::remove_all(root);
}

}  // namespace

int main() {
  int failed = 0;
  failed += !run_criterion(1, "Spearman matches brute-force rank/Pearson oracle", 5, spearman_oracle);
  failed += !run_criterion(2, "forest split search, importances, signal recovery", 30, forest_correctness);
  failed += !run_criterion(3, "config sampling follows the cost softmax", 5, sampling_law);
  failed += !run_criterion(4, "cell search space size 2 x 8^14 and genotype invariants", 5, search_space_count);
  failed += !run_criterion(5, "MIP run: 81 evaluations, 8 pins, reproducible", 60, mip_structure);
  failed += !run_criterion(6, "MIP recovers the fidelity dimensions", 600, mip_ground_truth);
  failed += !run_criterion(7, "pruning rule: tau=1 cheapest, tau=0 best-r_s", 10, prune_branches);
  failed += !run_criterion(8, "EA beats RS, RL concentrates, RS reaches p95", 300, search_strategies);
  failed += !run_criterion(9, "BPE-1/BPE-2 configs and objective dominance over DARTS", 1, table_reproduction);
  failed += !run_criterion(10, "external command: success, timeout, parse error, cache", 30, external_protocol);
  std::printf("%d of 10 criteria failed\n", failed);
  return failed == 0 ? 0 : 1;
}
