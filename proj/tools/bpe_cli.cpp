// Command-line front end: space inspection, MIP runs, architecture search,
// rank correlation, and run reports.
//
// Exit codes: 0 success, 2 usage error, 3 evaluator failure, 4 invalid archive.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "bpe/error.hpp"
#include "bpe/external.hpp"
#include "bpe/mip.hpp"
#include "bpe/report.hpp"
#include "bpe/run_archive.hpp"
#include "bpe/search.hpp"
#include "bpe/space_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitEvaluator = 3;
constexpr int kExitArchive = 4;

struct GlobalOptions {
  std::uint64_t seed = 0;
  std::string run_dir;
  std::string evaluator = "surrogate";
  double lambda = 0.5;
  std::string select_by = "objective";
  double tau = 0.1;
};

struct EvaluatorOptions {
  std::string space_file;
  int nodes = 4;
  // surrogate
  double noise = 1.0;
  double op_scale = 0.1;
  std::vector<std::string> fidelity;
  std::vector<std::string> bias;
  // external
  std::string command;
  double timeout = 3600.0;
  std::size_t parallelism = 1;
  std::string work_dir;
  std::string cache_dir;
};

void add_evaluator_options(CLI::App* cmd, EvaluatorOptions& o) {
  cmd->add_option("--space", o.space_file, "Space definition file (JSON); default preset otherwise");
  cmd->add_option("--nodes", o.nodes, "Intermediate nodes per cell")->check(CLI::PositiveNumber);
  cmd->add_option("--noise", o.noise, "Surrogate noise scale")->check(CLI::PositiveNumber);
  cmd->add_option("--op-scale", o.op_scale, "Surrogate op weight spread");
  cmd->add_option("--fidelity", o.fidelity, "Surrogate fidelity weight, name=w (repeatable)");
  cmd->add_option("--bias", o.bias, "Surrogate bias weight, name=w (repeatable)");
  cmd->add_option("--command", o.command, "External evaluator shell command");
  cmd->add_option("--timeout", o.timeout, "External command timeout in seconds")->check(CLI::PositiveNumber);
  cmd->add_option("--parallelism", o.parallelism, "Concurrent external commands")->check(CLI::PositiveNumber);
  cmd->add_option("--work-dir", o.work_dir, "External evaluator work root");
  cmd->add_option("--cache-dir", o.cache_dir, "External evaluator cache directory");
}

bpe::SpaceDefinition load_space(const std::string& file) {
  if (file.empty()) {
    auto preset = bpe::default_preset();
    return {std::move(preset.space), std::move(preset.reference)};
  }
  return bpe::load_space_file(file);
}

std::map<std::string, double> parse_weights(const std::vector<std::string>& items) {
  std::map<std::string, double> out;
  for (const auto& item : items) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw bpe::InvalidArgument("expected name=weight, got '" + item + "'");
    try {
      out[item.substr(0, eq)] = std::stod(item.substr(eq + 1));
    } catch (const std::exception&) {
      throw bpe::InvalidArgument("bad weight in '" + item + "'");
    }
  }
  return out;
}

json evaluator_spec(const GlobalOptions& g, const EvaluatorOptions& o, const bpe::HyperSpace& space,
                    const fs::path& run_dir) {
  if (g.evaluator == "surrogate") {
    auto model = bpe::SurrogateModel::random(space, o.nodes, g.seed, o.op_scale, o.noise);
    auto fidelity = parse_weights(o.fidelity);
    if (o.fidelity.empty())
      for (const auto& [name, w] : std::map<std::string, double>{
               {"epoch", 6.0}, {"layers", 4.0}, {"channels", 2.0}, {"image_size", 2.0}})
        if (space.index_of(name)) fidelity[name] = w;
    for (const auto& [name, w] : fidelity) {
      auto d = space.index_of(name);
      if (!d) throw bpe::InvalidArgument("unknown dimension '" + name + "' in --fidelity");
      model.fidelity_weights[*d] = w;
    }
    for (const auto& [name, w] : parse_weights(o.bias)) {
      auto d = space.index_of(name);
      if (!d) throw bpe::InvalidArgument("unknown dimension '" + name + "' in --bias");
      model.bias_weights[*d] = w;
    }
    return {{"kind", "surrogate"}, {"model", model.to_json()}};
  }
  if (g.evaluator == "external") {
    bpe::ExternalProtocol p;
    p.command = o.command;
    p.timeout_seconds = o.timeout;
    p.parallelism = o.parallelism;
    p.work_root = o.work_dir.empty() ? fs::absolute(run_dir / "work") : fs::absolute(o.work_dir);
    p.cache_dir = o.cache_dir.empty() ? fs::absolute(run_dir / "cache") : fs::absolute(o.cache_dir);
    p.validate();
    return {{"kind", "external"}, {"protocol", p.to_json()}};
  }
  throw bpe::InvalidArgument("unknown evaluator '" + g.evaluator + "'");
}

fs::path require_run_dir(const GlobalOptions& g) {
  if (g.run_dir.empty()) throw CLI::RequiredError("--run-dir");
  return g.run_dir;
}

void print_outcome(const bpe::MipState& state) {
  const auto best = bpe::select_best(state.dataset, state.params.select_by);
  std::cout << bpe::report_tsv(state);
  if (best) {
    const auto& r = state.dataset.records()[*best];
    std::cout << "best: " << state.space.describe(r.config) << "\n"
              << "  r_s=" << r.r_s << " mean_cost=" << r.mean_cost << " objective=" << r.objective << "\n";
  }
  std::cout << "pareto (r_s, mean_cost):\n";
  for (const auto& p : bpe::pareto_front(state.dataset))
    std::cout << "  " << p.r_s << "\t" << p.mean_cost << "\t" << state.space.describe(p.config) << "\n";
}

void finish_mip(const bpe::RunArchive& archive, bpe::MipState& state) {
  const auto archs = archive.archs();
  auto evaluator = archive.evaluator();
  auto observer = [&](const bpe::MipState& s) {
    archive.save_state(s);
    const auto& rep = s.reports.back();
    std::cerr << "iteration " << rep.iteration << ": pinned " << s.space.dim(rep.pin.dim).name() << "="
              << s.space.dim(rep.pin.dim).level(rep.pin.level).value << "\n";
  };
  bpe::finish(state, archs, *evaluator, observer);
  print_outcome(state);
}

void cmd_mip_run(const GlobalOptions& g, const EvaluatorOptions& o, std::size_t samples, std::size_t n_archs,
                 std::size_t trees, const std::string& sign) {
  const fs::path dir = require_run_dir(g);
  auto def = load_space(o.space_file);
  if (!def.reference) throw bpe::InvalidArgument("space definition needs a reference config for MIP");

  bpe::MipParams params;
  params.samples_per_iteration = samples;
  params.tau = g.tau;
  params.seed = g.seed;
  params.objective.lambda = g.lambda;
  if (sign != "penalize" && sign != "reward") throw bpe::InvalidArgument("--cost-sign must be penalize or reward");
  params.objective.sign = sign == "penalize" ? bpe::CostSign::penalize : bpe::CostSign::reward;
  if (g.select_by != "objective" && g.select_by != "rs")
    throw bpe::InvalidArgument("--select-by must be objective or rs");
  params.select_by = g.select_by == "objective" ? bpe::SelectBy::objective : bpe::SelectBy::rs;
  params.forest.n_trees = trees;
  params.validate();

  const auto archs = bpe::ArchSet::random(n_archs, o.nodes, bpe::derive_seed(g.seed, 0xA4C));
  json manifest = {{"kind", "mip"},
                   {"seed", g.seed},
                   {"space", bpe::definition_to_json(def)},
                   {"archs", bpe::archs_to_json(archs)},
                   {"evaluator", evaluator_spec(g, o, def.space, dir)},
                   {"params", bpe::params_to_json(params)}};
  const auto archive = bpe::RunArchive::create(dir, std::move(manifest));
  auto evaluator = archive.evaluator();
  bpe::MipState state = bpe::start_state(def.space, *def.reference, archs, *evaluator, params);
  archive.save_state(state);
  finish_mip(archive, state);
}

void cmd_mip_resume(const GlobalOptions& g) {
  const auto archive = bpe::RunArchive::open(require_run_dir(g));
  if (archive.kind() != bpe::RunKind::mip) throw bpe::ArchiveError("not a MIP run");
  if (!archive.has_state()) throw bpe::ArchiveError("run has no state snapshot to resume from");
  bpe::MipState state = archive.load_state();
  std::cerr << "resuming at iteration " << state.iteration << " of " << state.space.size() << "\n";
  finish_mip(archive, state);
}

void cmd_mip_report(const GlobalOptions& g) {
  const auto archive = bpe::RunArchive::open(require_run_dir(g));
  if (!archive.has_state()) throw bpe::ArchiveError("run has no state snapshot");
  print_outcome(archive.load_state());
}

bpe::BpeConfig resolve_bpe(const std::string& which, const bpe::SpaceDefinition& def) {
  if (which == "reference") {
    if (!def.reference) throw bpe::InvalidArgument("space has no reference config");
    return def.reference->config;
  }
  if (which == "bpe1") return bpe::preset_bpe1(def.space);
  if (which == "bpe2") return bpe::preset_bpe2(def.space);
  if (which == "darts") return bpe::preset_darts(def.space);
  std::ifstream in(which);
  if (!in) throw bpe::InvalidArgument("--bpe must be bpe1, bpe2, darts, reference, or a bpe.cfg file");
  std::ostringstream os;
  os << in.rdbuf();
  return bpe::parse_bpe_cfg(def.space, os.str());
}

struct SearchOptions {
  std::string strategy = "ea";
  std::size_t budget = 100;
  std::string bpe = "bpe1";
  std::string from_run;
  std::size_t population = 50;
  std::size_t tournament = 10;
  double lr = 0.05;
  double decay = 0.9;
};

void cmd_search_run(const GlobalOptions& g, const EvaluatorOptions& o, const SearchOptions& s) {
  bpe::SpaceDefinition def = load_space(o.space_file);
  bpe::BpeConfig config;
  std::unique_ptr<bpe::Evaluator> evaluator;
  if (!s.from_run.empty()) {
    const auto mip_run = bpe::RunArchive::open(s.from_run);
    const auto state = mip_run.load_state();
    const auto best = bpe::select_best(state.dataset, state.params.select_by);
    if (!best) throw bpe::ArchiveError("MIP run has no valid record to take a config from");
    def = mip_run.space_definition();
    config = state.dataset.records()[*best].config;
  } else {
    config = resolve_bpe(s.bpe, def);
  }
  const fs::path dir = g.run_dir.empty() ? fs::path("search-run") : fs::path(g.run_dir);
  const json spec = evaluator_spec(g, o, def.space, dir);
  evaluator = bpe::make_evaluator(spec, def.space);

  bpe::ArchScorer scorer(*evaluator, config);
  const bpe::SearchBudget budget{s.budget, g.seed};
  bpe::SearchResult result = [&] {
    if (s.strategy == "rs") return bpe::random_search(o.nodes, scorer, budget);
    if (s.strategy == "ea") return bpe::evolution_search(o.nodes, scorer, budget, {s.population, s.tournament});
    if (s.strategy == "rl") return bpe::rl_search(o.nodes, scorer, budget, {s.lr, s.decay, 20}).search;
    throw bpe::InvalidArgument("--strategy must be rs, ea, or rl");
  }();

  if (!g.run_dir.empty()) {
    json manifest = {{"kind", "search"},
                     {"seed", g.seed},
                     {"strategy", s.strategy},
                     {"budget", s.budget},
                     {"space", bpe::definition_to_json(def)},
                     {"config", bpe::config_to_json(def.space, config)},
                     {"evaluator", spec}};
    const auto archive = bpe::RunArchive::create(dir, std::move(manifest));
    bpe::write_atomic(archive.dir() / "trace.jsonl", bpe::trace_to_jsonl(result.trace));
  }
  std::cout << "strategy: " << s.strategy << "  config: " << def.space.describe(config) << "\n"
            << "evaluations: " << result.evaluations << "\n"
            << "best score: " << result.best_score << "\n"
            << "best genotype:\n"
            << bpe::encode(result.best);
}

void cmd_rank_corr(const std::string& a, const std::string& b) {
  const auto ta = bpe::load_result_table(a);
  const auto tb = bpe::load_result_table(b);
  const auto r = bpe::corr(ta, tb);
  std::cout << "r_s=" << r.r_s << " n=" << r.common << " overlap=" << r.overlap << "\n";
  if (r.low_overlap) std::cerr << "warning: tables share only " << r.overlap * 100 << "% of their ids\n";
}

void write_if(const std::string& out_dir, const std::string& name, const std::string& content) {
  if (out_dir.empty()) return;
  fs::create_directories(out_dir);
  bpe::write_atomic(fs::path(out_dir) / name, content);
}

void cmd_report_importance(const GlobalOptions& g, const std::string& context, const std::string& out_dir) {
  const auto archive = bpe::RunArchive::open(require_run_dir(g));
  if (context != "best" && context != "min-cost") throw bpe::InvalidArgument("--context must be best or min-cost");
  const auto rep = bpe::importance_report(
      archive, context == "best" ? bpe::CurveContext::best_record : bpe::CurveContext::min_cost);
  std::cout << rep.to_text();
  write_if(out_dir, "importance.csv", rep.importance_csv());
  write_if(out_dir, "curves.csv", rep.curves_csv());
}

void cmd_report_pareto(const GlobalOptions& g, const std::string& out_dir) {
  const auto archive = bpe::RunArchive::open(require_run_dir(g));
  const auto front = bpe::pareto_report(archive);
  const auto csv = bpe::pareto_csv(archive.space_definition().space, front);
  std::cout << csv;
  write_if(out_dir, "pareto.csv", csv);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Budgeted performance estimation search via minimum importance pruning", "bpe"};
  app.require_subcommand(1);
  GlobalOptions g;
  app.add_option("--seed", g.seed, "Random seed")->capture_default_str();
  app.add_option("--run-dir", g.run_dir, "Run directory");
  app.add_option("--evaluator", g.evaluator, "surrogate | external")->capture_default_str();
  app.add_option("--lambda", g.lambda, "Cost weight in the objective, in (0, 1)")->capture_default_str();
  app.add_option("--select-by", g.select_by, "objective | rs")->capture_default_str();
  app.add_option("--tau", g.tau, "Importance threshold for the min-cost pin")->capture_default_str();
  app.fallthrough();

  EvaluatorOptions eo;

  auto* space = app.add_subcommand("space", "Inspect hyper-parameter spaces");
  space->require_subcommand(1);
  auto* space_show = space->add_subcommand("show", "Print a space definition (default preset)");
  std::string show_file;
  space_show->add_option("--space", show_file, "Space definition file");
  auto* space_validate = space->add_subcommand("validate", "Check a space definition file");
  std::string validate_file;
  space_validate->add_option("file", validate_file)->required();

  auto* mip = app.add_subcommand("mip", "Minimum importance pruning runs");
  mip->require_subcommand(1);
  auto* mip_run = mip->add_subcommand("run", "Start a new run in --run-dir");
  std::size_t samples = 10, n_archs = 100, trees = 50;
  std::string sign = "penalize";
  mip_run->add_option("-K,--samples", samples, "Configs sampled per iteration")->capture_default_str();
  mip_run->add_option("--archs", n_archs, "Architecture set size")->capture_default_str();
  mip_run->add_option("--trees", trees, "Trees per forest")->capture_default_str();
  mip_run->add_option("--cost-sign", sign, "penalize | reward")->capture_default_str();
  add_evaluator_options(mip_run, eo);
  auto* mip_resume = mip->add_subcommand("resume", "Continue the run in --run-dir");
  auto* mip_report = mip->add_subcommand("report", "Summarize the run in --run-dir");

  auto* search = app.add_subcommand("search", "Architecture search under a fixed config");
  search->require_subcommand(1);
  auto* search_run = search->add_subcommand("run", "Run one strategy");
  SearchOptions so;
  search_run->add_option("--strategy", so.strategy, "rs | ea | rl")->capture_default_str();
  search_run->add_option("--budget", so.budget, "Evaluator invocations")->capture_default_str();
  search_run->add_option("--bpe", so.bpe, "bpe1 | bpe2 | darts | reference | path to bpe.cfg")->capture_default_str();
  search_run->add_option("--from-run", so.from_run, "Use the best config of a MIP run");
  search_run->add_option("--population", so.population)->capture_default_str();
  search_run->add_option("--tournament", so.tournament)->capture_default_str();
  search_run->add_option("--lr", so.lr, "RL step size")->capture_default_str();
  search_run->add_option("--decay", so.decay, "RL baseline decay")->capture_default_str();
  add_evaluator_options(search_run, eo);

  auto* rank = app.add_subcommand("rank", "Rank statistics");
  rank->require_subcommand(1);
  auto* rank_corr = rank->add_subcommand("corr", "Spearman between two id,score CSV files");
  std::string csv_a, csv_b;
  rank_corr->add_option("a", csv_a)->required();
  rank_corr->add_option("b", csv_b)->required();

  auto* report = app.add_subcommand("report", "Run diagnostics");
  report->require_subcommand(1);
  std::string context = "best", out_dir;
  auto* report_importance = report->add_subcommand("importance", "Importance table and predicted r_s curves");
  report_importance->add_option("--context", context, "best | min-cost")->capture_default_str();
  report_importance->add_option("--out-dir", out_dir, "Write importance.csv and curves.csv here");
  auto* report_pareto = report->add_subcommand("pareto", "Non-dominated (r_s, cost) trials");
  report_pareto->add_option("--out-dir", out_dir, "Write pareto.csv here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (*space_show) {
      std::cout << bpe::definition_to_json(load_space(show_file)).dump(2) << "\n";
    } else if (*space_validate) {
      const auto def = bpe::load_space_file(validate_file);
      std::cout << "ok: " << def.space.size() << " dimensions"
                << (def.reference ? ", reference config present" : "") << "\n";
    } else if (*mip_run) {
      cmd_mip_run(g, eo, samples, n_archs, trees, sign);
    } else if (*mip_resume) {
      cmd_mip_resume(g);
    } else if (*mip_report) {
      cmd_mip_report(g);
    } else if (*search_run) {
      cmd_search_run(g, eo, so);
    } else if (*rank_corr) {
      cmd_rank_corr(csv_a, csv_b);
    } else if (*report_importance) {
      cmd_report_importance(g, context, out_dir);
    } else if (*report_pareto) {
      cmd_report_pareto(g, out_dir);
    }
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const bpe::ArchiveError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitArchive;
  } catch (const bpe::EvaluatorError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitEvaluator;
  } catch (const bpe::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
