#include "bpe/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "bpe/error.hpp"
#include "bpe/ranking.hpp"

namespace bpe {

namespace {

std::string full(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string short_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

// Quotes a CSV field when it holds a comma, quote, or newline.
std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

void ResultTable::validate() const {
  if (ids.size() != scores.size()) throw InvalidArgument("result table columns are misaligned");
  std::set<std::string> seen;
  for (const auto& id : ids)
    if (!seen.insert(id).second) throw InvalidArgument("duplicate id '" + id + "' in result table " + label);
  for (double s : scores)
    if (!std::isfinite(s)) throw InvalidArgument("non-finite score in result table " + label);
}

ResultTable parse_result_csv(const std::string& text, std::string label) {
  ResultTable t;
  t.label = std::move(label);
  std::istringstream in(text);
  std::string line;
  bool header = true;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos)
      throw InvalidArgument("line " + std::to_string(lineno) + ": expected 'id,score'");
    std::string id = trim(std::string_view(line).substr(0, comma));
    std::string score = trim(std::string_view(line).substr(comma + 1));
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(score.data(), score.data() + score.size(), v);
    if (id.empty() || ec != std::errc{} || ptr != score.data() + score.size())
      throw InvalidArgument("line " + std::to_string(lineno) + ": cannot parse '" + trim(line) + "'");
    t.ids.push_back(std::move(id));
    t.scores.push_back(v);
  }
  t.validate();
  return t;
}

ResultTable load_result_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  ResultTable t = parse_result_csv(os.str(), path.stem().string());
  t.source = path.string();
  return t;
}

std::string result_table_csv(const ResultTable& table) {
  std::string out = "id,score\n";
  for (std::size_t i = 0; i < table.ids.size(); ++i) out += table.ids[i] + "," + full(table.scores[i]) + "\n";
  return out;
}

CorrResult corr(const ResultTable& a, const ResultTable& b) {
  a.validate();
  b.validate();
  std::map<std::string, double> rhs;
  for (std::size_t i = 0; i < b.ids.size(); ++i) rhs.emplace(b.ids[i], b.scores[i]);
  std::vector<double> va, vb;
  for (std::size_t i = 0; i < a.ids.size(); ++i)
    if (auto it = rhs.find(a.ids[i]); it != rhs.end()) {
      va.push_back(a.scores[i]);
      vb.push_back(it->second);
    }
  if (va.size() < 2)
    throw InvalidArgument("tables share " + std::to_string(va.size()) + " ids; at least two are needed");
  CorrResult r;
  r.common = va.size();
  r.overlap = static_cast<double>(va.size()) / static_cast<double>(std::max(a.ids.size(), b.ids.size()));
  r.low_overlap = r.overlap < kMinEffectiveFraction;
  r.r_s = spearman(va, vb);
  return r;
}

ImportanceReport importance_report(const MipState& state, CurveContext context) {
  ImportanceReport rep;
  const HyperSpace& space = state.space;
  for (const auto& d : space.dims()) {
    rep.dim_names.push_back(d.name());
    std::vector<std::string> vals;
    for (const auto& l : d.levels()) vals.push_back(l.value);
    rep.level_values.push_back(std::move(vals));
  }

  std::vector<std::optional<std::size_t>> pinned_at(space.size());
  for (const auto& r : state.reports) pinned_at.at(r.pin.dim) = r.iteration;

  for (const auto& r : state.reports) {
    ImportanceRow row;
    row.iteration = r.iteration;
    row.importances = r.importances;
    row.uniform_fallback = r.uniform_fallback;
    row.pinned_at.resize(space.size());
    row.pinned_level.resize(space.size());
    for (const auto& earlier : state.reports) {
      if (earlier.iteration > r.iteration) continue;
      row.pinned_at[earlier.pin.dim] = earlier.iteration;
      row.pinned_level[earlier.pin.dim] = earlier.pin.level;
    }
    rep.rows.push_back(std::move(row));
  }

  BpeConfig ctx;
  if (context == CurveContext::best_record) {
    if (auto best = select_best(state.dataset, SelectBy::objective)) ctx = state.dataset.records()[*best].config;
  }
  if (ctx.levels.empty()) {
    if (context == CurveContext::best_record) rep.notices.push_back("no valid record; curves use min-cost context");
    for (const auto& d : space.dims()) ctx.levels.push_back(d.min_cost_level());
  }

  for (std::size_t k = 0; k < state.reports.size(); ++k) {
    const auto& it_report = state.reports[k];
    if (k >= state.forests.size() || !state.forests[k]) {
      rep.notices.push_back("iteration " + std::to_string(it_report.iteration) +
                            ": no forest snapshot; importances only");
      continue;
    }
    const RandomForest& forest = *state.forests[k];
    std::vector<std::size_t> features;
    for (std::size_t d = 0; d < space.size(); ++d)
      if (it_report.importances[d]) features.push_back(d);
    if (features.size() != forest.n_features()) {
      rep.notices.push_back("iteration " + std::to_string(it_report.iteration) +
                            ": forest does not match the unpinned dimensions; curves skipped");
      continue;
    }
    std::vector<double> x(features.size());
    for (std::size_t f = 0; f < features.size(); ++f)
      x[f] = space.dim(features[f]).level(ctx.levels[features[f]]).encoding;
    for (std::size_t f = 0; f < features.size(); ++f) {
      const Dimension& dim = space.dim(features[f]);
      std::vector<double> probe = x;
      for (std::size_t lvl = 0; lvl < dim.size(); ++lvl) {
        probe[f] = dim.level(lvl).encoding;
        const auto per_tree = forest.predict_per_tree(probe);
        double mean = 0.0;
        for (double v : per_tree) mean += v;
        mean /= static_cast<double>(per_tree.size());
        double var = 0.0;
        for (double v : per_tree) var += (v - mean) * (v - mean);
        var /= static_cast<double>(per_tree.size());
        rep.curves.push_back({it_report.iteration, features[f], lvl, mean, std::sqrt(var)});
      }
    }
  }
  return rep;
}

ImportanceReport importance_report(const RunArchive& run, CurveContext context) {
  if (run.kind() != RunKind::mip) throw ArchiveError("importance report needs a MIP run");
  if (!run.has_state()) throw ArchiveError("run has no state snapshot yet");
  const MipState state = run.load_state();
  if (state.reports.empty()) throw ArchiveError("run has no completed iteration");
  return importance_report(state, context);
}

std::string ImportanceReport::to_text() const {
  std::ostringstream os;
  os << "iter";
  for (const auto& n : dim_names) os << '\t' << n;
  os << '\n';
  for (const auto& row : rows) {
    os << row.iteration;
    for (std::size_t d = 0; d < dim_names.size(); ++d) {
      os << '\t';
      if (row.importances[d]) os << short_num(*row.importances[d]);
      if (row.pinned_at[d]) {
        if (row.importances[d]) os << ' ';
        os << "[pinned@" << *row.pinned_at[d] << '=' << level_values[d][*row.pinned_level[d]] << ']';
      }
    }
    if (row.uniform_fallback) os << "\t(uniform fallback)";
    os << '\n';
  }
  for (const auto& n : notices) os << "note: " << n << '\n';
  return os.str();
}

std::string ImportanceReport::importance_csv() const {
  std::string out = "iteration,dim,importance,pinned_iteration,pinned_value\n";
  for (const auto& row : rows)
    for (std::size_t d = 0; d < dim_names.size(); ++d) {
      out += std::to_string(row.iteration) + "," + csv_field(dim_names[d]) + ",";
      out += row.importances[d] ? full(*row.importances[d]) : "";
      out += ",";
      out += row.pinned_at[d] ? std::to_string(*row.pinned_at[d]) : "";
      out += ",";
      out += row.pinned_at[d] ? csv_field(level_values[d][*row.pinned_level[d]]) : "";
      out += "\n";
    }
  return out;
}

std::string ImportanceReport::curves_csv() const {
  std::string out = "iteration,dim,level,value,mean,stddev\n";
  for (const auto& p : curves)
    out += std::to_string(p.iteration) + "," + csv_field(dim_names[p.dim]) + "," + std::to_string(p.level) + "," +
           csv_field(level_values[p.dim][p.level]) + "," + full(p.mean) + "," + full(p.stddev) + "\n";
  return out;
}

std::vector<ParetoPoint> pareto_front(const Dataset& dataset) {
  const auto recs = dataset.records();
  std::vector<ParetoPoint> out;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    if (!recs[i].valid) continue;
    bool dominated = false;
    for (std::size_t j = 0; j < recs.size() && !dominated; ++j) {
      if (j == i || !recs[j].valid) continue;
      const bool no_worse = recs[j].r_s >= recs[i].r_s && recs[j].mean_cost <= recs[i].mean_cost;
      const bool better = recs[j].r_s > recs[i].r_s || recs[j].mean_cost < recs[i].mean_cost;
      dominated = no_worse && better;
    }
    if (!dominated) out.push_back({i, recs[i].config, recs[i].r_s, recs[i].mean_cost});
  }
  std::stable_sort(out.begin(), out.end(), [](const ParetoPoint& a, const ParetoPoint& b) {
    if (a.mean_cost != b.mean_cost) return a.mean_cost < b.mean_cost;
    return a.r_s > b.r_s;
  });
  return out;
}

std::vector<ParetoPoint> pareto_report(const RunArchive& run) {
  if (run.kind() != RunKind::mip) throw ArchiveError("Pareto report needs a MIP run");
  if (!run.has_state()) throw ArchiveError("run has no state snapshot yet");
  return pareto_front(run.load_state().dataset);
}

std::string pareto_csv(const HyperSpace& space, const std::vector<ParetoPoint>& front) {
  std::string out = "record,r_s,mean_cost,config\n";
  for (const auto& p : front)
    out += std::to_string(p.record) + "," + full(p.r_s) + "," + full(p.mean_cost) + "," +
           csv_field(space.describe(p.config)) + "\n";
  return out;
}

}  // namespace bpe
