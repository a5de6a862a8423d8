#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "bpe/mip.hpp"
#include "bpe/run_archive.hpp"

namespace bpe {

// Scores of named architectures under one condition (a training setting, a
// supernet, a BPE config).
struct ResultTable {
  std::string label;
  std::string source;
  std::vector<std::string> ids;
  std::vector<double> scores;

  void validate() const;
};

// Two-column CSV "id,score" with a header row; blank lines are skipped.
ResultTable parse_result_csv(const std::string& text, std::string label = {});
ResultTable load_result_table(const std::filesystem::path& path);
std::string result_table_csv(const ResultTable& table);

struct CorrResult {
  double r_s = 0.0;
  std::size_t common = 0;
  double overlap = 0.0;  // common / larger table size
  bool low_overlap = false;
};

// Spearman over the ids present in both tables (in the first table's order).
// Throws InvalidArgument with fewer than two common ids.
CorrResult corr(const ResultTable& a, const ResultTable& b);

enum class CurveContext { best_record, min_cost };

struct ImportanceRow {
  std::size_t iteration = 0;
  std::vector<std::optional<double>> importances;  // nullopt: pinned before this iteration
  std::vector<std::optional<std::size_t>> pinned_at;  // iteration that pinned the dim, if <= this one
  std::vector<std::optional<std::size_t>> pinned_level;
  bool uniform_fallback = false;
};

struct CurvePoint {
  std::size_t iteration = 0;
  std::size_t dim = 0;
  std::size_t level = 0;
  double mean = 0.0;  // forest prediction
  double stddev = 0.0;  // spread of per-tree predictions
};

struct ImportanceReport {
  std::vector<std::string> dim_names;
  std::vector<std::vector<std::string>> level_values;
  std::vector<ImportanceRow> rows;
  std::vector<CurvePoint> curves;
  std::vector<std::string> notices;

  std::string to_text() const;
  std::string importance_csv() const;
  std::string curves_csv() const;
};

// Sweeps each feature dim of every iteration's forest across its levels while
// the other features hold the context config's values.
ImportanceReport importance_report(const MipState& state, CurveContext context = CurveContext::best_record);
ImportanceReport importance_report(const RunArchive& run, CurveContext context = CurveContext::best_record);

struct ParetoPoint {
  std::size_t record = 0;  // index into the dataset
  BpeConfig config;
  double r_s = 0.0;
  double mean_cost = 0.0;
};

// Valid records not dominated under (maximize r_s, minimize mean_cost),
// ordered by cost then descending r_s.
std::vector<ParetoPoint> pareto_front(const Dataset& dataset);
std::vector<ParetoPoint> pareto_report(const RunArchive& run);
std::string pareto_csv(const HyperSpace& space, const std::vector<ParetoPoint>& front);

}  // namespace bpe
