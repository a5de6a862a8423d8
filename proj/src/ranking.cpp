#include "bpe/ranking.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "bpe/error.hpp"

namespace bpe {

std::vector<double> ranks(std::span<const double> values) {
  if (values.empty()) throw InvalidArgument("cannot rank an empty vector");
  for (double v : values)
    if (!std::isfinite(v)) throw InvalidArgument("cannot rank non-finite values");

  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return values[i] < values[j]; });

  std::vector<double> out(values.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i + 1;
    while (j < order.size() && values[order[j]] == values[order[i]]) ++j;
    // positions i..j-1 (0-based) hold equal values -> mean 1-based rank
    const double shared = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) out[order[k]] = shared;
    i = j;
  }
  return out;
}

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw InvalidArgument("spearman: length mismatch (" + std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()) + ")");
  if (a.size() < 2) throw InvalidArgument("spearman needs at least two observations");

  const auto ra = ranks(a);
  const auto rb = ranks(b);
  const double n = static_cast<double>(a.size());
  // Both rank vectors have mean (n + 1) / 2.
  const double mean = 0.5 * (n + 1.0);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    const double da = ra[i] - mean;
    const double db = rb[i] - mean;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) throw UndefinedCorrelation("spearman is undefined for a constant vector");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

void ObjectiveParams::validate() const {
  if (!(lambda > 0.0 && lambda < 1.0)) throw InvalidArgument("lambda must lie in (0, 1)");
  if (!(cost_normalizer > 0.0) || !std::isfinite(cost_normalizer))
    throw InvalidArgument("cost normalizer must be positive");
}

double objective(double r_s, double mean_cost, const ObjectiveParams& params) {
  params.validate();
  if (!(mean_cost >= 0.0)) throw InvalidArgument("mean cost must be nonnegative");
  const double term = params.lambda * (mean_cost / params.cost_normalizer);
  return params.sign == CostSign::penalize ? r_s - term : r_s + term;
}

}  // namespace bpe
