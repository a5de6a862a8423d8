#pragma once

#include <span>
#include <vector>

namespace bpe {

// Fractional ranks starting at 1; tied values share the mean of the positions
// they occupy. Throws InvalidArgument on empty or non-finite input.
std::vector<double> ranks(std::span<const double> values);

// Spearman rank correlation: Pearson correlation of the fractional ranks.
// Throws InvalidArgument on length mismatch or n < 2, UndefinedCorrelation
// when either vector is constant.
double spearman(std::span<const double> a, std::span<const double> b);

enum class CostSign {
  penalize,  // r_s - lambda * cost / normalizer (default)
  reward,    // r_s + lambda * cost / normalizer, the formula as literally written
};

struct ObjectiveParams {
  double lambda = 0.5;
  double cost_normalizer = 1.0;
  CostSign sign = CostSign::penalize;

  // Throws InvalidArgument unless 0 < lambda < 1 and cost_normalizer > 0.
  void validate() const;
};

double objective(double r_s, double mean_cost, const ObjectiveParams& params);

}  // namespace bpe
