#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"

namespace bpe {

struct Sample {
  std::vector<double> features;
  double target = 0.0;
};

// Partition rule: x[dim] <= threshold goes left.
struct SplitCandidate {
  std::size_t dim = 0;
  double threshold = 0.0;

  bool operator==(const SplitCandidate&) const = default;
};

// Mean squared deviation from the mean. Throws InvalidArgument when empty.
double impurity(std::span<const double> targets);

// Size-weighted mean of the two child impurities. Throws InvalidArgument when
// either side is empty.
double split_impurity(std::span<const double> left, std::span<const double> right);

// Relative slack under which two split impurities count as tied; ties resolve to
// the lower dimension index, then the lower threshold.
inline constexpr double kSplitTieTolerance = 1e-10;

// Exhaustive search over midpoints between consecutive distinct values of each
// allowed dimension. Candidates leaving fewer than `min_leaf` samples on either
// side are skipped. Returns nullopt when no dimension offers a valid split.
std::optional<SplitCandidate> best_split(std::span<const Sample> samples,
                                         std::span<const std::size_t> allowed_dims,
                                         std::size_t min_leaf = 1);

struct TreeNode {
  bool leaf = true;
  double value = 0.0;        // mean target of the samples reaching the node
  std::size_t samples = 0;   // bootstrap duplicates counted with multiplicity
  double impurity = 0.0;
  SplitCandidate split{};    // internal nodes only
  std::size_t left = 0;      // child node indices, internal nodes only
  std::size_t right = 0;
};

class RegressionTree {
 public:
  RegressionTree() = default;
  explicit RegressionTree(std::vector<TreeNode> nodes);

  std::span<const TreeNode> nodes() const noexcept { return nodes_; }
  const TreeNode& node(std::size_t i) const { return nodes_.at(i); }
  const TreeNode& root() const { return nodes_.at(0); }
  double predict(std::span<const double> x) const;
  std::size_t internal_count() const noexcept;
  std::size_t depth() const;

 private:
  std::vector<TreeNode> nodes_;
};

// |Q| H(Q) - |Q_left| H(Q_left) - |Q_right| H(Q_right). Throws
// InvalidArgument for a leaf.
double node_importance(const RegressionTree& tree, std::size_t node);

struct ForestParams {
  std::size_t n_trees = 50;
  std::size_t min_leaf = 2;
  std::optional<std::size_t> max_depth;  // unlimited when empty; root has depth 0
  bool bootstrap = true;
  // Draw ceil(sqrt(n_features)) candidate dimensions per split.
  bool feature_subsampling = false;
  std::uint64_t seed = 0;
  // Trees are built on independent seed streams, so any thread count gives
  // the same forest.
  std::size_t threads = 1;

  void validate() const;
};

class RandomForest {
 public:
  // Throws InvalidArgument with fewer than two samples, ragged feature
  // vectors, or non-finite targets.
  static RandomForest fit(std::span<const Sample> samples, const ForestParams& params);

  RandomForest(std::vector<RegressionTree> trees, ForestParams params, std::size_t n_features);

  double predict(std::span<const double> x) const;
  std::vector<double> predict_per_tree(std::span<const double> x) const;

  // Per-dimension share of the total impurity decrease across all trees. Sums
  // to one when any split has positive decrease; all zeros otherwise.
  std::vector<double> feature_importance() const;

  std::span<const RegressionTree> trees() const noexcept { return trees_; }
  const ForestParams& params() const noexcept { return params_; }
  std::size_t n_features() const noexcept { return n_features_; }
  std::size_t internal_count() const noexcept;

  nlohmann::json to_json() const;
  static RandomForest from_json(const nlohmann::json& j);

 private:
  std::vector<RegressionTree> trees_;
  ForestParams params_;
  std::size_t n_features_ = 0;
};

}  // namespace bpe
