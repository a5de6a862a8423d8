#include "bpe/forest.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <string>
#include <thread>

#include "bpe/error.hpp"
#include "bpe/random.hpp"

namespace bpe {

using nlohmann::json;

double impurity(std::span<const double> targets) {
  if (targets.empty()) throw InvalidArgument("impurity of an empty set is undefined");
  const double mean = std::accumulate(targets.begin(), targets.end(), 0.0) / static_cast<double>(targets.size());
  double ss = 0.0;
  for (double r : targets) ss += (r - mean) * (r - mean);
  return ss / static_cast<double>(targets.size());
}

double split_impurity(std::span<const double> left, std::span<const double> right) {
  if (left.empty() || right.empty()) throw InvalidArgument("split leaves one side empty");
  const double nl = static_cast<double>(left.size());
  const double nr = static_cast<double>(right.size());
  return (nl * impurity(left) + nr * impurity(right)) / (nl + nr);
}

namespace {

struct NodeStats {
  double mean = 0.0;
  double sse = 0.0;  // sum of squared deviations = |Q| H(Q)
};

NodeStats stats_of(std::span<const Sample> samples, std::span<const std::size_t> idx) {
  NodeStats s;
  for (auto i : idx) s.mean += samples[i].target;
  s.mean /= static_cast<double>(idx.size());
  for (auto i : idx) s.sse += (samples[i].target - s.mean) * (samples[i].target - s.mean);
  return s;
}

// Split search over a subset of sample indices. Targets are centered on the
// node mean before accumulating prefix sums.
std::optional<SplitCandidate> best_split_indexed(std::span<const Sample> samples,
                                                 std::span<const std::size_t> idx,
                                                 std::span<const std::size_t> dims,
                                                 std::size_t min_leaf) {
  const std::size_t n = idx.size();
  if (n < 2) return std::nullopt;
  const NodeStats parent = stats_of(samples, idx);
  const double tol = kSplitTieTolerance * std::max(parent.sse / static_cast<double>(n), 1e-300);

  std::optional<SplitCandidate> best;
  double best_g = 0.0;
  std::vector<std::size_t> order(idx.begin(), idx.end());
  std::vector<std::size_t> sorted_dims(dims.begin(), dims.end());
  std::sort(sorted_dims.begin(), sorted_dims.end());

  for (std::size_t d : sorted_dims) {
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return samples[a].features[d] < samples[b].features[d];
    });
    double s1 = 0.0, s2 = 0.0, t1 = 0.0, t2 = 0.0;
    for (auto i : order) {
      const double y = samples[i].target - parent.mean;
      t1 += y;
      t2 += y * y;
    }
    for (std::size_t k = 1; k < n; ++k) {
      const double y = samples[order[k - 1]].target - parent.mean;
      s1 += y;
      s2 += y * y;
      const double lo = samples[order[k - 1]].features[d];
      const double hi = samples[order[k]].features[d];
      if (!(lo < hi)) continue;
      if (k < min_leaf || n - k < min_leaf) continue;
      const double nl = static_cast<double>(k);
      const double nr = static_cast<double>(n - k);
      const double sse_l = std::max(0.0, s2 - s1 * s1 / nl);
      const double r1 = t1 - s1, r2 = t2 - s2;
      const double sse_r = std::max(0.0, r2 - r1 * r1 / nr);
      const double g = (sse_l + sse_r) / static_cast<double>(n);
      if (!best || g < best_g - tol) {
        best = SplitCandidate{d, 0.5 * (lo + hi)};
        best_g = g;
      }
    }
  }
  return best;
}

class TreeBuilder {
 public:
  TreeBuilder(std::span<const Sample> samples, const ForestParams& params, std::size_t n_features, Rng& rng)
      : samples_(samples), params_(params), n_features_(n_features), rng_(rng) {}

  RegressionTree build(std::vector<std::size_t> idx) {
    grow(std::move(idx), 0);
    return RegressionTree(std::move(nodes_));
  }

 private:
  std::size_t grow(std::vector<std::size_t> idx, std::size_t depth) {
    const NodeStats st = stats_of(samples_, idx);
    const std::size_t id = nodes_.size();
    nodes_.push_back(TreeNode{true, st.mean, idx.size(), st.sse / static_cast<double>(idx.size())});

    const bool depth_exhausted = params_.max_depth && depth >= *params_.max_depth;
    if (depth_exhausted || idx.size() < 2 * params_.min_leaf || st.sse <= 0.0) return id;

    const auto split = best_split_indexed(samples_, idx, candidate_dims(), params_.min_leaf);
    if (!split) return id;

    std::vector<std::size_t> left, right;
    for (auto i : idx) (samples_[i].features[split->dim] <= split->threshold ? left : right).push_back(i);
    idx.clear();
    idx.shrink_to_fit();

    const std::size_t l = grow(std::move(left), depth + 1);
    const std::size_t r = grow(std::move(right), depth + 1);
    TreeNode& node = nodes_[id];
    node.leaf = false;
    node.split = *split;
    node.left = l;
    node.right = r;
    return id;
  }

  std::vector<std::size_t> candidate_dims() {
    std::vector<std::size_t> dims(n_features_);
    std::iota(dims.begin(), dims.end(), 0);
    if (!params_.feature_subsampling) return dims;
    const auto k = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n_features_))));
    std::shuffle(dims.begin(), dims.end(), rng_);
    dims.resize(k);
    return dims;
  }

  std::span<const Sample> samples_;
  const ForestParams& params_;
  std::size_t n_features_;
  Rng& rng_;
  std::vector<TreeNode> nodes_;
};

json params_to_json(const ForestParams& p) {
  json j = {{"n_trees", p.n_trees},
            {"min_leaf", p.min_leaf},
            {"bootstrap", p.bootstrap},
            {"feature_subsampling", p.feature_subsampling},
            {"seed", p.seed}};
  j["max_depth"] = p.max_depth ? json(*p.max_depth) : json(nullptr);
  return j;
}

ForestParams params_from_json(const json& j) {
  ForestParams p;
  p.n_trees = j.at("n_trees").get<std::size_t>();
  p.min_leaf = j.at("min_leaf").get<std::size_t>();
  p.bootstrap = j.at("bootstrap").get<bool>();
  p.feature_subsampling = j.value("feature_subsampling", false);
  p.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("max_depth") && !j["max_depth"].is_null()) p.max_depth = j["max_depth"].get<std::size_t>();
  return p;
}

}  // namespace

std::optional<SplitCandidate> best_split(std::span<const Sample> samples,
                                         std::span<const std::size_t> allowed_dims, std::size_t min_leaf) {
  if (samples.size() < 2) return std::nullopt;
  for (std::size_t d : allowed_dims)
    for (const auto& s : samples)
      if (d >= s.features.size()) throw InvalidArgument("split dimension out of range");
  std::vector<std::size_t> idx(samples.size());
  std::iota(idx.begin(), idx.end(), 0);
  return best_split_indexed(samples, idx, allowed_dims, std::max<std::size_t>(min_leaf, 1));
}

RegressionTree::RegressionTree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {
  if (nodes_.empty()) throw InvalidArgument("tree needs a root node");
  for (const auto& n : nodes_)
    if (!n.leaf && (n.left >= nodes_.size() || n.right >= nodes_.size()))
      throw InvalidArgument("tree node references a missing child");
}

double RegressionTree::predict(std::span<const double> x) const {
  std::size_t i = 0;
  for (std::size_t guard = 0; !nodes_[i].leaf; ++guard) {
    if (guard > nodes_.size()) throw InvalidArgument("tree contains a cycle");
    const auto& n = nodes_[i];
    i = x[n.split.dim] <= n.split.threshold ? n.left : n.right;
  }
  return nodes_[i].value;
}

std::size_t RegressionTree::internal_count() const noexcept {
  return static_cast<std::size_t>(std::count_if(nodes_.begin(), nodes_.end(), [](const auto& n) { return !n.leaf; }));
}

std::size_t RegressionTree::depth() const {
  std::vector<std::size_t> d(nodes_.size(), 0);
  std::size_t deepest = 0;
  // children always follow their parent in storage order
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    deepest = std::max(deepest, d[i]);
    if (!nodes_[i].leaf) d[nodes_[i].left] = d[nodes_[i].right] = d[i] + 1;
  }
  return deepest;
}

double node_importance(const RegressionTree& tree, std::size_t node) {
  const TreeNode& m = tree.node(node);
  if (m.leaf) throw InvalidArgument("node importance is defined for internal nodes only");
  const TreeNode& l = tree.node(m.left);
  const TreeNode& r = tree.node(m.right);
  const double decrease = static_cast<double>(m.samples) * m.impurity -
                          static_cast<double>(l.samples) * l.impurity -
                          static_cast<double>(r.samples) * r.impurity;
  // rounding can push an exact zero decrease slightly negative
  return std::max(0.0, decrease);
}

void ForestParams::validate() const {
  if (n_trees < 1) throw InvalidArgument("forest needs at least one tree");
  if (min_leaf < 1) throw InvalidArgument("min_leaf must be at least 1");
  if (max_depth && *max_depth < 1) throw InvalidArgument("max_depth must be at least 1");
}

RandomForest::RandomForest(std::vector<RegressionTree> trees, ForestParams params, std::size_t n_features)
    : trees_(std::move(trees)), params_(params), n_features_(n_features) {
  if (trees_.empty()) throw InvalidArgument("forest has no trees");
  for (const auto& t : trees_)
    for (const auto& n : t.nodes())
      if (!n.leaf && n.split.dim >= n_features_) throw InvalidArgument("tree splits on an unknown feature");
}

RandomForest RandomForest::fit(std::span<const Sample> samples, const ForestParams& params) {
  params.validate();
  if (samples.size() < 2) throw InvalidArgument("forest needs at least two training samples");
  const std::size_t n_features = samples.front().features.size();
  for (const auto& s : samples) {
    if (s.features.size() != n_features) throw InvalidArgument("ragged feature vectors");
    if (!std::isfinite(s.target)) throw InvalidArgument("non-finite training target");
  }

  std::vector<RegressionTree> trees(params.n_trees);
  auto build_one = [&](std::size_t t) {
    Rng rng(derive_seed(params.seed, t));
    std::vector<std::size_t> idx(samples.size());
    if (params.bootstrap) {
      for (auto& i : idx) i = uniform_index(rng, samples.size());
    } else {
      std::iota(idx.begin(), idx.end(), 0);
    }
    trees[t] = TreeBuilder(samples, params, n_features, rng).build(std::move(idx));
  };

  const std::size_t workers = std::min(std::max<std::size_t>(params.threads, 1), params.n_trees);
  if (workers == 1) {
    for (std::size_t t = 0; t < params.n_trees; ++t) build_one(t);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t t = next++; t < params.n_trees; t = next++) build_one(t);
      });
  }
  return RandomForest(std::move(trees), params, n_features);
}

double RandomForest::predict(std::span<const double> x) const {
  const auto per_tree = predict_per_tree(x);
  return std::accumulate(per_tree.begin(), per_tree.end(), 0.0) / static_cast<double>(per_tree.size());
}

std::vector<double> RandomForest::predict_per_tree(std::span<const double> x) const {
  if (x.size() != n_features_)
    throw InvalidArgument("feature vector has " + std::to_string(x.size()) + " entries, forest expects " +
                          std::to_string(n_features_));
  std::vector<double> out;
  out.reserve(trees_.size());
  for (const auto& t : trees_) out.push_back(t.predict(x));
  return out;
}

std::vector<double> RandomForest::feature_importance() const {
  std::vector<double> per_dim(n_features_, 0.0);
  double total = 0.0;
  for (const auto& t : trees_)
    for (std::size_t i = 0; i < t.nodes().size(); ++i) {
      if (t.node(i).leaf) continue;
      const double im = node_importance(t, i);
      per_dim[t.node(i).split.dim] += im;
      total += im;
    }
  if (total <= 0.0) return std::vector<double>(n_features_, 0.0);
  for (double& v : per_dim) v /= total;
  return per_dim;
}

std::size_t RandomForest::internal_count() const noexcept {
  std::size_t n = 0;
  for (const auto& t : trees_) n += t.internal_count();
  return n;
}

json RandomForest::to_json() const {
  json trees = json::array();
  for (const auto& t : trees_) {
    json nodes = json::array();
    for (const auto& n : t.nodes()) {
      json jn = {{"value", n.value}, {"samples", n.samples}, {"impurity", n.impurity}};
      if (!n.leaf) {
        jn["dim"] = n.split.dim;
        jn["threshold"] = n.split.threshold;
        jn["left"] = n.left;
        jn["right"] = n.right;
      }
      nodes.push_back(std::move(jn));
    }
    trees.push_back({{"nodes", std::move(nodes)}});
  }
  return {{"n_features", n_features_}, {"params", params_to_json(params_)}, {"trees", std::move(trees)}};
}

RandomForest RandomForest::from_json(const json& j) {
  try {
    std::vector<RegressionTree> trees;
    for (const auto& jt : j.at("trees")) {
      std::vector<TreeNode> nodes;
      for (const auto& jn : jt.at("nodes")) {
        TreeNode n;
        n.value = jn.at("value").get<double>();
        n.samples = jn.at("samples").get<std::size_t>();
        n.impurity = jn.at("impurity").get<double>();
        if (jn.contains("dim")) {
          n.leaf = false;
          n.split = {jn["dim"].get<std::size_t>(), jn.at("threshold").get<double>()};
          n.left = jn.at("left").get<std::size_t>();
          n.right = jn.at("right").get<std::size_t>();
        }
        nodes.push_back(n);
      }
      trees.emplace_back(std::move(nodes));
    }
    return RandomForest(std::move(trees), params_from_json(j.at("params")), j.at("n_features").get<std::size_t>());
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("malformed forest document: ") + e.what());
  }
}

}  // namespace bpe
