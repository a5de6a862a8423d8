#pragma once

#include <compare>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bpe/random.hpp"

namespace bpe {

// One admissible value of a hyper-parameter. `encoding` orders the levels for
// tree splits; `cost` is a nonnegative compute proxy (relative FLOPs/time).
struct Level {
  std::string value;
  double encoding = 0.0;
  double cost = 0.0;

  bool operator==(const Level&) const = default;
};

class Dimension {
 public:
  // Throws InvalidArgument unless levels are non-empty, encodings strictly
  // increase, and all costs are finite and nonnegative.
  Dimension(std::string name, std::vector<Level> levels);

  const std::string& name() const noexcept { return name_; }
  std::span<const Level> levels() const noexcept { return levels_; }
  const Level& level(std::size_t i) const { return levels_.at(i); }
  std::size_t size() const noexcept { return levels_.size(); }

  std::vector<double> costs() const;
  std::vector<double> encodings() const;

  // Cheapest level; ties resolve to the lowest encoding.
  std::size_t min_cost_level() const noexcept;
  std::optional<std::size_t> find(std::string_view value) const noexcept;

  // Level index rescaled to [0, 1]; a single-level dimension maps to 0.
  double normalized_level(std::size_t i) const noexcept;

  bool operator==(const Dimension&) const = default;

 private:
  std::string name_;
  std::vector<Level> levels_;
};

// A point in the space: one level index per dimension.
struct BpeConfig {
  std::vector<std::size_t> levels;

  auto operator<=>(const BpeConfig&) const = default;
};

class HyperSpace {
 public:
  explicit HyperSpace(std::vector<Dimension> dims);

  std::span<const Dimension> dims() const noexcept { return dims_; }
  const Dimension& dim(std::size_t i) const { return dims_.at(i); }
  std::size_t size() const noexcept { return dims_.size(); }
  std::optional<std::size_t> index_of(std::string_view name) const noexcept;

  bool contains(const BpeConfig& config) const noexcept;
  // Throws InvalidArgument naming the first offending dimension.
  void validate(const BpeConfig& config) const;

  // Config built from display values; dimensions absent from `values` take the
  // corresponding level of `base` (or level 0 without a base).
  BpeConfig config_from_values(const std::map<std::string, std::string>& values,
                               const std::optional<BpeConfig>& base = std::nullopt) const;
  std::map<std::string, std::string> values_of(const BpeConfig& config) const;
  // "epoch=10 batch_size=128 ..."
  std::string describe(const BpeConfig& config) const;
  std::vector<double> encode(const BpeConfig& config) const;

  bool operator==(const HyperSpace&) const = default;

 private:
  std::vector<Dimension> dims_;
};

// Per-dimension optional pin. Pinned dimensions are no longer sampled.
class PinMask {
 public:
  PinMask() = default;
  explicit PinMask(std::size_t n_dims) : pins_(n_dims) {}
  explicit PinMask(std::vector<std::optional<std::size_t>> pins) : pins_(std::move(pins)) {}

  std::size_t size() const noexcept { return pins_.size(); }
  const std::optional<std::size_t>& pin(std::size_t dim) const { return pins_.at(dim); }
  bool is_pinned(std::size_t dim) const { return pins_.at(dim).has_value(); }
  std::size_t pinned_count() const noexcept;
  std::vector<std::size_t> unpinned() const;
  std::span<const std::optional<std::size_t>> pins() const noexcept { return pins_; }

  // Throws InvalidArgument if the dimension is already pinned.
  void set(std::size_t dim, std::size_t level);

  bool valid_for(const HyperSpace& space) const noexcept;

  bool operator==(const PinMask&) const = default;

 private:
  std::vector<std::optional<std::size_t>> pins_;
};

// The full, expensive training condition that defines the ground-truth ranking.
struct ReferenceConfig {
  BpeConfig config;
};

// Softmax of negated, min-max normalized level costs.
std::vector<double> sampling_distribution(const Dimension& dim);

// Pinned dims take their pin; the rest are drawn independently from
// sampling_distribution.
BpeConfig sample_config(const HyperSpace& space, const PinMask& mask, Rng& rng);

// Product over dimensions of (1 + selected level cost).
double config_cost(const HyperSpace& space, const BpeConfig& config);

struct Preset {
  HyperSpace space;
  ReferenceConfig reference;
};

// Eight-dimension CIFAR-style space (epoch, batch_size, learning_rate, layers,
// float_point, channels, cutout, image_size) with the reference at the
// full-training end.
Preset default_preset();

// Named points of the default preset. Dimensions the published settings do not
// list are held at float_point=full and cutout=off.
BpeConfig preset_bpe1(const HyperSpace& space);
BpeConfig preset_bpe2(const HyperSpace& space);
BpeConfig preset_darts(const HyperSpace& space);

}  // namespace bpe
