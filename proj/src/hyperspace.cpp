#include "bpe/hyperspace.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "bpe/error.hpp"

namespace bpe {

Dimension::Dimension(std::string name, std::vector<Level> levels)
    : name_(std::move(name)), levels_(std::move(levels)) {
  if (name_.empty()) throw InvalidArgument("dimension name must not be empty");
  if (levels_.empty()) throw InvalidArgument("dimension '" + name_ + "' has no levels");
  for (std::size_t i = 0; i < levels_.size(); ++i) {
    const Level& l = levels_[i];
    if (!std::isfinite(l.cost) || l.cost < 0.0)
      throw InvalidArgument("dimension '" + name_ + "' level '" + l.value +
                            "' has a negative or non-finite cost");
    if (!std::isfinite(l.encoding))
      throw InvalidArgument("dimension '" + name_ + "' level '" + l.value +
                            "' has a non-finite encoding");
    if (i > 0 && !(levels_[i - 1].encoding < l.encoding))
      throw InvalidArgument("dimension '" + name_ + "' encodings must strictly increase");
  }
}

std::vector<double> Dimension::costs() const {
  std::vector<double> out;
  out.reserve(levels_.size());
  for (const auto& l : levels_) out.push_back(l.cost);
  return out;
}

std::vector<double> Dimension::encodings() const {
  std::vector<double> out;
  out.reserve(levels_.size());
  for (const auto& l : levels_) out.push_back(l.encoding);
  return out;
}

std::size_t Dimension::min_cost_level() const noexcept {
  std::size_t best = 0;
  for (std::size_t i = 1; i < levels_.size(); ++i)
    if (levels_[i].cost < levels_[best].cost) best = i;
  return best;
}

std::optional<std::size_t> Dimension::find(std::string_view value) const noexcept {
  for (std::size_t i = 0; i < levels_.size(); ++i)
    if (levels_[i].value == value) return i;
  return std::nullopt;
}

double Dimension::normalized_level(std::size_t i) const noexcept {
  if (levels_.size() < 2) return 0.0;
  return static_cast<double>(i) / static_cast<double>(levels_.size() - 1);
}

HyperSpace::HyperSpace(std::vector<Dimension> dims) : dims_(std::move(dims)) {
  if (dims_.empty()) throw InvalidArgument("hyper-parameter space needs at least one dimension");
  std::set<std::string> seen;
  for (const auto& d : dims_)
    if (!seen.insert(d.name()).second)
      throw InvalidArgument("duplicate dimension name '" + d.name() + "'");
}

std::optional<std::size_t> HyperSpace::index_of(std::string_view name) const noexcept {
  for (std::size_t i = 0; i < dims_.size(); ++i)
    if (dims_[i].name() == name) return i;
  return std::nullopt;
}

bool HyperSpace::contains(const BpeConfig& config) const noexcept {
  if (config.levels.size() != dims_.size()) return false;
  for (std::size_t i = 0; i < dims_.size(); ++i)
    if (config.levels[i] >= dims_[i].size()) return false;
  return true;
}

void HyperSpace::validate(const BpeConfig& config) const {
  if (config.levels.size() != dims_.size())
    throw InvalidArgument("config has " + std::to_string(config.levels.size()) +
                          " entries, space has " + std::to_string(dims_.size()) + " dimensions");
  for (std::size_t i = 0; i < dims_.size(); ++i)
    if (config.levels[i] >= dims_[i].size())
      throw InvalidArgument("level " + std::to_string(config.levels[i]) +
                            " out of range for dimension '" + dims_[i].name() + "'");
}

BpeConfig HyperSpace::config_from_values(const std::map<std::string, std::string>& values,
                                         const std::optional<BpeConfig>& base) const {
  BpeConfig out;
  if (base) {
    validate(*base);
    out = *base;
  } else {
    out.levels.assign(dims_.size(), 0);
  }
  for (const auto& [name, value] : values) {
    auto d = index_of(name);
    if (!d) throw InvalidArgument("unknown dimension '" + name + "'");
    auto lvl = dims_[*d].find(value);
    if (!lvl) throw InvalidArgument("dimension '" + name + "' has no level '" + value + "'");
    out.levels[*d] = *lvl;
  }
  return out;
}

std::map<std::string, std::string> HyperSpace::values_of(const BpeConfig& config) const {
  validate(config);
  std::map<std::string, std::string> out;
  for (std::size_t i = 0; i < dims_.size(); ++i)
    out[dims_[i].name()] = dims_[i].level(config.levels[i]).value;
  return out;
}

std::string HyperSpace::describe(const BpeConfig& config) const {
  validate(config);
  std::ostringstream os;
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    if (i) os << ' ';
    os << dims_[i].name() << '=' << dims_[i].level(config.levels[i]).value;
  }
  return os.str();
}

std::vector<double> HyperSpace::encode(const BpeConfig& config) const {
  validate(config);
  std::vector<double> out(dims_.size());
  for (std::size_t i = 0; i < dims_.size(); ++i)
    out[i] = dims_[i].level(config.levels[i]).encoding;
  return out;
}

std::size_t PinMask::pinned_count() const noexcept {
  return static_cast<std::size_t>(
      std::count_if(pins_.begin(), pins_.end(), [](const auto& p) { return p.has_value(); }));
}

std::vector<std::size_t> PinMask::unpinned() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < pins_.size(); ++i)
    if (!pins_[i]) out.push_back(i);
  return out;
}

void PinMask::set(std::size_t dim, std::size_t level) {
  if (pins_.at(dim)) throw InvalidArgument("dimension " + std::to_string(dim) + " is already pinned");
  pins_[dim] = level;
}

bool PinMask::valid_for(const HyperSpace& space) const noexcept {
  if (pins_.size() != space.size()) return false;
  for (std::size_t i = 0; i < pins_.size(); ++i)
    if (pins_[i] && *pins_[i] >= space.dim(i).size()) return false;
  return true;
}

std::vector<double> sampling_distribution(const Dimension& dim) {
  const auto costs = dim.costs();
  const auto [lo, hi] = std::minmax_element(costs.begin(), costs.end());
  const double range = *hi - *lo;
  std::vector<double> p(costs.size());
  double total = 0.0;
  for (std::size_t j = 0; j < costs.size(); ++j) {
    const double normalized = range > 0.0 ? (costs[j] - *lo) / range : 0.0;
    p[j] = std::exp(-normalized);
    total += p[j];
  }
  for (double& v : p) v /= total;
  return p;
}

BpeConfig sample_config(const HyperSpace& space, const PinMask& mask, Rng& rng) {
  if (!mask.valid_for(space)) throw InvalidArgument("pin mask does not match the space");
  BpeConfig out;
  out.levels.resize(space.size());
  for (std::size_t i = 0; i < space.size(); ++i) {
    if (const auto& pin = mask.pin(i)) {
      out.levels[i] = *pin;
    } else {
      const auto p = sampling_distribution(space.dim(i));
      out.levels[i] = draw_categorical(rng, p);
    }
  }
  return out;
}

double config_cost(const HyperSpace& space, const BpeConfig& config) {
  space.validate(config);
  double cost = 1.0;
  for (std::size_t i = 0; i < space.size(); ++i) cost *= 1.0 + space.dim(i).level(config.levels[i]).cost;
  return cost;
}

namespace {

Dimension numeric_dimension(std::string name, std::initializer_list<double> values,
                            auto cost_of) {
  std::vector<Level> levels;
  for (double v : values) {
    std::ostringstream os;
    os << v;
    levels.push_back({os.str(), v, cost_of(v)});
  }
  return Dimension(std::move(name), std::move(levels));
}

}  // namespace

Preset default_preset() {
  std::vector<Dimension> dims;
  dims.push_back(numeric_dimension("epoch", {10, 30, 50, 100, 600},
                                   [](double e) { return e / 600.0; }));
  // Larger batches take fewer optimizer steps per epoch.
  dims.push_back(numeric_dimension("batch_size", {32, 64, 96, 128, 256},
                                   [](double b) { return 32.0 / b; }));
  dims.push_back(numeric_dimension("learning_rate", {0.01, 0.025, 0.03, 0.1},
                                   [](double) { return 0.0; }));
  dims.push_back(numeric_dimension("layers", {6, 8, 16, 20},
                                   [](double l) { return l / 20.0; }));
  dims.emplace_back("float_point", std::vector<Level>{{"half", 16, 0.5}, {"full", 32, 1.0}});
  dims.push_back(numeric_dimension("channels", {8, 16, 36},
                                   [](double c) { return (c / 36.0) * (c / 36.0); }));
  dims.emplace_back("cutout", std::vector<Level>{{"off", 0, 0.0}, {"on", 1, 0.0}});
  dims.push_back(numeric_dimension("image_size", {8, 16, 32},
                                   [](double s) { return (s / 32.0) * (s / 32.0); }));
  HyperSpace space(std::move(dims));

  ReferenceConfig reference{space.config_from_values({{"epoch", "600"},
                                                      {"batch_size", "96"},
                                                      {"learning_rate", "0.025"},
                                                      {"layers", "20"},
                                                      {"float_point", "full"},
                                                      {"channels", "36"},
                                                      {"cutout", "on"},
                                                      {"image_size", "32"}})};
  return {std::move(space), std::move(reference)};
}

BpeConfig preset_bpe1(const HyperSpace& space) {
  return space.config_from_values({{"epoch", "10"},
                                   {"batch_size", "128"},
                                   {"learning_rate", "0.03"},
                                   {"layers", "6"},
                                   {"float_point", "full"},
                                   {"channels", "8"},
                                   {"cutout", "off"},
                                   {"image_size", "16"}});
}

BpeConfig preset_bpe2(const HyperSpace& space) {
  return space.config_from_values({{"epoch", "30"},
                                   {"batch_size", "128"},
                                   {"learning_rate", "0.03"},
                                   {"layers", "16"},
                                   {"float_point", "full"},
                                   {"channels", "16"},
                                   {"cutout", "off"},
                                   {"image_size", "16"}});
}

BpeConfig preset_darts(const HyperSpace& space) {
  return space.config_from_values({{"epoch", "50"},
                                   {"batch_size", "64"},
                                   {"learning_rate", "0.025"},
                                   {"layers", "8"},
                                   {"float_point", "full"},
                                   {"channels", "16"},
                                   {"cutout", "off"},
                                   {"image_size", "32"}});
}

}  // namespace bpe
