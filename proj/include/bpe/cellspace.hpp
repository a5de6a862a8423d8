#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "bpe/random.hpp"

namespace bpe {

enum class OpKind : std::uint8_t {
  dil_conv_3x3,
  dil_conv_5x5,
  sep_conv_3x3,
  sep_conv_5x5,
  max_pool_3x3,
  avg_pool_3x3,
  none,
  skip_connect,
};

inline constexpr std::size_t kNumOps = 8;

inline constexpr std::array<OpKind, kNumOps> kAllOps = {
    OpKind::dil_conv_3x3, OpKind::dil_conv_5x5, OpKind::sep_conv_3x3, OpKind::sep_conv_5x5,
    OpKind::max_pool_3x3, OpKind::avg_pool_3x3, OpKind::none,         OpKind::skip_connect,
};

std::string_view op_name(OpKind op) noexcept;
std::optional<OpKind> op_from_name(std::string_view name) noexcept;
constexpr std::size_t op_index(OpKind op) noexcept { return static_cast<std::size_t>(op); }

// Node -1 and 0 are the two cell inputs; intermediate nodes are 1..M.
struct Edge {
  int src = -1;
  int dst = 1;
  OpKind op = OpKind::none;

  bool operator==(const Edge&) const = default;
};

// Fully connected DAG: one edge per (src, dst) with src < dst, stored in
// canonical order (dst ascending, then src ascending).
class CellGenotype {
 public:
  // Throws InvalidArgument when ops.size() != edge_count(nodes).
  CellGenotype(int nodes, std::vector<OpKind> ops);

  int nodes() const noexcept { return nodes_; }
  std::size_t edge_count() const noexcept { return ops_.size(); }
  Edge edge(std::size_t i) const;
  std::vector<Edge> edges() const;
  OpKind op(std::size_t i) const { return ops_.at(i); }
  const std::vector<OpKind>& ops() const noexcept { return ops_; }
  void set_op(std::size_t i, OpKind op) { ops_.at(i) = op; }

  bool operator==(const CellGenotype&) const = default;

 private:
  int nodes_;
  std::vector<OpKind> ops_;
};

struct Genotype {
  CellGenotype normal;
  CellGenotype reduction;

  Genotype(CellGenotype n, CellGenotype r);

  int nodes() const noexcept { return normal.nodes(); }
  std::size_t total_edges() const noexcept { return normal.edge_count() + reduction.edge_count(); }
  // 0 = normal, 1 = reduction
  const CellGenotype& cell(std::size_t c) const { return c == 0 ? normal : reduction; }
  CellGenotype& cell(std::size_t c) { return c == 0 ? normal : reduction; }

  bool operator==(const Genotype&) const = default;
};

// Sum over j = 1..M of (j + 1). Throws InvalidArgument for M < 1.
std::size_t edge_count(int nodes);

// Canonical (src, dst) of edge i in a cell with `nodes` intermediate nodes.
std::pair<int, int> edge_endpoints(std::size_t i);

using BigInt = boost::multiprecision::cpp_int;

// 2 * K^edge_count(M), exact.
BigInt space_size(int nodes, unsigned ops);

Genotype random_genotype(int nodes, Rng& rng);

// Reassigns exactly one uniformly chosen edge (over both cells) to a different op.
Genotype mutate(const Genotype& g, Rng& rng);

// Two lines (normal, then reduction), each a ';'-separated list of
// "src->dst:op" triples in canonical order, e.g. "-1->1:sep_conv_3x3;0->1:none;..."
std::string encode(const Genotype& g);
// Accepts triples in any order; throws InvalidArgument on wrong edge counts,
// unknown ops, src >= dst, out-of-range or repeated endpoints, or cells of
// different sizes.
Genotype decode(std::string_view text);

// Whether the genotype satisfies every structural invariant.
bool is_valid(const Genotype& g) noexcept;

}  // namespace bpe
