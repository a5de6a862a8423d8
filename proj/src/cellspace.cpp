#include "bpe/cellspace.hpp"

#include <charconv>
#include <map>

#include "bpe/error.hpp"

namespace bpe {

namespace {

constexpr std::array<std::string_view, kNumOps> kOpNames = {
    "dil_conv_3x3", "dil_conv_5x5", "sep_conv_3x3", "sep_conv_5x5",
    "max_pool_3x3", "avg_pool_3x3", "none",         "skip_connect",
};

std::optional<int> parse_int(std::string_view s) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::optional<int> nodes_for_edge_count(std::size_t n) {
  std::size_t total = 0;
  for (int m = 1; total < n; ++m) {
    total += static_cast<std::size_t>(m) + 1;
    if (total == n) return m;
  }
  return std::nullopt;
}

CellGenotype decode_cell(std::string_view line, std::string_view which) {
  std::map<std::pair<int, int>, OpKind> by_edge;
  std::size_t pos = 0;
  while (pos <= line.size()) {
    auto next = line.find(';', pos);
    if (next == std::string_view::npos) next = line.size();
    std::string_view item = line.substr(pos, next - pos);
    pos = next + 1;
    while (!item.empty() && (item.front() == ' ' || item.front() == '\t')) item.remove_prefix(1);
    while (!item.empty() && (item.back() == ' ' || item.back() == '\t' || item.back() == '\r'))
      item.remove_suffix(1);
    if (item.empty()) continue;

    const auto arrow = item.find("->");
    const auto colon = item.find(':');
    if (arrow == std::string_view::npos || colon == std::string_view::npos || colon < arrow)
      throw InvalidArgument(std::string(which) + " cell: malformed edge '" + std::string(item) + "'");
    auto src = parse_int(item.substr(0, arrow));
    auto dst = parse_int(item.substr(arrow + 2, colon - arrow - 2));
    auto op = op_from_name(item.substr(colon + 1));
    if (!src || !dst)
      throw InvalidArgument(std::string(which) + " cell: bad node index in '" + std::string(item) + "'");
    if (!op)
      throw InvalidArgument(std::string(which) + " cell: unknown op '" +
                            std::string(item.substr(colon + 1)) + "'");
    if (*src >= *dst)
      throw InvalidArgument(std::string(which) + " cell: edge " + std::string(item) +
                            " violates src < dst");
    if (*src < -1 || *dst < 1)
      throw InvalidArgument(std::string(which) + " cell: node index out of range in '" +
                            std::string(item) + "'");
    if (!by_edge.emplace(std::pair{*src, *dst}, *op).second)
      throw InvalidArgument(std::string(which) + " cell: repeated edge " + std::string(item));
  }

  const auto nodes = nodes_for_edge_count(by_edge.size());
  if (!nodes)
    throw InvalidArgument(std::string(which) + " cell: " + std::to_string(by_edge.size()) +
                          " edges is not a fully connected cell");
  std::vector<OpKind> ops(by_edge.size());
  for (std::size_t i = 0; i < ops.size(); ++i) {
    auto it = by_edge.find(edge_endpoints(i));
    if (it == by_edge.end())
      throw InvalidArgument(std::string(which) + " cell: missing edge " +
                            std::to_string(edge_endpoints(i).first) + "->" +
                            std::to_string(edge_endpoints(i).second));
    ops[i] = it->second;
  }
  return CellGenotype(*nodes, std::move(ops));
}

}  // namespace

std::string_view op_name(OpKind op) noexcept { return kOpNames[op_index(op)]; }

std::optional<OpKind> op_from_name(std::string_view name) noexcept {
  for (std::size_t i = 0; i < kNumOps; ++i)
    if (kOpNames[i] == name) return kAllOps[i];
  return std::nullopt;
}

std::size_t edge_count(int nodes) {
  if (nodes < 1) throw InvalidArgument("cell needs at least one intermediate node");
  std::size_t total = 0;
  for (int j = 1; j <= nodes; ++j) total += static_cast<std::size_t>(j) + 1;
  return total;
}

std::pair<int, int> edge_endpoints(std::size_t i) {
  int dst = 1;
  std::size_t width = 2;  // inputs feeding node dst: -1, 0, 1, ..., dst-1
  while (i >= width) {
    i -= width;
    ++dst;
    ++width;
  }
  return {static_cast<int>(i) - 1, dst};
}

CellGenotype::CellGenotype(int nodes, std::vector<OpKind> ops) : nodes_(nodes), ops_(std::move(ops)) {
  if (ops_.size() != bpe::edge_count(nodes))
    throw InvalidArgument("cell with " + std::to_string(nodes) + " nodes needs " +
                          std::to_string(bpe::edge_count(nodes)) + " edges, got " +
                          std::to_string(ops_.size()));
}

Edge CellGenotype::edge(std::size_t i) const {
  const auto [src, dst] = edge_endpoints(i);
  return {src, dst, ops_.at(i)};
}

std::vector<Edge> CellGenotype::edges() const {
  std::vector<Edge> out;
  out.reserve(ops_.size());
  for (std::size_t i = 0; i < ops_.size(); ++i) out.push_back(edge(i));
  return out;
}

Genotype::Genotype(CellGenotype n, CellGenotype r) : normal(std::move(n)), reduction(std::move(r)) {
  if (normal.nodes() != reduction.nodes())
    throw InvalidArgument("normal and reduction cells must have the same node count");
}

BigInt space_size(int nodes, unsigned ops) {
  if (ops < 1) throw InvalidArgument("operation set must be non-empty");
  BigInt result = 2;
  const BigInt base = ops;
  for (std::size_t i = 0, n = edge_count(nodes); i < n; ++i) result *= base;
  return result;
}

Genotype random_genotype(int nodes, Rng& rng) {
  const std::size_t n = edge_count(nodes);
  auto draw_cell = [&] {
    std::vector<OpKind> ops(n);
    for (auto& op : ops) op = kAllOps[uniform_index(rng, kNumOps)];
    return CellGenotype(nodes, std::move(ops));
  };
  CellGenotype normal = draw_cell();
  CellGenotype reduction = draw_cell();
  return {std::move(normal), std::move(reduction)};
}

Genotype mutate(const Genotype& g, Rng& rng) {
  Genotype out = g;
  const std::size_t per_cell = g.normal.edge_count();
  const std::size_t pick = uniform_index(rng, 2 * per_cell);
  CellGenotype& cell = out.cell(pick / per_cell);
  const std::size_t e = pick % per_cell;
  // Shift by 1..7 so the new op always differs.
  const std::size_t shift = 1 + uniform_index(rng, kNumOps - 1);
  cell.set_op(e, kAllOps[(op_index(cell.op(e)) + shift) % kNumOps]);
  return out;
}

std::string encode(const Genotype& g) {
  std::string out;
  for (std::size_t c = 0; c < 2; ++c) {
    const auto& cell = g.cell(c);
    for (std::size_t i = 0; i < cell.edge_count(); ++i) {
      const Edge e = cell.edge(i);
      if (i) out += ';';
      out += std::to_string(e.src);
      out += "->";
      out += std::to_string(e.dst);
      out += ':';
      out += op_name(e.op);
    }
    out += '\n';
  }
  return out;
}

Genotype decode(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    if (line.find_first_not_of(" \t\r") != std::string_view::npos) lines.push_back(line);
  }
  if (lines.size() != 2)
    throw InvalidArgument("genotype text needs exactly two cell lines, got " + std::to_string(lines.size()));
  CellGenotype normal = decode_cell(lines[0], "normal");
  CellGenotype reduction = decode_cell(lines[1], "reduction");
  return {std::move(normal), std::move(reduction)};
}

bool is_valid(const Genotype& g) noexcept {
  if (g.normal.nodes() < 1 || g.normal.nodes() != g.reduction.nodes()) return false;
  for (std::size_t c = 0; c < 2; ++c) {
    const auto& cell = g.cell(c);
    std::size_t expected = 0;
    for (int j = 1; j <= cell.nodes(); ++j) expected += static_cast<std::size_t>(j) + 1;
    if (cell.edge_count() != expected) return false;
    for (std::size_t i = 0; i < cell.edge_count(); ++i) {
      const auto [src, dst] = edge_endpoints(i);
      if (!(src < dst) || src < -1 || dst > cell.nodes()) return false;
      if (op_index(cell.op(i)) >= kNumOps) return false;
    }
  }
  return true;
}

}  // namespace bpe
