#include "bpe/run_archive.hpp"

#include <unistd.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "bpe/error.hpp"
#include "bpe/external.hpp"

namespace bpe {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw ArchiveError("cannot open " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ArchiveError(p.string() + " is not valid JSON: " + e.what());
  }
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

void write_atomic(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp" + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ArchiveError("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw ArchiveError("cannot write " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::unique_ptr<Evaluator> make_evaluator(const json& spec, const HyperSpace& space) {
  const auto kind = spec.at("kind").get<std::string>();
  if (kind == "surrogate")
    return std::make_unique<SurrogateEvaluator>(space, SurrogateModel::from_json(spec.at("model")));
  if (kind == "external")
    return std::make_unique<ExternalEvaluator>(space, ExternalProtocol::from_json(spec.at("protocol")));
  throw InvalidArgument("unknown evaluator kind '" + kind + "'");
}

json archs_to_json(const ArchSet& archs) {
  json genos = json::array();
  for (const auto& g : archs.genotypes) genos.push_back(encode(g));
  return {{"ids", archs.ids}, {"genotypes", std::move(genos)}};
}

ArchSet archs_from_json(const json& j) {
  ArchSet out;
  out.ids = j.at("ids").get<std::vector<std::string>>();
  for (const auto& t : j.at("genotypes")) out.genotypes.push_back(decode(t.get<std::string>()));
  out.validate();
  return out;
}

RunArchive::RunArchive(fs::path dir, json manifest, RunKind kind)
    : dir_(std::move(dir)), manifest_(std::move(manifest)), kind_(kind) {}

RunArchive RunArchive::create(const fs::path& dir, json manifest) {
  if (fs::exists(dir / "manifest.json")) throw ArchiveError(dir.string() + " already holds a run");
  const auto kind = manifest.at("kind").get<std::string>();
  if (kind != "mip" && kind != "search") throw InvalidArgument("unknown run kind '" + kind + "'");
  fs::create_directories(dir);
  manifest["format"] = 1;
  write_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
  return RunArchive(dir, std::move(manifest), kind == "mip" ? RunKind::mip : RunKind::search);
}

RunArchive RunArchive::open(const fs::path& dir) {
  if (!fs::exists(dir / "manifest.json")) throw ArchiveError("no run manifest in " + dir.string());
  json manifest = read_json(dir / "manifest.json");
  if (!manifest.is_object() || !manifest.contains("kind")) throw ArchiveError("run manifest lacks a kind");
  const auto kind = manifest["kind"].get<std::string>();
  if (kind != "mip" && kind != "search") throw ArchiveError("unknown run kind '" + kind + "'");
  return RunArchive(dir, std::move(manifest), kind == "mip" ? RunKind::mip : RunKind::search);
}

SpaceDefinition RunArchive::space_definition() const {
  try {
    return definition_from_json(manifest_.at("space"));
  } catch (const Error& e) {
    throw ArchiveError(std::string("manifest space is invalid: ") + e.what());
  } catch (const json::exception& e) {
    throw ArchiveError(std::string("manifest space is invalid: ") + e.what());
  }
}

ArchSet RunArchive::archs() const {
  try {
    return archs_from_json(manifest_.at("archs"));
  } catch (const Error& e) {
    throw ArchiveError(std::string("manifest architecture set is invalid: ") + e.what());
  } catch (const json::exception& e) {
    throw ArchiveError(std::string("manifest architecture set is invalid: ") + e.what());
  }
}

std::unique_ptr<Evaluator> RunArchive::evaluator() const {
  try {
    return make_evaluator(manifest_.at("evaluator"), space_definition().space);
  } catch (const json::exception& e) {
    throw ArchiveError(std::string("manifest evaluator spec is invalid: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw ArchiveError(std::string("manifest evaluator spec is invalid: ") + e.what());
  }
}

bool RunArchive::has_state() const { return fs::exists(dir_ / "state.json"); }

MipState RunArchive::load_state() const {
  if (kind_ != RunKind::mip) throw ArchiveError("not a MIP run");
  const SpaceDefinition def = space_definition();
  if (!def.reference) throw ArchiveError("manifest space lacks a reference config");
  MipState state = [&] {
    try {
      return state_from_json(def.space, *def.reference, read_json(dir_ / "state.json"));
    } catch (const InvalidArgument& e) {
      throw ArchiveError(std::string("state.json is inconsistent: ") + e.what());
    }
  }();
  for (std::size_t k = 1; k <= state.iteration; ++k) {
    const fs::path p = dir_ / ("forest_" + std::to_string(k) + ".json");
    if (!fs::exists(p)) {
      state.forests.emplace_back();
      continue;
    }
    try {
      state.forests.emplace_back(RandomForest::from_json(read_json(p)));
    } catch (const InvalidArgument& e) {
      throw ArchiveError(p.string() + ": " + e.what());
    }
  }
  return state;
}

void RunArchive::save_state(const MipState& state) const {
  for (std::size_t k = 0; k < state.forests.size(); ++k) {
    const fs::path p = dir_ / ("forest_" + std::to_string(k + 1) + ".json");
    if (state.forests[k] && !fs::exists(p)) write_atomic(p, state.forests[k]->to_json().dump() + "\n");
  }
  std::string trials;
  for (const auto& r : state.dataset.records()) trials += record_to_json(state.space, r).dump() + "\n";
  write_atomic(dir_ / "trials.jsonl", trials);
  write_atomic(dir_ / "report.tsv", report_tsv(state));
  // state.json goes last: it marks the iteration as committed
  write_atomic(dir_ / "state.json", state_to_json(state).dump() + "\n");
}

std::string report_tsv(const MipState& state) {
  std::ostringstream os;
  os << "iteration";
  for (const auto& d : state.space.dims()) os << "\tI(" << d.name() << ")";
  os << "\tpinned_dim\tpinned_value\tbranch\tbest_r_s\tbest_objective\tbest_config\n";
  for (const auto& rep : state.reports) {
    os << rep.iteration;
    for (const auto& v : rep.importances) os << '\t' << (v ? fmt_double(*v) : std::string("-"));
    const auto& dim = state.space.dim(rep.pin.dim);
    os << '\t' << dim.name() << '\t' << dim.level(rep.pin.level).value << '\t'
       << (rep.pin.branch == PinBranch::min_cost ? "min_cost" : "best_rs");
    if (rep.best_record && *rep.best_record < state.dataset.size()) {
      const auto& best = state.dataset.records()[*rep.best_record];
      os << '\t' << fmt_double(best.r_s) << '\t' << fmt_double(best.objective) << '\t'
         << state.space.describe(best.config);
    } else {
      os << "\t-\t-\t-";
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace bpe
