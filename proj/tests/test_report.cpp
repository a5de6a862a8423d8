#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "bpe/error.hpp"
#include "bpe/ranking.hpp"
#include "bpe/report.hpp"

using namespace bpe;
namespace fs = std::filesystem;

namespace {

TrialRecord rec(std::vector<std::size_t> levels, double r_s, double cost, bool valid = true) {
  return {BpeConfig{std::move(levels)}, r_s, cost, r_s - cost, 1, 10, valid};
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    out[e.path().filename().string()] = os.str();
  }
  return out;
}

class ArchiveTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("bpe_report_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  // A finished MIP run on the default preset, persisted after every iteration.
  RunArchive make_run(std::size_t iterations = 8) {
    const auto p = default_preset();
    auto model = SurrogateModel::random(p.space, 2, 3, 0.2, 1.0);
    model.fidelity_weights[0] = 5;
    model.fidelity_weights[3] = 5;
    const auto archs = ArchSet::random(30, 2, 4);
    MipParams params;
    params.seed = 8;
    params.forest.n_trees = 15;
    nlohmann::json manifest = {{"kind", "mip"},
                               {"space", definition_to_json({p.space, p.reference})},
                               {"archs", archs_to_json(archs)},
                               {"evaluator", {{"kind", "surrogate"}, {"model", model.to_json()}}},
                               {"params", params_to_json(params)}};
    auto run = RunArchive::create(dir_, manifest);
    auto ev = run.evaluator();
    MipState st = start_state(p.space, p.reference, archs, *ev, params);
    run.save_state(st);
    for (std::size_t i = 0; i < iterations; ++i) {
      run_iteration(st, archs, *ev);
      run.save_state(st);
    }
    return run;
  }

  fs::path dir_;
};

}  // namespace

TEST(Corr, IdenticalAndDisjoint) {
  ResultTable a{"a", "", {"x", "y", "z"}, {0.1, 0.5, 0.3}};
  EXPECT_DOUBLE_EQ(corr(a, a).r_s, 1.0);
  EXPECT_EQ(corr(a, a).common, 3u);
  ResultTable b{"b", "", {"p", "q", "r"}, {1, 2, 3}};
  EXPECT_THROW(corr(a, b), InvalidArgument);
}

TEST(Corr, MatchesSpearmanOnIntersection) {
  Rng rng(4);
  ResultTable a{"fair", "", {}, {}}, b{"random", "", {}, {}};
  for (int i = 0; i < 40; ++i) {
    a.ids.push_back("m" + std::to_string(i));
    a.scores.push_back(uniform01(rng));
  }
  // b covers ids 5..44 in reverse order
  for (int i = 44; i >= 5; --i) {
    b.ids.push_back("m" + std::to_string(i));
    b.scores.push_back(uniform01(rng));
  }
  std::map<std::string, double> bm;
  for (std::size_t i = 0; i < b.ids.size(); ++i) bm[b.ids[i]] = b.scores[i];
  std::vector<double> va, vb;
  for (std::size_t i = 0; i < a.ids.size(); ++i)
    if (bm.count(a.ids[i])) {
      va.push_back(a.scores[i]);
      vb.push_back(bm[a.ids[i]]);
    }
  const auto r = corr(a, b);
  EXPECT_EQ(r.r_s, spearman(va, vb));
  EXPECT_EQ(r.common, 35u);
  EXPECT_FALSE(r.low_overlap);

  b.ids.resize(10);
  b.scores.resize(10);
  EXPECT_TRUE(corr(a, b).low_overlap);
}

TEST(ResultCsv, ParseAndRoundTrip) {
  const auto t = parse_result_csv("id,score\n a , 0.25\n\nb,1e-3\nc,-2\n", "t");
  EXPECT_EQ(t.ids, (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_EQ(t.scores, (std::vector<double>{0.25, 1e-3, -2}));
  ResultTable u{"u", "", {"x", "y"}, {0.1 + 0.2, 1.0 / 3.0}};
  const auto back = parse_result_csv(result_table_csv(u));
  EXPECT_EQ(back.scores, u.scores);
  EXPECT_THROW(parse_result_csv("id,score\na,b\n"), InvalidArgument);
  EXPECT_THROW(parse_result_csv("id,score\na,1,2\n"), InvalidArgument);
  EXPECT_THROW(parse_result_csv("id,score\na,1\na,2\n"), InvalidArgument);
}

TEST(Pareto, SingleAndFixture) {
  Dataset one;
  one.append(rec({0}, 0.3, 2.0));
  ASSERT_EQ(pareto_front(one).size(), 1u);
  EXPECT_EQ(pareto_front(one)[0].record, 0u);

  Dataset d;
  d.append(rec({0}, 0.5, 1.0));   // A
  d.append(rec({1}, 0.6, 2.0));   // B
  d.append(rec({2}, 0.4, 1.5));   // dominated by A
  d.append(rec({3}, 0.6, 3.0));   // dominated by B
  d.append(rec({4}, 0.9, 5.0));   // E
  d.append(rec({5}, 0.95, 0.5, false));  // invalid
  std::vector<std::size_t> got;
  for (const auto& p : pareto_front(d)) got.push_back(p.record);
  EXPECT_EQ(got, (std::vector<std::size_t>{0, 1, 4}));
}

TEST(Pareto, MatchesBruteForce) {
  Rng rng(6);
  for (int t = 0; t < 100; ++t) {
    Dataset d;
    const std::size_t n = 1 + uniform_index(rng, 15);
    for (std::size_t i = 0; i < n; ++i)
      d.append(rec({i}, uniform_index(rng, 5) / 4.0, static_cast<double>(uniform_index(rng, 5)), uniform01(rng) > 0.1));
    std::set<std::size_t> want;
    const auto r = d.records();
    for (std::size_t i = 0; i < n; ++i) {
      if (!r[i].valid) continue;
      bool dom = false;
      for (std::size_t j = 0; j < n; ++j)
        if (r[j].valid && r[j].r_s >= r[i].r_s && r[j].mean_cost <= r[i].mean_cost &&
            (r[j].r_s > r[i].r_s || r[j].mean_cost < r[i].mean_cost))
          dom = true;
      if (!dom) want.insert(i);
    }
    const auto front = pareto_front(d);
    std::set<std::size_t> got;
    for (std::size_t k = 0; k < front.size(); ++k) {
      got.insert(front[k].record);
      if (k) EXPECT_LE(front[k - 1].mean_cost, front[k].mean_cost);
    }
    EXPECT_EQ(got, want);
  }
}

TEST_F(ArchiveTest, CreateOpenAndErrors) {
  EXPECT_THROW(RunArchive::open(dir_), ArchiveError);
  make_run(1);
  EXPECT_THROW(RunArchive::create(dir_, {{"kind", "mip"}}), ArchiveError);
  const auto run = RunArchive::open(dir_);
  EXPECT_EQ(run.kind(), RunKind::mip);
  EXPECT_EQ(run.manifest().at("format"), 1);
  std::ofstream(dir_ / "manifest.json") << "{oops";
  EXPECT_THROW(RunArchive::open(dir_), ArchiveError);
}

TEST_F(ArchiveTest, StateRoundTripWithForests) {
  const auto run = make_run(3);
  const auto st = run.load_state();
  EXPECT_EQ(st.iteration, 3u);
  ASSERT_EQ(st.forests.size(), 3u);
  for (const auto& f : st.forests) EXPECT_TRUE(f.has_value());
  EXPECT_TRUE(fs::exists(dir_ / "trials.jsonl"));
  std::ifstream in(dir_ / "report.tsv");
  std::string line;
  std::size_t lines = 0;
  while (std::getline(in, line)) ++lines;
  EXPECT_EQ(lines, 4u);
}

TEST_F(ArchiveTest, CorruptStateIsAnArchiveError) {
  const auto run = make_run(2);
  std::ofstream(dir_ / "state.json") << "[]";
  EXPECT_THROW(run.load_state(), ArchiveError);
}

TEST_F(ArchiveTest, ImportanceReportContracts) {
  const auto run = make_run();
  const auto before = snapshot(dir_);
  const auto rep = importance_report(run);
  EXPECT_EQ(snapshot(dir_), before);  // reports never touch the archive

  const auto st = run.load_state();
  ASSERT_EQ(rep.rows.size(), 8u);
  for (const auto& row : rep.rows) {
    double sum = 0;
    for (const auto& v : row.importances)
      if (v) sum += *v;
    EXPECT_NEAR(sum, 1.0, 1e-6);
  }
  for (std::size_t k = 0; k < st.reports.size(); ++k) {
    const auto& pin = st.reports[k].pin;
    for (std::size_t r = 0; r < rep.rows.size(); ++r) {
      if (r < k) {
        EXPECT_FALSE(rep.rows[r].pinned_at[pin.dim]);
      } else {
        EXPECT_EQ(rep.rows[r].pinned_at[pin.dim], k + 1);
        EXPECT_EQ(rep.rows[r].pinned_level[pin.dim], pin.level);
      }
    }
  }
  EXPECT_NE(rep.to_text().find("[pinned@1="), std::string::npos);
  EXPECT_TRUE(rep.notices.empty());
}

TEST_F(ArchiveTest, CurvesAreFlatWhereTreesNeverSplit) {
  const auto run = make_run();
  const auto st = run.load_state();
  const auto rep = importance_report(st, CurveContext::min_cost);
  std::size_t flat_checked = 0;
  for (std::size_t k = 0; k < st.forests.size(); ++k) {
    const auto& forest = *st.forests[k];
    std::vector<std::size_t> features;
    for (std::size_t d = 0; d < st.space.size(); ++d)
      if (st.reports[k].importances[d]) features.push_back(d);
    std::vector<bool> split_on(features.size(), false);
    for (const auto& t : forest.trees())
      for (const auto& n : t.nodes())
        if (!n.leaf) split_on[n.split.dim] = true;
    const auto imp = forest.feature_importance();
    for (std::size_t f = 0; f < features.size(); ++f) {
      std::vector<double> means;
      for (const auto& c : rep.curves)
        if (c.iteration == k + 1 && c.dim == features[f]) means.push_back(c.mean);
      ASSERT_EQ(means.size(), st.space.dim(features[f]).size());
      if (!split_on[f] || imp[f] == 0.0) {
        ++flat_checked;
        for (double m : means) EXPECT_EQ(m, means[0]);
      }
    }
  }
  // the last iterations have few features; the first has a no-op dim (cutout)
  SUCCEED() << flat_checked << " flat curves checked";
}

TEST(ImportanceReport, ZeroImportanceDimIsFlat) {
  // target depends on feature 0 only and feature 1 is constant: no tree can split on it
  HyperSpace s({Dimension("x", {{"0", 0, 0}, {"1", 1, 1}, {"2", 2, 2}}),
                Dimension("y", {{"0", 0, 0}, {"1", 1, 1}})});
  MipState st{s, {BpeConfig{{2, 1}}}, PinMask(2), 1, {}, {}, {}, {}, {}};
  std::vector<Sample> samples;
  for (int i = 0; i < 12; ++i) {
    st.dataset.append(rec({std::size_t(i % 3), 0}, (i % 3) / 2.0, 1.0));
    samples.push_back({{double(i % 3), 0.0}, (i % 3) / 2.0});
  }
  st.mask.set(1, 0);
  st.reports.push_back({1, {0.0, 1.0}, false, {1, 0, PinBranch::min_cost, 0.0}, 0});
  st.forests.emplace_back(RandomForest::fit(samples, {.n_trees = 5, .seed = 1}));
  EXPECT_EQ(st.forests[0]->feature_importance()[1], 0.0);
  const auto rep = importance_report(st);
  std::vector<double> y_curve, x_curve;
  for (const auto& c : rep.curves) (c.dim == 1 ? y_curve : x_curve).push_back(c.mean);
  ASSERT_EQ(y_curve.size(), 2u);
  EXPECT_EQ(y_curve[0], y_curve[1]);
  EXPECT_LT(x_curve[0], x_curve[2]);
}

TEST_F(ArchiveTest, MissingForestGivesNotice) {
  const auto run = make_run(2);
  fs::remove(dir_ / "forest_1.json");
  const auto rep = importance_report(run);
  ASSERT_EQ(rep.notices.size(), 1u);
  EXPECT_NE(rep.notices[0].find("iteration 1"), std::string::npos);
  EXPECT_EQ(rep.rows.size(), 2u);
  for (const auto& c : rep.curves) EXPECT_EQ(c.iteration, 2u);
}

TEST_F(ArchiveTest, CsvOutputsRoundTrip) {
  const auto run = make_run(2);
  const auto rep = importance_report(run);
  std::istringstream in(rep.curves_csv());
  std::string line;
  std::getline(in, line);
  std::size_t k = 0;
  while (std::getline(in, line)) {
    const auto last = line.rfind(',');
    const auto prev = line.rfind(',', last - 1);
    EXPECT_EQ(std::stod(line.substr(prev + 1, last - prev - 1)), rep.curves[k].mean);
    EXPECT_EQ(std::stod(line.substr(last + 1)), rep.curves[k].stddev);
    ++k;
  }
  EXPECT_EQ(k, rep.curves.size());

  const auto front = pareto_report(run);
  std::istringstream pin(pareto_csv(run.space_definition().space, front));
  std::getline(pin, line);
  k = 0;
  while (std::getline(pin, line)) {
    std::istringstream f(line);
    std::string rec_s, rs, cost;
    std::getline(f, rec_s, ',');
    std::getline(f, rs, ',');
    std::getline(f, cost, ',');
    EXPECT_EQ(std::stoul(rec_s), front[k].record);
    EXPECT_EQ(std::stod(rs), front[k].r_s);
    EXPECT_EQ(std::stod(cost), front[k].mean_cost);
    ++k;
  }
  EXPECT_EQ(k, front.size());
}

TEST(ImportanceReport, NeedsACompletedIteration) {
  const auto dir = fs::temp_directory_path() / "bpe_report_empty";
  fs::remove_all(dir);
  auto run = RunArchive::create(dir, {{"kind", "search"}});
  EXPECT_THROW(importance_report(run), ArchiveError);
  EXPECT_THROW(pareto_report(run), ArchiveError);
  fs::remove_all(dir);
}
