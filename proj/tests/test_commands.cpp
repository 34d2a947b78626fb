#include <filesystem>

#include <gtest/gtest.h>

#include "entlens/commands.hpp"

using namespace entlens;
using namespace entlens::cli;
namespace fs = std::filesystem;

namespace {

class CommandTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("entlens_cmd_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::vector<fs::path> dump_toys(std::size_t per_label) {
    std::vector<fs::path> out;
    for (std::uint64_t seed : {1, 2}) {
      for (std::size_t i = 0; i < per_label; ++i) {
        ToyDumpOptions o;
        o.seed = seed;
        o.tokens = 4;
        o.prompt_ids = {5 + i, 9 + 2 * i, 20};
        o.prompt_id = "p" + std::to_string(i);
        o.with_distributions = i % 2 == 0;
        o.out = dir_ / ("toy" + std::to_string(seed) + "_" + std::to_string(i) + ".entl");
        run_toy_dump(o);
        out.push_back(o.out);
      }
    }
    return out;
  }

  fs::path dir_;
};

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::internal;
}

}  // namespace

TEST(Args, EntropyKind) {
  EXPECT_EQ(entropy_kind("shannon", std::nullopt), EntropyKind::shannon());
  EXPECT_EQ(entropy_kind("renyi", 2.0), EntropyKind::renyi(2.0));
  EXPECT_EQ(entropy_kind("renyi", 1.0), EntropyKind::shannon());
  EXPECT_EQ(kind_of([] { entropy_kind("shannon", 2.0); }), ErrorKind::usage);
  EXPECT_EQ(kind_of([] { entropy_kind("renyi", std::nullopt); }), ErrorKind::usage);
  EXPECT_EQ(kind_of([] { entropy_kind("tsallis", std::nullopt); }), ErrorKind::usage);
}

TEST(Args, LayerSubsets) {
  EXPECT_EQ(layer_subset("all", 5), (std::vector<std::size_t>{0, 1, 2, 3, 4}));
  EXPECT_EQ(layer_subset("first", 13), (std::vector<std::size_t>{1}));
  EXPECT_EQ(layer_subset("middle", 13), (std::vector<std::size_t>{6}));
  EXPECT_EQ(layer_subset("last", 13), (std::vector<std::size_t>{12}));
  EXPECT_EQ(layer_subset("first+middle+last", 2), (std::vector<std::size_t>{1}));
  EXPECT_EQ(kind_of([] { layer_subset("penultimate", 5); }), ErrorKind::usage);
}

TEST(Args, ToyModelSpec) {
  EXPECT_EQ(parse_toy_model("toy:7").seed, 7u);
  EXPECT_EQ(parse_toy_model("toy:7:6").blocks, 6u);
  EXPECT_EQ(kind_of([] { parse_toy_model("gpt2"); }), ErrorKind::usage);
  EXPECT_EQ(kind_of([] { parse_toy_model("toy:x"); }), ErrorKind::usage);
  EXPECT_EQ(parse_id_list("1,2,,3"), (std::vector<std::size_t>{1, 2, 3}));
  EXPECT_EQ(kind_of([] { parse_answer_ids("1,2,3"); }), ErrorKind::usage);
}

TEST_F(CommandTest, ProfileValidateClassifyProject) {
  const auto inputs = dump_toys(10);
  ProfileOptions po;
  po.inputs = inputs;
  po.out = dir_ / "profiles.entl";
  const auto ds = run_profile(po);
  EXPECT_EQ(ds.size(), 20u);
  EXPECT_EQ(ds.label_names, (std::vector<std::string>{"toy:1", "toy:2"}));
  EXPECT_TRUE(fs::exists(dir_ / "profiles.csv"));

  ValidateOptions vo;
  vo.inputs = inputs;
  vo.out = dir_ / "report.json";
  const auto report = run_validate(vo);
  EXPECT_TRUE(report["c1"].contains("spearman"));
  EXPECT_TRUE(fs::exists(dir_ / "report_c2.csv"));
  EXPECT_TRUE(fs::exists(dir_ / "report_transitions.csv"));

  ClassifyOptions co;
  co.dataset = po.out;
  co.folds = 5;
  co.out = dir_ / "results.json";
  const auto res = run_classify(co);
  EXPECT_EQ(res["per_fold"].size(), 5u);
  EXPECT_GT(res["mean"].get<double>(), 0.9);  // two different models are easy to tell apart
  co.layers = "first";
  EXPECT_EQ(run_classify(co)["features"], 4u);

  ProjectOptions pr;
  pr.dataset = po.out;
  pr.out = dir_ / "coords.csv";
  const auto pca = run_project(pr);
  EXPECT_EQ(pca.coordinates.cols(), 2u);
  EXPECT_TRUE(fs::exists(dir_ / "coords.csv"));
}

TEST_F(CommandTest, SimilarityWritesOneMatrixPerAlpha) {
  const auto inputs = dump_toys(3);
  SimilarityOptions so;
  so.inputs = inputs;
  so.out = dir_ / "sim_{alpha}.csv";
  run_similarity(so);
  for (const char* a : {"0.5", "1", "5"}) EXPECT_TRUE(fs::exists(dir_ / ("sim_" + std::string(a) + ".csv"))) << a;
}

TEST_F(CommandTest, InterventionPipeline) {
  ToyQuestionsOptions qo;
  qo.count = 6;
  qo.out = dir_ / "q.json";
  const auto qs = run_toy_questions(qo);
  ASSERT_EQ(qs.size(), 6u);

  ToyDumpOptions dump;
  dump.questions = qo.out;
  dump.out_dir = dir_ / "qb";
  const auto bundles = run_toy_dump(dump);
  ASSERT_EQ(bundles.size(), 6u);

  PlanOptions po;
  po.inputs = bundles;
  po.fraction = 0.5;
  po.out = dir_ / "plan.json";
  const auto plan = run_plan(po);
  EXPECT_EQ(plan.entries.size(), 6u);
  EXPECT_EQ(plan.entries.at("q001").size(), 2u);
  const auto j = read_json(po.out);
  EXPECT_EQ(j["strategy"], "max_dh");

  EvalOptions eo;
  eo.plans = {po.out};
  eo.questions = qo.out;
  eo.out = dir_ / "acc.csv";
  const auto rows = run_eval(eo);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_NEAR(rows[0].delta, rows[0].accuracy - rows[0].baseline, 1e-15);

  po.fraction = 0.7;
  EXPECT_EQ(kind_of([&] { run_plan(po); }), ErrorKind::usage);
}

TEST_F(CommandTest, MissingInputIsIoError) {
  ProfileOptions po;
  po.inputs = {dir_ / "nope.entl"};
  po.out = dir_ / "x.entl";
  EXPECT_EQ(kind_of([&] { run_profile(po); }), ErrorKind::io);
}
