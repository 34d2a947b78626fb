#include <gtest/gtest.h>

#include "entlens/interventions.hpp"
#include "oracles.hpp"

using namespace entlens;

TEST(SkipCount, RoundsFractionOfBlocks) {
  EXPECT_EQ(skip_count(0.1, 12), 1u);
  EXPECT_EQ(skip_count(0.5, 4), 2u);
  EXPECT_EQ(skip_count(0.1, 4), 1u);
  EXPECT_EQ(skip_count(0.3, 5), 2u);
  EXPECT_THROW(skip_count(0.6, 4), Error);
  EXPECT_THROW(skip_count(0.0, 4), Error);
}

TEST(SelectLayers, Examples) {
  const std::vector<double> d{-1, 2, 0.5};
  EXPECT_EQ(select_layers(d, Strategy::max_dh, 1), (std::vector<std::size_t>{1}));
  EXPECT_EQ(select_layers(d, Strategy::min_dh, 1), (std::vector<std::size_t>{0}));
  const std::vector<double> tie{-1, 2, 0.5, 2};
  EXPECT_EQ(select_layers(tie, Strategy::max_dh, skip_count(0.5, 4)), (std::vector<std::size_t>{1, 3}));
  EXPECT_THROW(select_layers(d, Strategy::max_dh, 4), Error);
}

TEST(SelectLayers, MaxAndMinAreDisjoint) {
  Xoshiro256 rng(1);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> d(4 + rng.below(20));
    for (auto& v : d) v = rng.normal();
    const std::size_t count = 1 + rng.below(d.size() / 2);
    const auto hi = select_layers(d, Strategy::max_dh, count), lo = select_layers(d, Strategy::min_dh, count);
    for (auto x : hi) EXPECT_EQ(std::count(lo.begin(), lo.end(), x), 0);
  }
}

TEST(SelectLayers, RandomIsSeededSampleWithoutReplacement) {
  const std::vector<double> d(12, 0.0);
  const auto a = select_layers(d, Strategy::random, 5, 77), b = select_layers(d, Strategy::random, 5, 77);
  EXPECT_EQ(a, b);
  EXPECT_EQ(std::set<std::size_t>(a.begin(), a.end()).size(), 5u);
  EXPECT_TRUE(std::is_sorted(a.begin(), a.end()));
}

TEST(SkipPlan, JsonRoundTripAndValidation) {
  SkipPlan p{Strategy::random, 0.2, 9, {{"q1", {0, 2}}, {"q2", {3}}}};
  const auto back = SkipPlan::from_json(json::parse(p.to_json().dump()));
  EXPECT_EQ(back.entries, p.entries);
  EXPECT_EQ(back.strategy, Strategy::random);
  EXPECT_EQ(back.seed, 9u);
  EXPECT_NO_THROW(back.validate(4));
  EXPECT_THROW(back.validate(3), Error);
  EXPECT_THROW(SkipPlan::from_json(json{{"strategy", "max_dh"}}), Error);
}

TEST(Mcq, Examples) {
  const AnswerIds ids{1, 2, 3, 4};
  const std::vector<std::size_t> gold{2, 0};
  const std::vector<Distribution> peaked{Distribution{0.0, 0.0, 0.0, 1.0, 0.0}, Distribution{0.0, 1.0, 0.0, 0.0, 0.0}};
  EXPECT_EQ(evaluate_mcq(peaked, ids, gold), 1.0);
  const std::vector<Distribution> uniform{Distribution::uniform(5), Distribution::uniform(5)};
  EXPECT_EQ(evaluate_mcq(uniform, ids, gold), 0.5);
  // The full-vocabulary argmax is token 0, but the restricted argmax hits gold.
  const std::vector<Distribution> off{Distribution{0.6, 0.05, 0.05, 0.25, 0.05}};
  const std::vector<std::size_t> g2{2};
  EXPECT_EQ(evaluate_mcq(off, ids, g2), 1.0);
  EXPECT_THROW(evaluate_mcq(off, AnswerIds{1, 1, 2, 3}, g2), Error);
}

TEST(Plan, DeterministicAndSized) {
  const ToyModel model(ToyConfig{.blocks = 6, .seed = 2});
  const std::vector<Question> qs{{"a", {5, 6, 7}, 0}, {"b", {8, 9}, 1}, {"c", {5, 6, 7}, 2}};
  const auto bundles = question_bundles(model, qs);
  const auto p1 = plan_from_bundles(bundles, Strategy::random, 0.3, 4), p2 = plan_from_bundles(bundles, Strategy::random, 0.3, 4);
  EXPECT_EQ(p1.entries, p2.entries);
  for (const auto& [q, layers] : p1.entries) EXPECT_EQ(layers.size(), 2u);
  const auto mx = plan_from_bundles(bundles, Strategy::max_dh, 0.3, 0);
  EXPECT_EQ(mx.entries.at("a"), mx.entries.at("c"));
}

TEST(Ablation, EmptyPlanHasZeroDelta) {
  const ToyModel model(ToyConfig{.seed = 1});
  const std::vector<Question> qs{{"a", {5, 6, 7}, 0}, {"b", {8, 9}, 1}};
  const auto row = ablate_and_eval(model, SkipPlan{}, qs);
  EXPECT_EQ(row.delta, 0.0);
}

TEST(Ablation, SkippedBlockMatchesOracle) {
  const ToyModel model(ToyConfig{.seed = 1});
  const std::vector<std::size_t> prompt{5, 6, 7, 8};
  const auto fw = model.forward(prompt, {2});
  const auto ref = oracle::toy_forward(model, prompt, {2});
  for (std::size_t v = 0; v < model.config().vocab; ++v) EXPECT_NEAR(fw.logits.back()[v], ref.logits.back()[v], 1e-9);
}

TEST(Grid, CoversStrategiesAndFractions) {
  const ToyModel model(ToyConfig{.seed = 1});
  const std::vector<Question> qs{{"a", {5, 6, 7}, 0}, {"b", {8, 9}, 1}, {"c", {10, 11, 12}, 3}};
  const auto rows = intervention_grid(model, qs, kToyAnswerIds, 3, 0);
  EXPECT_EQ(rows.size(), 15u);
  const auto csv = accuracy_csv(rows);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "strategy,fraction,accuracy,baseline,delta");
}
