#include <gtest/gtest.h>

#include "entlens/toy_model.hpp"
#include "oracles.hpp"

using namespace entlens;

namespace {

const std::vector<std::size_t> kPrompt{5, 17, 2, 40, 11};

}  // namespace

TEST(ToyModel, InvalidConfigIsConfigError) {
  try {
    ToyModel m(ToyConfig{.dim = 30, .heads = 4});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::config);
  }
}

TEST(ToyModel, SameSeedSameLogitsDifferentSeedDiffers) {
  const ToyModel a(ToyConfig{.seed = 1}), b(ToyConfig{.seed = 1}), c(ToyConfig{.seed = 2});
  const auto la = a.forward(kPrompt).logits, lb = b.forward(kPrompt).logits, lc = c.forward(kPrompt).logits;
  EXPECT_EQ(la, lb);
  double diff = 0;
  for (std::size_t i = 0; i < la.back().size(); ++i) diff = std::max(diff, std::abs(la.back()[i] - lc.back()[i]));
  EXPECT_GT(diff, 0.0);
}

TEST(ToyModel, MatchesIndependentForwardPass) {
  const ToyModel m(ToyConfig{.seed = 9});
  for (const std::set<std::size_t>& skip : {std::set<std::size_t>{}, std::set<std::size_t>{1}, std::set<std::size_t>{0, 3}}) {
    const auto fw = m.forward(kPrompt, skip);
    const auto ref = oracle::toy_forward(m, kPrompt, skip);
    for (std::size_t t = 0; t < kPrompt.size(); ++t) {
      for (std::size_t l = 0; l <= m.config().blocks; ++l)
        for (std::size_t k = 0; k < m.config().dim; ++k) EXPECT_NEAR(fw.hidden[t](l, k), ref.hidden[t][l][k], 1e-9);
      for (std::size_t v = 0; v < m.config().vocab; ++v) EXPECT_NEAR(fw.logits[t][v], ref.logits[t][v], 1e-9);
    }
  }
}

TEST(ToyModel, SkippingEveryBlockIsIdentityStream) {
  const ToyModel m(ToyConfig{.seed = 3});
  const auto fw = m.forward(kPrompt, {0, 1, 2, 3});
  for (const auto& h : fw.hidden)
    for (std::size_t k = 0; k < m.config().dim; ++k) EXPECT_EQ(h(4, k), h(0, k));
}

TEST(ToyModel, EmptySkipIsBitExact) {
  const ToyModel m(ToyConfig{.seed = 3});
  EXPECT_EQ(m.forward(kPrompt).logits, m.forward(kPrompt, std::set<std::size_t>{}).logits);
}

TEST(ToyModel, CausalMask) {
  const ToyModel m(ToyConfig{.seed = 4});
  auto other = kPrompt;
  other[3] = 63;
  const auto a = m.forward(kPrompt), b = m.forward(other);
  for (std::size_t t = 0; t < 3; ++t) {
    EXPECT_EQ(a.logits[t], b.logits[t]);
    EXPECT_TRUE(a.hidden[t] == b.hidden[t]);
  }
  EXPECT_NE(a.logits[3], b.logits[3]);
}

TEST(ToyModel, RejectsOutOfRangeIds) {
  const ToyModel m(ToyConfig{});
  const std::vector<std::size_t> bad{64};
  EXPECT_THROW(m.forward(bad), Error);
  EXPECT_THROW(m.forward(kPrompt, {4}), Error);
}

TEST(ToyModel, GenerateIsDeterministic) {
  const ToyModel m(ToyConfig{.seed = 6});
  EXPECT_EQ(m.generate(kPrompt, 8).tokens, m.generate(kPrompt, 8).tokens);
  EXPECT_EQ(m.generate(kPrompt, 8, DecodeMode::sample(2)).tokens, m.generate(kPrompt, 8, DecodeMode::sample(2)).tokens);
}

TEST(ToyModel, BundleLensReproducesStepOutputs) {
  const ToyModel m(ToyConfig{.seed = 7});
  const auto g = m.generate(kPrompt, 5);
  const auto& b = g.bundle;
  EXPECT_EQ(b.entry("hidden").shape, (std::vector<std::uint64_t>{5, 5, 32}));
  const auto dec = b.tensor_f32("decoder");
  for (std::size_t i = 0; i < dec.size(); ++i) EXPECT_EQ(dec[i], static_cast<float>(m.embedding().data()[i]));
  const LayerDistributions layers(b);
  for (std::size_t t = 0; t < 5; ++t) {
    const auto dists = layers.at(t);
    const auto& want = g.step_outputs[t];
    for (std::size_t v = 0; v < want.size(); ++v) EXPECT_NEAR(dists.back()[v], want[v], 1e-5);
    EXPECT_EQ(g.tokens[t], static_cast<std::size_t>(b.tensor_f32("next_tokens")[t]));
  }
}

TEST(ToyModel, OutputsAreDistributions) {
  const ToyModel m(ToyConfig{.seed = 8});
  for (const auto& d : m.forward(kPrompt).outputs) {
    double s = 0;
    for (double p : d.probs()) s += p;
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
}
