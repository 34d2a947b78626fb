#include <gtest/gtest.h>

#include "entlens/profiles.hpp"
#include "entlens/rng.hpp"

using namespace entlens;

namespace {

EntropyProfile make_profile(std::size_t T, std::size_t D, double base) {
  EntropyProfile p{Matrix(T, D), {}, json::object()};
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t i = 0; i < D; ++i) p.values(t, i) = base + static_cast<double>(t * 10 + i);
  return p;
}

Bundle labelled_bundle(const std::string& label, std::size_t T, std::size_t D, float peak) {
  Bundle b;
  b.metadata = json{{"label", label}, {"model", "m"}, {"prompt_id", label + "-x"}};
  std::vector<float> dist;
  for (std::size_t r = 0; r < T * D; ++r) {
    dist.push_back(peak);
    dist.push_back((1.0f - peak) / 2);
    dist.push_back((1.0f - peak) / 2);
  }
  b.add_tensor("distributions", {T, D, 3}, std::span<const float>(dist));
  return b;
}

}  // namespace

TEST(Aggregate, ConcatIsRowMajor) {
  const auto p = make_profile(2, 3, 0);
  EXPECT_EQ(aggregate(p, Aggregation::concat), (std::vector<double>{0, 1, 2, 10, 11, 12}));
}

TEST(Aggregate, MeanOverTokens) {
  const auto p = make_profile(2, 3, 0);
  EXPECT_EQ(aggregate(p, Aggregation::mean), (std::vector<double>{5, 6, 7}));
}

TEST(Aggregate, WindowedAveragesEightChunks) {
  const auto p = make_profile(16, 2, 0);
  const auto w = aggregate(p, Aggregation::windowed);
  ASSERT_EQ(w.size(), 16u);
  EXPECT_DOUBLE_EQ(w[0], 5.0);   // tokens 0,1 at layer 0
  EXPECT_DOUBLE_EQ(w[15], 146.0);  // tokens 14,15 at layer 1
  EXPECT_THROW(aggregate(make_profile(7, 2, 0), Aggregation::windowed), Error);
}

TEST(Resample, EndpointsExactAndLinearInterior) {
  const std::vector<double> src{0, 10, 20, 30};
  const auto out = resample_linear(src, 7);
  ASSERT_EQ(out.size(), 7u);
  EXPECT_EQ(out.front(), 0.0);
  EXPECT_EQ(out.back(), 30.0);
  EXPECT_NEAR(out[1], 5.0, 1e-12);
  EXPECT_NEAR(out[3], 15.0, 1e-12);
  EXPECT_EQ(resample_linear(src, 4), src);
}

TEST(Resample, StaysWithinNeighbourRange) {
  Xoshiro256 rng(4);
  for (int i = 0; i < 50; ++i) {
    std::vector<double> src(2 + rng.below(30));
    for (auto& v : src) v = rng.uniform(0, 5);
    const auto out = resample_linear(src, 2 + rng.below(40));
    const auto [lo, hi] = std::minmax_element(src.begin(), src.end());
    for (double v : out) {
      EXPECT_GE(v, *lo);
      EXPECT_LE(v, *hi);
    }
  }
}

TEST(Standardizer, ZeroMeanUnitStdAndConstantColumns) {
  Matrix x(4, 2, {1, 5, 2, 5, 3, 5, 4, 5});
  const auto z = standardize(x);
  double mean = 0, var = 0;
  for (std::size_t r = 0; r < 4; ++r) mean += z(r, 0) / 4;
  for (std::size_t r = 0; r < 4; ++r) var += (z(r, 0) - mean) * (z(r, 0) - mean) / 4;
  EXPECT_NEAR(mean, 0.0, 1e-12);
  EXPECT_NEAR(var, 1.0, 1e-12);
  for (std::size_t r = 0; r < 4; ++r) EXPECT_EQ(z(r, 1), 0.0);
}

TEST(Assemble, LabelsSortedAndRowsInInputOrder) {
  const std::vector<Bundle> bundles{labelled_bundle("zeta", 2, 3, 0.9f), labelled_bundle("alpha", 2, 3, 0.5f),
                                    labelled_bundle("zeta", 2, 3, 0.8f)};
  const auto ds = assemble(std::span<const Bundle>(bundles), AssembleOptions{});
  EXPECT_EQ(ds.label_names, (std::vector<std::string>{"alpha", "zeta"}));
  EXPECT_EQ(ds.labels, (std::vector<std::size_t>{1, 0, 1}));
  EXPECT_EQ(ds.features.cols(), 6u);
  EXPECT_EQ(ds.depth, 3u);
  EXPECT_LT(ds.features(0, 0), ds.features(1, 0));
  EXPECT_EQ(ds.provenance[1]["prompt_id"], "alpha-x");
}

TEST(Assemble, DepthMismatchNeedsTargetDepth) {
  const std::vector<Bundle> bundles{labelled_bundle("a", 1, 3, 0.9f), labelled_bundle("b", 1, 5, 0.9f)};
  EXPECT_THROW(assemble(std::span<const Bundle>(bundles), AssembleOptions{}), Error);
  AssembleOptions opt;
  opt.target_depth = 4;
  const auto ds = assemble(std::span<const Bundle>(bundles), opt);
  EXPECT_EQ(ds.features.cols(), 4u);
}

TEST(Assemble, MissingLabelIsContentError) {
  Bundle b = labelled_bundle("a", 1, 2, 0.9f);
  b.metadata.erase("label");
  const std::vector<Bundle> bundles{b};
  try {
    assemble(std::span<const Bundle>(bundles), AssembleOptions{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::content);
  }
}

TEST(Dataset, BundleRoundTripAndCsv) {
  const std::vector<Bundle> bundles{labelled_bundle("b,1", 2, 3, 0.9f), labelled_bundle("a", 2, 3, 0.5f)};
  const auto ds = assemble(std::span<const Bundle>(bundles), AssembleOptions{});
  const auto back = dataset_from_bundle(dataset_to_bundle(ds));
  EXPECT_EQ(back.labels, ds.labels);
  EXPECT_EQ(back.label_names, ds.label_names);
  EXPECT_EQ(back.depth, ds.depth);
  for (std::size_t i = 0; i < ds.features.data().size(); ++i)
    EXPECT_EQ(back.features.data()[i], static_cast<double>(static_cast<float>(ds.features.data()[i])));
  const auto csv = dataset_to_csv(ds);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "f0,f1,f2,f3,f4,f5,label");
  EXPECT_NE(csv.find("\"b,1\""), std::string::npos);
}

TEST(Dataset, FilterLayersKeepsMatchingColumns) {
  ProfileDataset ds;
  ds.features = Matrix(1, 6, {0, 1, 2, 10, 11, 12});
  ds.labels = {0};
  ds.label_names = {"x"};
  ds.depth = 3;
  const std::vector<std::size_t> first{0}, last{2};
  EXPECT_EQ(filter_layers(ds, first).features.data()[1], 10.0);
  EXPECT_EQ(filter_layers(ds, last).features.cols(), 2u);
  const std::vector<std::size_t> none{7};
  EXPECT_THROW(filter_layers(ds, none), Error);
}
