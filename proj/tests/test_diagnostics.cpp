#include <cmath>

#include <gtest/gtest.h>

#include "entlens/diagnostics.hpp"
#include "entlens/rng.hpp"
#include "oracles.hpp"

using namespace entlens;

namespace {

ProfileDataset blobs(std::size_t per_class, std::size_t classes, std::size_t dim, double separation, std::uint64_t seed) {
  Xoshiro256 rng(seed);
  ProfileDataset ds;
  ds.features = Matrix(per_class * classes, dim);
  for (std::size_t c = 0; c < classes; ++c) {
    ds.label_names.push_back("c" + std::to_string(c));
    for (std::size_t i = 0; i < per_class; ++i) {
      const std::size_t r = c * per_class + i;
      for (std::size_t f = 0; f < dim; ++f) ds.features(r, f) = rng.normal() + (f == c % dim ? separation : 0.0);
      ds.labels.push_back(c);
    }
  }
  return ds;
}

}  // namespace

TEST(Ranks, AverageTies) {
  EXPECT_EQ(fractional_ranks(std::vector<double>{10, 20, 20, 5}), (std::vector<double>{2, 3.5, 3.5, 1}));
}

TEST(Spearman, Examples) {
  EXPECT_NEAR(spearman(std::vector<double>{1, 2, 3, 4, 5}, std::vector<double>{1, 2, 3, 4, 5}), 1.0, 1e-15);
  EXPECT_NEAR(spearman(std::vector<double>{1, 2, 3, 4, 5}, std::vector<double>{5, 4, 3, 2, 1}), -1.0, 1e-15);
  EXPECT_NEAR(spearman(std::vector<double>{1, 2, 2, 3}, std::vector<double>{1, 2, 3, 4}), 0.9486833, 1e-6);
}

TEST(Spearman, ConstantInputIsUndefined) {
  try {
    spearman(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::undefined);
  }
}

TEST(Spearman, MatchesCountingOracle) {
  Xoshiro256 rng(8);
  for (int i = 0; i < 50; ++i) {
    std::vector<double> x(5 + rng.below(60)), y(x.size());
    for (auto& v : x) v = static_cast<double>(rng.below(6));
    for (auto& v : y) v = rng.uniform();
    EXPECT_NEAR(spearman(x, y), oracle::spearman(x, y), 1e-12);
  }
}

TEST(Auc, Examples) {
  const std::vector<int> y{0, 0, 1, 1};
  EXPECT_DOUBLE_EQ(roc_auc_binary(std::vector<double>{0.1, 0.2, 0.8, 0.9}, y), 1.0);
  EXPECT_DOUBLE_EQ(roc_auc_binary(std::vector<double>{0.9, 0.8, 0.2, 0.1}, y), 0.0);
  EXPECT_DOUBLE_EQ(roc_auc_binary(std::vector<double>{0.5, 0.5, 0.5, 0.5}, y), 0.5);
  EXPECT_EQ(roc_auc_binary(std::vector<double>{0.9, 0.8, 0.3}, std::vector<int>{1, 0, 1}), 0.5);
  EXPECT_THROW(roc_auc_binary(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), Error);
}

TEST(Auc, MatchesPairwiseOracleWithTies) {
  Xoshiro256 rng(12);
  for (int i = 0; i < 50; ++i) {
    const std::size_t n = 4 + rng.below(80);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t j = 0; j < n; ++j) {
      s[j] = static_cast<double>(rng.below(10));
      y[j] = static_cast<int>(j % 2);
    }
    EXPECT_NEAR(roc_auc_binary(s, y), oracle::auc(s, y), 1e-12);
  }
}

TEST(Knn, TiesBrokenByTrainingIndex) {
  const Matrix train(3, 1, {1.0, -1.0, 5.0});
  const std::vector<std::size_t> labels{0, 1, 1};
  const Matrix test(1, 1, {0.0});
  const auto s = knn_predict_scores(train, labels, 2, test, 1);
  EXPECT_EQ(s(0, 0), 1.0);
  EXPECT_EQ(s(0, 1), 0.0);
  const auto s2 = knn_predict_scores(train, labels, 2, test, 3);
  EXPECT_NEAR(s2(0, 1), 2.0 / 3.0, 1e-15);
  EXPECT_THROW(knn_predict_scores(train, labels, 2, test, 4), Error);
}

TEST(Metrics, F1AndAccuracy) {
  const std::vector<std::size_t> truth{0, 0, 1, 1}, pred{0, 1, 1, 1};
  EXPECT_DOUBLE_EQ(accuracy(pred, truth), 0.75);
  EXPECT_NEAR(macro_f1(pred, truth, 2), (2.0 / 3.0 + 0.8) / 2.0, 1e-15);
}

TEST(CrossValidate, SeparableBlobsScoreHigh) {
  const auto ds = blobs(30, 3, 4, 8.0, 1);
  CvOptions opt;
  opt.folds = 5;
  const auto rep = cross_validate(ds, opt);
  EXPECT_EQ(rep.per_fold.size(), 5u);
  EXPECT_GT(rep.mean, 0.99);
  opt.metric = Metric::accuracy;
  EXPECT_GT(cross_validate(ds, opt).mean, 0.95);
}

TEST(CrossValidate, SameSeedSameReport) {
  const auto ds = blobs(20, 2, 3, 1.0, 2);
  CvOptions opt;
  opt.seed = 44;
  const auto a = cross_validate(ds, opt), b = cross_validate(ds, opt);
  EXPECT_EQ(a.per_fold, b.per_fold);
  opt.protocol = Protocol::split50;
  const auto c = cross_validate(ds, opt), d = cross_validate(ds, opt);
  EXPECT_EQ(c.per_fold, d.per_fold);
}

TEST(CrossValidate, SmallClassIsStratificationError) {
  auto ds = blobs(5, 2, 2, 1.0, 3);
  try {
    cross_validate(ds, CvOptions{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::stratification);
  }
}

TEST(Pca, CollinearDataHasOneComponent) {
  Matrix x(5, 3);
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t c = 0; c < 3; ++c) x(r, c) = static_cast<double>(r) * static_cast<double>(c + 1);
  const auto p = pca_project(x, 3);
  EXPECT_NEAR(p.explained_ratio[0], 1.0, 1e-12);
  EXPECT_NEAR(p.explained_ratio[1], 0.0, 1e-12);
  EXPECT_NEAR(p.explained_ratio[2], 0.0, 1e-12);
}

TEST(Pca, MatchesCovarianceEigenOracle) {
  Xoshiro256 rng(31);
  Matrix x(40, 6);
  for (std::size_t r = 0; r < 40; ++r)
    for (std::size_t c = 0; c < 6; ++c) x(r, c) = rng.normal() * static_cast<double>(6 - c);
  const auto p = pca_project(x, 3);
  const auto ref = oracle::pca_coordinates(x, 3);
  for (std::size_t r = 0; r < 40; ++r)
    for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(p.coordinates(r, c), ref(r, c), 1e-6);
  double sum = 0;
  for (double v : pca_project(x, 6).explained_ratio) sum += v;
  EXPECT_NEAR(sum, 1.0, 1e-12);
}

TEST(Similarity, CosineAndSigma) {
  const Matrix rows(3, 2, {1, 0, 0, 1, 1, 1});
  const auto s = similarity_matrix(rows);
  EXPECT_EQ(s.similarity(0, 0), 1.0);
  EXPECT_NEAR(s.similarity(0, 1), 0.0, 1e-15);
  EXPECT_NEAR(s.similarity(0, 2), std::sqrt(0.5), 1e-15);
  const std::vector<double> off{0.0, std::sqrt(0.5), std::sqrt(0.5)};
  EXPECT_NEAR(s.sigma, mean_std(off).second, 1e-15);
  EXPECT_THROW(similarity_matrix(Matrix(2, 2, {0, 0, 1, 1})), Error);
}
