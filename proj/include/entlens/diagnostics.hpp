#pragma once

// Statistical toolkit for profile datasets: rank correlation, kNN scoring,
// ROC-AUC / F1, stratified cross-validation, PCA and cosine-similarity
// matrices.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "entlens/error.hpp"
#include "entlens/matrix.hpp"
#include "entlens/parallel.hpp"
#include "entlens/profiles.hpp"
#include "entlens/rng.hpp"

namespace entlens {

/// Average (fractional) ranks, 1-based.
inline std::vector<double> fractional_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

inline double pearson(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size(), ErrorKind::shape, "correlation inputs differ in length");
  require(x.size() >= 2, ErrorKind::shape, "correlation needs at least two observations");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  require(sxx > 0.0 && syy > 0.0, ErrorKind::undefined, "correlation of a constant vector is undefined");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

/// Spearman rank correlation with average ranks for ties.
inline double spearman(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size(), ErrorKind::shape, "correlation inputs differ in length");
  require(x.size() >= 2, ErrorKind::shape, "correlation needs at least two observations");
  const auto rx = fractional_ranks(x);
  const auto ry = fractional_ranks(y);
  return pearson(rx, ry);
}

/// Mann-Whitney AUC: P(score_pos > score_neg) + 0.5 P(tie).
inline double roc_auc_binary(std::span<const double> scores, std::span<const int> labels) {
  require(scores.size() == labels.size(), ErrorKind::shape, "scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
  double wins = 0.0;
  std::size_t neg_below = 0, n_pos = 0, n_neg = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i, pos = 0, neg = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] != 0 ? pos : neg) += 1;
      ++j;
    }
    wins += static_cast<double>(pos) * static_cast<double>(neg_below) + 0.5 * static_cast<double>(pos) * static_cast<double>(neg);
    neg_below += neg;
    n_pos += pos;
    n_neg += neg;
    i = j;
  }
  require(n_pos > 0 && n_neg > 0, ErrorKind::undefined, "AUC needs both positive and negative labels");
  return wins / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

/// Unweighted mean of per-class one-vs-rest AUCs; classes absent from
/// `labels` (or covering all of it) are skipped.
inline double ovr_auc(const Matrix& scores, std::span<const std::size_t> labels) {
  double total = 0.0;
  std::size_t used = 0;
  std::vector<int> bin(labels.size());
  for (std::size_t c = 0; c < scores.cols(); ++c) {
    std::size_t pos = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) pos += (bin[i] = labels[i] == c ? 1 : 0);
    if (pos == 0 || pos == labels.size()) continue;
    total += roc_auc_binary(scores.column(c), bin);
    ++used;
  }
  require(used > 0, ErrorKind::undefined, "one-vs-rest AUC needs at least two classes in the evaluation set");
  return total / static_cast<double>(used);
}

/// Unweighted mean F1 over classes present in either truth or prediction.
inline double macro_f1(std::span<const std::size_t> predicted, std::span<const std::size_t> truth, std::size_t classes) {
  require(predicted.size() == truth.size(), ErrorKind::shape, "prediction and truth differ in length");
  std::vector<std::size_t> tp(classes, 0), fp(classes, 0), fn(classes, 0);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (predicted[i] == truth[i]) {
      ++tp[truth[i]];
    } else {
      ++fp[predicted[i]];
      ++fn[truth[i]];
    }
  }
  double total = 0.0;
  std::size_t used = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    const std::size_t denom = 2 * tp[c] + fp[c] + fn[c];
    if (denom == 0) continue;
    total += 2.0 * static_cast<double>(tp[c]) / static_cast<double>(denom);
    ++used;
  }
  return used == 0 ? 0.0 : total / static_cast<double>(used);
}

inline double accuracy(std::span<const std::size_t> predicted, std::span<const std::size_t> truth) {
  require(predicted.size() == truth.size() && !truth.empty(), ErrorKind::shape, "accuracy needs matching non-empty inputs");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

/// Fraction of the k nearest (Euclidean) training samples per class, [N_test, C].
/// Distance ties go to the lower training index.
inline Matrix knn_predict_scores(const Matrix& train, std::span<const std::size_t> train_labels, std::size_t classes,
                                 const Matrix& test, std::size_t k) {
  require(k >= 1, ErrorKind::usage, "k must be positive");
  require(k <= train.rows(), ErrorKind::usage, "k exceeds the number of training samples");
  require(train.cols() == test.cols(), ErrorKind::shape, "train and test feature widths differ");
  require(train_labels.size() == train.rows(), ErrorKind::shape, "one label per training sample required");
  Matrix scores(test.rows(), classes);
  std::vector<std::pair<double, std::size_t>> dist(train.rows());
  for (std::size_t q = 0; q < test.rows(); ++q) {
    const auto x = test.row(q);
    for (std::size_t i = 0; i < train.rows(); ++i) {
      const auto t = train.row(i);
      double d2 = 0.0;
      for (std::size_t f = 0; f < x.size(); ++f) d2 += (x[f] - t[f]) * (x[f] - t[f]);
      dist[i] = {d2, i};
    }
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
    for (std::size_t n = 0; n < k; ++n) scores(q, train_labels[dist[n].second]) += 1.0;
    for (std::size_t c = 0; c < classes; ++c) scores(q, c) /= static_cast<double>(k);
  }
  return scores;
}

inline Matrix knn_predict_scores(const ProfileDataset& train, const Matrix& test, std::size_t k) {
  return knn_predict_scores(train.features, train.labels, train.classes(), test, k);
}

/// Row-wise argmax, ties to the lowest class index.
inline std::vector<std::size_t> argmax_rows(const Matrix& scores) {
  std::vector<std::size_t> out(scores.rows());
  for (std::size_t r = 0; r < scores.rows(); ++r) {
    const auto row = scores.row(r);
    out[r] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

enum class Metric { ovr_auc, macro_f1, accuracy };
enum class Protocol { stratified, split50 };

inline const char* to_string(Metric m) {
  switch (m) {
    case Metric::ovr_auc: return "ovr_auc";
    case Metric::macro_f1: return "macro_f1";
    case Metric::accuracy: return "accuracy";
  }
  return "?";
}

inline Metric parse_metric(const std::string& s) {
  if (s == "ovr_auc") return Metric::ovr_auc;
  if (s == "macro_f1") return Metric::macro_f1;
  if (s == "accuracy") return Metric::accuracy;
  fail(ErrorKind::usage, "unknown metric '" + s + "'");
}

struct CvOptions {
  std::size_t k = 3;
  std::size_t folds = 10;  // runs, for the repeated 50/50 protocol
  Metric metric = Metric::ovr_auc;
  Protocol protocol = Protocol::stratified;
  std::uint64_t seed = 0;
};

struct CvReport {
  std::string metric_name;
  std::vector<double> per_fold;
  double mean = 0.0;
  double std = 0.0;  // population
  std::size_t folds = 0;
  std::uint64_t seed = 0;
  std::string protocol;
};

inline std::pair<double, double> mean_std(std::span<const double> v) {
  if (v.empty()) return {0.0, 0.0};
  const double n = static_cast<double>(v.size());
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return {m, std::sqrt(s / n)};
}

/// Scores one train/test split: standardize on train, kNN, metric.
inline double evaluate_split(const ProfileDataset& ds, std::span<const std::size_t> train_idx,
                             std::span<const std::size_t> test_idx, const CvOptions& opt) {
  Matrix train(train_idx.size(), ds.features.cols()), test(test_idx.size(), ds.features.cols());
  std::vector<std::size_t> ytrain, ytest;
  for (std::size_t i = 0; i < train_idx.size(); ++i) {
    std::copy_n(ds.features.row(train_idx[i]).begin(), ds.features.cols(), train.row(i).begin());
    ytrain.push_back(ds.labels[train_idx[i]]);
  }
  for (std::size_t i = 0; i < test_idx.size(); ++i) {
    std::copy_n(ds.features.row(test_idx[i]).begin(), ds.features.cols(), test.row(i).begin());
    ytest.push_back(ds.labels[test_idx[i]]);
  }
  const auto scaler = Standardizer::fit(train);
  const auto scores = knn_predict_scores(scaler.apply(train), ytrain, ds.classes(), scaler.apply(test), opt.k);
  switch (opt.metric) {
    case Metric::ovr_auc: return ovr_auc(scores, ytest);
    case Metric::macro_f1: return macro_f1(argmax_rows(scores), ytest, ds.classes());
    case Metric::accuracy: return accuracy(argmax_rows(scores), ytest);
  }
  return 0.0;
}

/// Stratified k-fold (or repeated stratified 50/50) cross-validation of the
/// kNN classifier. Bit-reproducible for a fixed seed at any thread count.
inline CvReport cross_validate(const ProfileDataset& ds, const CvOptions& opt) {
  require(opt.folds >= 2, ErrorKind::usage, "at least two folds (or runs) are required");
  ds.validate();
  std::vector<std::vector<std::size_t>> members(ds.classes());
  for (std::size_t i = 0; i < ds.size(); ++i) members[ds.labels[i]].push_back(i);

  std::vector<std::vector<std::size_t>> train_sets(opt.folds), test_sets(opt.folds);
  if (opt.protocol == Protocol::stratified) {
    for (std::size_t c = 0; c < members.size(); ++c) {
      if (!members[c].empty() && members[c].size() < opt.folds)
        fail(ErrorKind::stratification, "class '" + ds.label_names[c] + "' has " + std::to_string(members[c].size()) +
                                            " samples, fewer than " + std::to_string(opt.folds) + " folds");
    }
    Xoshiro256 rng(opt.seed);
    std::vector<std::size_t> fold_of(ds.size());
    for (auto m : members) {
      shuffle(m, rng);
      for (std::size_t j = 0; j < m.size(); ++j) fold_of[m[j]] = j % opt.folds;
    }
    for (std::size_t i = 0; i < ds.size(); ++i)
      for (std::size_t f = 0; f < opt.folds; ++f) (fold_of[i] == f ? test_sets[f] : train_sets[f]).push_back(i);
  } else {
    for (std::size_t c = 0; c < members.size(); ++c) {
      if (!members[c].empty() && members[c].size() < 2)
        fail(ErrorKind::stratification, "class '" + ds.label_names[c] + "' needs at least two samples for a 50/50 split");
    }
    for (std::size_t r = 0; r < opt.folds; ++r) {
      Xoshiro256 rng(mix_seed(opt.seed, r));
      for (auto m : members) {
        shuffle(m, rng);
        const std::size_t half = m.size() / 2;
        for (std::size_t j = 0; j < m.size(); ++j) (j < half ? test_sets[r] : train_sets[r]).push_back(m[j]);
      }
      std::sort(train_sets[r].begin(), train_sets[r].end());
      std::sort(test_sets[r].begin(), test_sets[r].end());
    }
  }

  CvReport rep;
  rep.metric_name = to_string(opt.metric);
  rep.per_fold.resize(opt.folds);
  rep.folds = opt.folds;
  rep.seed = opt.seed;
  rep.protocol = opt.protocol == Protocol::stratified ? "stratified" : "split50";
  parallel::for_each_index(opt.folds, [&](std::size_t f) { rep.per_fold[f] = evaluate_split(ds, train_sets[f], test_sets[f], opt); });
  std::tie(rep.mean, rep.std) = mean_std(rep.per_fold);
  return rep;
}

struct PcaResult {
  Matrix coordinates;                   // [N, c]
  Matrix components;                    // [c, F], unit loading vectors
  std::vector<double> explained_ratio;  // length c
};

/// PCA through a thin SVD of the column-centered data. Each loading vector
/// is signed so that its largest-magnitude entry is positive.
inline PcaResult pca_project(const Matrix& x, std::size_t components) {
  require(x.rows() >= 2, ErrorKind::shape, "PCA needs at least two samples");
  require(components >= 1 && components <= std::min(x.rows(), x.cols()), ErrorKind::usage,
          "component count must lie in [1, min(N, F)]");
  const auto n = static_cast<Eigen::Index>(x.rows()), f = static_cast<Eigen::Index>(x.cols());
  Eigen::MatrixXd centered(n, f);
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index c = 0; c < f; ++c) centered(r, c) = x(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
  const Eigen::RowVectorXd mean = centered.colwise().mean();
  centered.rowwise() -= mean;

  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  Eigen::MatrixXd v = svd.matrixV();
  const double total = s.squaredNorm();

  PcaResult out{Matrix(x.rows(), components), Matrix(components, x.cols()), std::vector<double>(components, 0.0)};
  for (std::size_t c = 0; c < components; ++c) {
    const auto ci = static_cast<Eigen::Index>(c);
    Eigen::Index peak = 0;
    for (Eigen::Index i = 1; i < f; ++i)
      if (std::abs(v(i, ci)) > std::abs(v(peak, ci))) peak = i;
    if (v(peak, ci) < 0) v.col(ci) *= -1.0;
    out.explained_ratio[c] = total > 0.0 ? s(ci) * s(ci) / total : 0.0;
    for (Eigen::Index i = 0; i < f; ++i) out.components(c, static_cast<std::size_t>(i)) = v(i, ci);
  }
  const Eigen::MatrixXd coords = centered * v.leftCols(static_cast<Eigen::Index>(components));
  for (Eigen::Index r = 0; r < n; ++r)
    for (std::size_t c = 0; c < components; ++c)
      out.coordinates(static_cast<std::size_t>(r), c) = coords(r, static_cast<Eigen::Index>(c));
  return out;
}

struct SimilarityResult {
  Matrix similarity;  // [N, N]
  double sigma = 0.0; // population std of the off-diagonal entries
};

inline SimilarityResult similarity_matrix(const Matrix& rows) {
  const std::size_t n = rows.rows();
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (double v : rows.row(i)) s += v * v;
    norms[i] = std::sqrt(s);
    require(norms[i] > 0.0, ErrorKind::domain, "cosine similarity of a zero-norm row");
  }
  SimilarityResult out{Matrix(n, n), 0.0};
  std::vector<double> off;
  for (std::size_t i = 0; i < n; ++i) {
    out.similarity(i, i) = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      double dot = 0.0;
      for (std::size_t f = 0; f < rows.cols(); ++f) dot += rows(i, f) * rows(j, f);
      const double s = std::clamp(dot / (norms[i] * norms[j]), -1.0, 1.0);
      out.similarity(i, j) = out.similarity(j, i) = s;
      off.push_back(s);
    }
  }
  out.sigma = mean_std(off).second;
  return out;
}

}  // namespace entlens
