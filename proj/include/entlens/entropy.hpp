#pragma once

// Information-theoretic kernels over categorical next-token distributions.
// All entropies are in nats and accumulated in double precision in ascending
// vocabulary order, so results are bit-reproducible.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "entlens/error.hpp"
#include "entlens/matrix.hpp"

namespace entlens {

/// Offset inside the logarithm of the Shannon and NLL kernels.
inline constexpr double kLogEpsilon = 1e-15;
/// Maximum |sum - 1| accepted (and renormalized) when building a Distribution.
inline constexpr double kSumTolerance = 1e-3;
/// Orders within this distance of 1 are evaluated as Shannon entropy.
inline constexpr double kRenyiShannonBand = 1e-6;
/// Slack on cumulative top-p mass comparisons, absorbs renormalization rounding.
inline constexpr double kTopPSlack = 1e-12;

/// Probability vector over a vocabulary. Construction validates and
/// renormalizes to unit mass.
class Distribution {
 public:
  template <typename T>
  explicit Distribution(std::span<const T> probs) : probs_(probs.begin(), probs.end()) {
    normalize();
  }
  explicit Distribution(std::vector<double> probs) : probs_(std::move(probs)) { normalize(); }
  Distribution(std::initializer_list<double> probs) : probs_(probs) { normalize(); }

  static Distribution uniform(std::size_t vocab) { return Distribution(std::vector<double>(vocab, 1.0 / static_cast<double>(vocab))); }

  /// Max-subtracted softmax in double precision.
  template <typename T>
  static Distribution from_logits(std::span<const T> logits) {
    require(!logits.empty(), ErrorKind::shape, "softmax of an empty logit vector");
    double peak = -INFINITY;
    for (T v : logits) {
      require(std::isfinite(static_cast<double>(v)), ErrorKind::data, "non-finite logit");
      peak = std::max(peak, static_cast<double>(v));
    }
    std::vector<double> p(logits.size());
    double total = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] = std::exp(static_cast<double>(logits[i]) - peak);
      total += p[i];
    }
    for (auto& v : p) v /= total;
    return Distribution(std::move(p));
  }

  std::size_t size() const noexcept { return probs_.size(); }
  double operator[](std::size_t i) const noexcept { return probs_[i]; }
  std::span<const double> probs() const noexcept { return probs_; }

 private:
  void normalize() {
    require(!probs_.empty(), ErrorKind::shape, "distribution over an empty vocabulary");
    double total = 0.0;
    for (double v : probs_) {
      require(std::isfinite(v), ErrorKind::data, "non-finite probability");
      require(v >= 0.0, ErrorKind::data, "negative probability");
      total += v;
    }
    if (!(std::abs(total - 1.0) <= kSumTolerance))
      fail(ErrorKind::data, "probabilities sum to " + std::to_string(total) + ", outside tolerance");
    if (total != 1.0)
      for (auto& v : probs_) v /= total;
  }

  std::vector<double> probs_;
};

inline double shannon_entropy(std::span<const double> probs) {
  double h = 0.0;
  for (double p : probs) h -= p * std::log(p + kLogEpsilon);
  // ln(1 + eps) makes a delta distribution come out at -1e-15; entropy is non-negative.
  return std::max(h, 0.0);
}

inline double shannon_entropy(const Distribution& d) { return shannon_entropy(d.probs()); }

inline double renyi_entropy(const Distribution& d, double alpha) {
  require(alpha > 0.0 && std::isfinite(alpha), ErrorKind::domain, "Renyi order must be positive and finite");
  if (std::abs(alpha - 1.0) < kRenyiShannonBand) return shannon_entropy(d);
  double total = 0.0;
  if (alpha == 2.0) {
    for (double p : d.probs()) total += p * p;
  } else {
    for (double p : d.probs()) total += std::pow(p, alpha);
  }
  return std::max(std::log(total) / (1.0 - alpha), 0.0);
}

/// Which entropy functional a profile is built from.
struct EntropyKind {
  enum class Family { shannon, renyi };
  Family family = Family::shannon;
  double alpha = 1.0;

  static EntropyKind shannon() { return {}; }
  static EntropyKind renyi(double alpha) {
    require(alpha > 0.0 && std::isfinite(alpha), ErrorKind::domain, "Renyi order must be positive and finite");
    return {Family::renyi, alpha};
  }

  std::string label() const;

  friend bool operator==(const EntropyKind&, const EntropyKind&) = default;
};

inline double entropy(const Distribution& d, const EntropyKind& kind) {
  return kind.family == EntropyKind::Family::shannon ? shannon_entropy(d) : renyi_entropy(d, kind.alpha);
}

/// Nucleus (top-p) token set, token ids kept in ascending order.
struct CandidateSet {
  std::vector<std::size_t> token_ids;
  double p = 0.6;

  std::size_t size() const noexcept { return token_ids.size(); }
  bool contains(std::size_t id) const { return std::binary_search(token_ids.begin(), token_ids.end(), id); }
};

/// Smallest probability-descending prefix (ties by ascending id) with mass >= p.
inline CandidateSet top_p_set(const Distribution& d, double p) {
  require(p > 0.0 && p <= 1.0, ErrorKind::domain, "top-p threshold must lie in (0, 1]");
  const auto probs = d.probs();
  std::vector<std::size_t> order(probs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto before = [&](std::size_t a, std::size_t b) { return probs[a] > probs[b] || (probs[a] == probs[b] && a < b); };

  // Nuclei are usually tiny compared to the vocabulary; sort a growing head only.
  std::size_t head = std::min<std::size_t>(64, order.size());
  while (true) {
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(head), order.end(), before);
    double mass = 0.0;
    for (std::size_t k = 0; k < head; ++k) {
      mass += probs[order[k]];
      if (mass >= p - kTopPSlack || k + 1 == order.size()) {
        CandidateSet out{{order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k + 1)}, p};
        std::sort(out.token_ids.begin(), out.token_ids.end());
        return out;
      }
    }
    head = std::min(order.size(), head * 4);
  }
}

/// Layer-over-layer differences: out[i-1] = profile[i] - profile[i-1].
inline std::vector<double> delta_entropy(std::span<const double> profile) {
  require(profile.size() >= 2, ErrorKind::shape, "entropy profile needs at least two layers");
  std::vector<double> out(profile.size() - 1);
  for (std::size_t i = 1; i < profile.size(); ++i) out[i - 1] = profile[i] - profile[i - 1];
  return out;
}

enum class OverlapDenominator { min, union_, predecessor };

/// Shared-candidate fraction |a & b| / denominator. `a` is the earlier layer.
inline double overlap_fraction(const CandidateSet& a, const CandidateSet& b,
                               OverlapDenominator denom = OverlapDenominator::min) {
  require(a.p == b.p, ErrorKind::usage, "candidate sets built with different p");
  std::size_t shared = 0;
  for (auto ia = a.token_ids.begin(), ib = b.token_ids.begin(); ia != a.token_ids.end() && ib != b.token_ids.end();) {
    if (*ia < *ib) {
      ++ia;
    } else if (*ib < *ia) {
      ++ib;
    } else {
      ++shared, ++ia, ++ib;
    }
  }
  std::size_t d = 0;
  switch (denom) {
    case OverlapDenominator::min: d = std::min(a.size(), b.size()); break;
    case OverlapDenominator::union_: d = a.size() + b.size() - shared; break;
    case OverlapDenominator::predecessor: d = a.size(); break;
  }
  return d == 0 ? 0.0 : static_cast<double>(shared) / static_cast<double>(d);
}

inline std::vector<long> candidate_count_delta(std::span<const Distribution> dists, double p) {
  require(dists.size() >= 2, ErrorKind::shape, "candidate deltas need at least two layers");
  std::vector<long> counts(dists.size());
  for (std::size_t i = 0; i < dists.size(); ++i) {
    require(dists[i].size() == dists[0].size(), ErrorKind::shape, "layers disagree on vocabulary size");
    counts[i] = static_cast<long>(top_p_set(dists[i], p).size());
  }
  std::vector<long> out(dists.size() - 1);
  for (std::size_t i = 1; i < counts.size(); ++i) out[i - 1] = counts[i] - counts[i - 1];
  return out;
}

/// Per-layer surprisal of the realized next token, -ln(p + eps), shape [T, L+1].
inline Matrix nll_profile(std::span<const std::vector<Distribution>> dists, std::span<const std::size_t> actual_next) {
  require(dists.size() == actual_next.size(), ErrorKind::shape, "one realized token per position required");
  if (dists.empty()) return {};
  const std::size_t depth = dists[0].size();
  Matrix out(dists.size(), depth);
  for (std::size_t t = 0; t < dists.size(); ++t) {
    require(dists[t].size() == depth, ErrorKind::shape, "positions disagree on depth");
    for (std::size_t i = 0; i < depth; ++i) {
      const auto& d = dists[t][i];
      require(actual_next[t] < d.size(), ErrorKind::index, "token id " + std::to_string(actual_next[t]) + " out of range");
      out(t, i) = std::max(-std::log(d[actual_next[t]] + kLogEpsilon), 0.0);
    }
  }
  return out;
}

/// Column means of an NLL profile: per-layer conditional entropy estimates.
inline std::vector<double> nll_layer_means(const Matrix& nll) {
  std::vector<double> out(nll.cols(), 0.0);
  for (std::size_t r = 0; r < nll.rows(); ++r)
    for (std::size_t c = 0; c < nll.cols(); ++c) out[c] += nll(r, c);
  for (auto& v : out) v /= static_cast<double>(std::max<std::size_t>(1, nll.rows()));
  return out;
}

}  // namespace entlens

#include "entlens/format.hpp"

inline std::string entlens::EntropyKind::label() const {
  return family == Family::shannon ? std::string("shannon") : "renyi(" + format_double(alpha) + ")";
}
