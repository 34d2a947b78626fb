#pragma once

// Checks that entropy changes track top-p candidate-set dynamics: the rank
// correlation between per-layer entropy deltas and candidate-count deltas,
// and the fraction of candidates adjacent layers share.

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "entlens/diagnostics.hpp"
#include "entlens/entropy.hpp"
#include "entlens/lens.hpp"
#include "entlens/parallel.hpp"
#include "entlens/tensor_store.hpp"

namespace entlens {

inline constexpr double kDefaultTopP = 0.6;

/// One (token, layer) observation; layer i compares profile entries i-1 and i.
struct TransitionRecord {
  std::size_t sample = 0;
  std::size_t token = 0;
  std::size_t layer = 0;
  double delta_entropy = 0.0;
  long delta_candidates = 0;
  double overlap = 0.0;
};

struct CandidateAnalysis {
  double p = kDefaultTopP;
  OverlapDenominator denominator = OverlapDenominator::min;
  std::vector<std::string> models;  // per sample
  std::vector<TransitionRecord> transitions;  // sample, token, layer order
};

/// Per-sample pass: Shannon entropies, top-p sets and overlaps at every layer.
inline std::vector<TransitionRecord> candidate_transitions(const Bundle& b, std::size_t sample, double p,
                                                           OverlapDenominator denom) {
  const LayerDistributions layers(b);
  std::vector<TransitionRecord> out;
  out.reserve(layers.tokens() * (layers.depth() - 1));
  for (std::size_t t = 0; t < layers.tokens(); ++t) {
    const auto dists = layers.at(t);
    std::vector<double> h(dists.size());
    std::vector<CandidateSet> sets;
    for (std::size_t i = 0; i < dists.size(); ++i) {
      h[i] = shannon_entropy(dists[i]);
      sets.push_back(top_p_set(dists[i], p));
    }
    const auto dh = delta_entropy(h);
    for (std::size_t i = 1; i < dists.size(); ++i) {
      out.push_back({sample, t, i, dh[i - 1],
                     static_cast<long>(sets[i].size()) - static_cast<long>(sets[i - 1].size()),
                     overlap_fraction(sets[i - 1], sets[i], denom)});
    }
  }
  return out;
}

inline CandidateAnalysis analyze_candidates(std::size_t count, const std::function<Bundle(std::size_t)>& load,
                                            double p = kDefaultTopP,
                                            OverlapDenominator denom = OverlapDenominator::min) {
  require(p > 0.0 && p <= 1.0, ErrorKind::usage, "top-p threshold must lie in (0, 1]");
  require(count > 0, ErrorKind::content, "no bundles to analyze");
  std::vector<std::vector<TransitionRecord>> parts(count);
  std::vector<std::string> models(count);
  parallel::for_each_index(count, [&](std::size_t i) {
    const Bundle b = load(i);
    models[i] = meta_or<std::string>(b, "model", "unknown");
    parts[i] = candidate_transitions(b, i, p, denom);
  });
  CandidateAnalysis out{p, denom, std::move(models), {}};
  for (auto& part : parts) out.transitions.insert(out.transitions.end(), part.begin(), part.end());
  return out;
}

inline CandidateAnalysis analyze_candidates(std::span<const Bundle> bundles, double p = kDefaultTopP,
                                            OverlapDenominator denom = OverlapDenominator::min) {
  return analyze_candidates(bundles.size(), [&](std::size_t i) { return bundles[i]; }, p, denom);
}

struct LayerCorrelation {
  std::size_t layer = 0;
  std::size_t n = 0;
  double mean_delta_entropy = 0.0;
  double mean_delta_candidates = 0.0;
  std::optional<double> spearman;
  double sign_agreement = 0.0;  // fraction with sign(dH) == sign(d|candidates|)
};

struct C1Report {
  std::optional<double> spearman;  // empty when undefined (constant inputs)
  std::string warning;
  std::size_t pairs = 0;
  std::vector<LayerCorrelation> per_layer;
};

namespace detail {
inline int sign(double v) { return (v > 0) - (v < 0); }

inline std::optional<double> try_spearman(std::span<const double> x, std::span<const double> y, std::string* why) {
  try {
    return spearman(x, y);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::undefined && e.kind() != ErrorKind::shape) throw;
    if (why != nullptr) *why = e.what();
    return std::nullopt;
  }
}
}  // namespace detail

/// Spearman correlation of pooled (dH, d|candidates|) pairs plus per-layer summaries.
inline C1Report correlate_entropy_candidates(const CandidateAnalysis& a) {
  C1Report rep;
  std::vector<double> dh, dc;
  std::map<std::size_t, std::pair<std::vector<double>, std::vector<double>>> by_layer;
  for (const auto& r : a.transitions) {
    dh.push_back(r.delta_entropy);
    dc.push_back(static_cast<double>(r.delta_candidates));
    by_layer[r.layer].first.push_back(r.delta_entropy);
    by_layer[r.layer].second.push_back(static_cast<double>(r.delta_candidates));
  }
  rep.pairs = dh.size();
  rep.spearman = detail::try_spearman(dh, dc, &rep.warning);
  for (const auto& [layer, xy] : by_layer) {
    LayerCorrelation lc;
    lc.layer = layer;
    lc.n = xy.first.size();
    std::size_t agree = 0;
    for (std::size_t i = 0; i < lc.n; ++i) {
      lc.mean_delta_entropy += xy.first[i];
      lc.mean_delta_candidates += xy.second[i];
      agree += detail::sign(xy.first[i]) == detail::sign(xy.second[i]);
    }
    lc.mean_delta_entropy /= static_cast<double>(lc.n);
    lc.mean_delta_candidates /= static_cast<double>(lc.n);
    lc.sign_agreement = static_cast<double>(agree) / static_cast<double>(lc.n);
    lc.spearman = detail::try_spearman(xy.first, xy.second, nullptr);
    rep.per_layer.push_back(lc);
  }
  return rep;
}

inline C1Report validate_c1(std::span<const Bundle> bundles, double p = kDefaultTopP) {
  return correlate_entropy_candidates(analyze_candidates(bundles, p));
}

struct OverlapCell {
  std::string model;  // "all" for the pooled row
  std::size_t layer = 0;
  double mean_overlap = 0.0;
  std::size_t count = 0;
};

/// Mean adjacent-layer overlap per (model, layer), followed by pooled "all" rows.
inline std::vector<OverlapCell> overlap_matrix(const CandidateAnalysis& a) {
  std::map<std::pair<std::string, std::size_t>, std::pair<double, std::size_t>> acc;
  for (const auto& r : a.transitions) {
    for (const std::string& key : {a.models[r.sample], std::string("all")}) {
      auto& cell = acc[{key, r.layer}];
      cell.first += r.overlap;
      cell.second += 1;
    }
  }
  std::vector<OverlapCell> out;
  for (const auto& [key, v] : acc)
    if (key.first != "all") out.push_back({key.first, key.second, v.first / static_cast<double>(v.second), v.second});
  for (const auto& [key, v] : acc)
    if (key.first == "all") out.push_back({key.first, key.second, v.first / static_cast<double>(v.second), v.second});
  return out;
}

inline std::vector<OverlapCell> validate_c2(std::span<const Bundle> bundles, double p = kDefaultTopP,
                                            OverlapDenominator denom = OverlapDenominator::min) {
  return overlap_matrix(analyze_candidates(bundles, p, denom));
}

}  // namespace entlens
