#pragma once

// Fixed-length feature vectors from entropy profiles: aggregation over
// tokens, depth resampling, standardization and dataset assembly.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "entlens/entropy.hpp"
#include "entlens/error.hpp"
#include "entlens/format.hpp"
#include "entlens/lens.hpp"
#include "entlens/matrix.hpp"
#include "entlens/parallel.hpp"
#include "entlens/tensor_store.hpp"

namespace entlens {

/// Token windows used by the windowed aggregation preset.
inline constexpr std::size_t kWindowCount = 8;
inline constexpr double kDegenerateStd = 1e-12;

enum class Aggregation { concat, mean, windowed };

inline const char* to_string(Aggregation a) {
  switch (a) {
    case Aggregation::concat: return "concat";
    case Aggregation::mean: return "mean";
    case Aggregation::windowed: return "windowed";
  }
  return "?";
}

inline Aggregation parse_aggregation(const std::string& s) {
  if (s == "concat") return Aggregation::concat;
  if (s == "mean") return Aggregation::mean;
  if (s == "windowed") return Aggregation::windowed;
  fail(ErrorKind::usage, "unknown aggregation '" + s + "'");
}

/// Flattens a [T, L+1] profile. concat: row-major, T*(L+1) values. mean:
/// per-layer token mean, L+1 values. windowed: per-layer means over 8
/// equal token windows, 8*(L+1) values.
inline std::vector<double> aggregate(const EntropyProfile& p, Aggregation mode) {
  const std::size_t T = p.tokens(), D = p.depth();
  switch (mode) {
    case Aggregation::concat: {
      const auto flat = p.values.data();
      return {flat.begin(), flat.end()};
    }
    case Aggregation::mean: {
      require(T > 0, ErrorKind::shape, "mean aggregation of an empty profile");
      std::vector<double> out(D, 0.0);
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t i = 0; i < D; ++i) out[i] += p.values(t, i);
      for (auto& v : out) v /= static_cast<double>(T);
      return out;
    }
    case Aggregation::windowed: {
      require(T >= kWindowCount, ErrorKind::shape, "windowed aggregation needs at least 8 tokens");
      std::vector<double> out(kWindowCount * D, 0.0);
      for (std::size_t w = 0; w < kWindowCount; ++w) {
        const std::size_t lo = w * T / kWindowCount, hi = (w + 1) * T / kWindowCount;
        for (std::size_t t = lo; t < hi; ++t)
          for (std::size_t i = 0; i < D; ++i) out[w * D + i] += p.values(t, i);
        for (std::size_t i = 0; i < D; ++i) out[w * D + i] /= static_cast<double>(hi - lo);
      }
      return out;
    }
  }
  return {};
}

/// Linear interpolation onto `target` evenly spaced relative positions.
inline std::vector<double> resample_linear(std::span<const double> profile, std::size_t target) {
  require(profile.size() >= 2, ErrorKind::shape, "resampling needs at least two source points");
  require(target >= 2, ErrorKind::shape, "resampling target must be at least 2");
  if (target == profile.size()) return {profile.begin(), profile.end()};
  const std::size_t last = profile.size() - 1;
  std::vector<double> out(target);
  for (std::size_t k = 0; k < target; ++k) {
    const double x = static_cast<double>(k * last) / static_cast<double>(target - 1);
    const std::size_t i0 = std::min(static_cast<std::size_t>(x), last - 1);
    const double frac = x - static_cast<double>(i0);
    const double a = profile[i0], b = profile[i0 + 1];
    const double v = a * (1.0 - frac) + b * frac;
    out[k] = std::clamp(v, std::min(a, b), std::max(a, b));
  }
  return out;
}

/// Resamples the layer axis of every token row.
inline EntropyProfile resample_profile(const EntropyProfile& p, std::size_t target) {
  EntropyProfile out{Matrix(p.tokens(), target), p.token_ids, p.metadata};
  for (std::size_t t = 0; t < p.tokens(); ++t) {
    const auto row = resample_linear(p.values.row(t), target);
    std::copy(row.begin(), row.end(), out.values.row(t).begin());
  }
  return out;
}

/// Column statistics fitted on one matrix and applied to others (fold-safe).
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;  // population std; 0 marks a degenerate column

  static Standardizer fit(const Matrix& x) {
    require(x.rows() >= 2, ErrorKind::shape, "standardization needs at least two samples");
    Standardizer s{std::vector<double>(x.cols(), 0.0), std::vector<double>(x.cols(), 0.0)};
    const double n = static_cast<double>(x.rows());
    for (std::size_t r = 0; r < x.rows(); ++r)
      for (std::size_t c = 0; c < x.cols(); ++c) s.mean[c] += x(r, c);
    for (auto& m : s.mean) m /= n;
    for (std::size_t r = 0; r < x.rows(); ++r)
      for (std::size_t c = 0; c < x.cols(); ++c) s.scale[c] += (x(r, c) - s.mean[c]) * (x(r, c) - s.mean[c]);
    for (auto& v : s.scale) {
      v = std::sqrt(v / n);
      if (v < kDegenerateStd) v = 0.0;
    }
    return s;
  }

  Matrix apply(const Matrix& x) const {
    require(x.cols() == mean.size(), ErrorKind::shape, "feature width does not match the fitted standardizer");
    Matrix out(x.rows(), x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r)
      for (std::size_t c = 0; c < x.cols(); ++c) out(r, c) = scale[c] == 0.0 ? 0.0 : (x(r, c) - mean[c]) / scale[c];
    return out;
  }
};

inline Matrix standardize(const Matrix& x) { return Standardizer::fit(x).apply(x); }

/// Feature matrix with categorical labels; the classifier input.
struct ProfileDataset {
  Matrix features;                  // [N, F]
  std::vector<std::size_t> labels;  // indices into label_names
  std::vector<std::string> label_names;
  std::vector<json> provenance;
  std::size_t depth = 0;            // layer positions per token block of a row; 0 when unknown
  Aggregation aggregation = Aggregation::concat;
  std::string entropy = "shannon";

  std::size_t size() const noexcept { return features.rows(); }
  std::size_t classes() const noexcept { return label_names.size(); }

  void validate() const {
    require(labels.size() == features.rows(), ErrorKind::validation, "one label per sample required");
    for (auto l : labels) require(l < label_names.size(), ErrorKind::validation, "label index out of range");
    for (double v : features.data()) require(std::isfinite(v), ErrorKind::data, "non-finite feature value");
  }
};

struct AssembleOptions {
  EntropyKind entropy = EntropyKind::shannon();
  Aggregation aggregation = Aggregation::concat;
  std::optional<std::size_t> target_depth;
  bool standardize = false;
};

namespace detail {

inline std::string label_of(const Bundle& b) {
  require(b.metadata.contains("label"), ErrorKind::content, "bundle metadata has no 'label'");
  const auto& l = b.metadata["label"];
  return l.is_string() ? l.get<std::string>() : l.dump();
}

inline json provenance_of(const Bundle& b) {
  json p = json::object();
  for (const char* key : {"model", "prompt_id", "template", "question_id"})
    if (b.metadata.contains(key)) p[key] = b.metadata[key];
  return p;
}

}  // namespace detail

/// Builds a dataset from `count` bundles produced on demand by `load(i)`.
/// Rows keep input order; label names are sorted lexicographically.
inline ProfileDataset assemble(std::size_t count, const std::function<Bundle(std::size_t)>& load, const AssembleOptions& opt) {
  require(count > 0, ErrorKind::content, "cannot assemble an empty dataset");
  std::vector<std::vector<double>> rows(count);
  std::vector<std::string> names(count);
  std::vector<json> prov(count);
  std::vector<std::size_t> depths(count);
  parallel::for_each_index(count, [&](std::size_t i) {
    const Bundle b = load(i);
    names[i] = detail::label_of(b);
    prov[i] = detail::provenance_of(b);
    auto profile = profile_from_bundle(b, opt.entropy);
    if (opt.target_depth) profile = resample_profile(profile, *opt.target_depth);
    depths[i] = profile.depth();
    rows[i] = aggregate(profile, opt.aggregation);
  });

  ProfileDataset ds;
  const std::size_t width = rows[0].size();
  for (std::size_t i = 0; i < count; ++i) {
    require(rows[i].size() == width, ErrorKind::shape,
            "sample " + std::to_string(i) + " has " + std::to_string(rows[i].size()) + " features, expected " +
                std::to_string(width) + " (set a target depth, or match token counts)");
  }
  ds.depth = std::all_of(depths.begin(), depths.end(), [&](auto d) { return d == depths[0]; }) ? depths[0] : 0;
  ds.features = Matrix(count, width);
  for (std::size_t i = 0; i < count; ++i) std::copy(rows[i].begin(), rows[i].end(), ds.features.row(i).begin());
  ds.label_names = names;
  std::sort(ds.label_names.begin(), ds.label_names.end());
  ds.label_names.erase(std::unique(ds.label_names.begin(), ds.label_names.end()), ds.label_names.end());
  for (const auto& n : names)
    ds.labels.push_back(static_cast<std::size_t>(std::lower_bound(ds.label_names.begin(), ds.label_names.end(), n) -
                                                 ds.label_names.begin()));
  ds.provenance = std::move(prov);
  ds.aggregation = opt.aggregation;
  ds.entropy = opt.entropy.label();
  if (opt.standardize) ds.features = standardize(ds.features);
  ds.validate();
  return ds;
}

inline ProfileDataset assemble(std::span<const Bundle> bundles, const AssembleOptions& opt) {
  return assemble(bundles.size(), [&](std::size_t i) { return bundles[i]; }, opt);
}

inline ProfileDataset assemble(std::span<const std::filesystem::path> paths, const AssembleOptions& opt) {
  return assemble(paths.size(), [&](std::size_t i) { return load_bundle(paths[i]); }, opt);
}

inline Bundle dataset_to_bundle(const ProfileDataset& ds) {
  ds.validate();
  Bundle b;
  json labels = json::array();
  for (auto l : ds.labels) labels.push_back(ds.label_names[l]);
  b.metadata = json{{"kind", "profile_dataset"},
                    {"label_names", ds.label_names},
                    {"labels", labels},
                    {"provenance", ds.provenance},
                    {"depth", ds.depth},
                    {"aggregate", to_string(ds.aggregation)},
                    {"entropy", ds.entropy}};
  b.add_tensor("features", {ds.features.rows(), ds.features.cols()}, ds.features.data());
  return b;
}

inline ProfileDataset dataset_from_bundle(const Bundle& b) {
  require(b.has("features"), ErrorKind::content, "bundle is not a profile dataset (no 'features' tensor)");
  const auto& e = b.entry("features");
  require(e.shape.size() == 2, ErrorKind::shape, "features must be a matrix");
  ProfileDataset ds;
  const auto raw = b.tensor_f32("features");
  ds.features = Matrix(e.shape[0], e.shape[1], std::vector<double>(raw.begin(), raw.end()));
  try {
    ds.label_names = b.metadata.at("label_names").get<std::vector<std::string>>();
    for (const auto& l : b.metadata.at("labels")) {
      auto it = std::find(ds.label_names.begin(), ds.label_names.end(), l.get<std::string>());
      require(it != ds.label_names.end(), ErrorKind::content, "label not listed in label_names");
      ds.labels.push_back(static_cast<std::size_t>(it - ds.label_names.begin()));
    }
    if (b.metadata.contains("provenance")) ds.provenance = b.metadata["provenance"].get<std::vector<json>>();
  } catch (const json::exception& ex) {
    fail(ErrorKind::content, std::string("malformed dataset metadata: ") + ex.what());
  }
  ds.depth = meta_or<std::size_t>(b, "depth", 0);
  ds.aggregation = parse_aggregation(meta_or<std::string>(b, "aggregate", "concat"));
  ds.entropy = meta_or<std::string>(b, "entropy", "shannon");
  ds.validate();
  return ds;
}

/// CSV with header f0..f{F-1},label.
inline std::string dataset_to_csv(const ProfileDataset& ds) {
  std::ostringstream out;
  for (std::size_t c = 0; c < ds.features.cols(); ++c) out << 'f' << c << ',';
  out << "label\n";
  for (std::size_t r = 0; r < ds.size(); ++r) {
    for (double v : ds.features.row(r)) out << format_double(v) << ',';
    out << csv_field(ds.label_names[ds.labels[r]]) << '\n';
  }
  return out.str();
}

/// Keeps only the feature columns whose layer index (column mod depth) is listed.
inline ProfileDataset filter_layers(const ProfileDataset& ds, std::span<const std::size_t> layers) {
  require(ds.depth > 0, ErrorKind::content, "dataset does not record its layer depth");
  require(ds.features.cols() % ds.depth == 0, ErrorKind::shape, "feature width is not a multiple of the depth");
  std::vector<std::size_t> keep;
  for (std::size_t c = 0; c < ds.features.cols(); ++c)
    if (std::find(layers.begin(), layers.end(), c % ds.depth) != layers.end()) keep.push_back(c);
  require(!keep.empty(), ErrorKind::usage, "layer selection keeps no feature columns");
  ProfileDataset out = ds;
  out.features = Matrix(ds.size(), keep.size());
  for (std::size_t r = 0; r < ds.size(); ++r)
    for (std::size_t k = 0; k < keep.size(); ++k) out.features(r, k) = ds.features(r, keep[k]);
  out.depth = 0;
  return out;
}

}  // namespace entlens
