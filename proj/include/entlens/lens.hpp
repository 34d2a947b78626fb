#pragma once

// Logit-lens: decode residual-stream states through the (final norm +)
// unembedding into next-token distributions, then into entropy profiles.

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "entlens/entropy.hpp"
#include "entlens/error.hpp"
#include "entlens/matrix.hpp"
#include "entlens/parallel.hpp"
#include "entlens/tensor_store.hpp"

namespace entlens {

inline constexpr double kLayerNormEpsilon = 1e-5;
inline constexpr double kRmsNormEpsilon = 1e-6;

enum class NormKind { layernorm, rmsnorm };

inline NormKind parse_norm_kind(const std::string& s) {
  if (s == "layernorm") return NormKind::layernorm;
  if (s == "rmsnorm") return NormKind::rmsnorm;
  fail(ErrorKind::content, "unknown norm_kind '" + s + "'");
}

inline const char* to_string(NormKind k) { return k == NormKind::layernorm ? "layernorm" : "rmsnorm"; }

struct LensConfig {
  bool apply_final_norm = false;
  NormKind norm_kind = NormKind::layernorm;
  std::vector<double> norm_gamma;
  std::vector<double> norm_beta;
  Matrix decoder;  // [V, d]: logits = decoder * x

  std::size_t vocab() const noexcept { return decoder.rows(); }
  std::size_t model_dim() const noexcept { return decoder.cols(); }

  void validate() const {
    require(decoder.rows() > 0 && decoder.cols() > 0, ErrorKind::shape, "lens decoder is empty");
    if (!apply_final_norm) return;
    require(norm_gamma.size() == model_dim(), ErrorKind::shape, "norm gamma length must equal the model dimension");
    require(norm_beta.empty() || norm_beta.size() == model_dim(), ErrorKind::shape,
            "norm beta length must equal the model dimension");
  }
};

inline void layer_norm(std::span<const double> x, std::span<const double> gamma, std::span<const double> beta,
                       std::span<double> out) {
  const double n = static_cast<double>(x.size());
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= n;
  const double inv = 1.0 / std::sqrt(var + kLayerNormEpsilon);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - mean) * inv * gamma[i] + (beta.empty() ? 0.0 : beta[i]);
}

inline void rms_norm(std::span<const double> x, std::span<const double> gamma, std::span<double> out) {
  double ms = 0.0;
  for (double v : x) ms += v * v;
  ms /= static_cast<double>(x.size());
  const double inv = 1.0 / std::sqrt(ms + kRmsNormEpsilon);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * inv * gamma[i];
}

/// Pre-softmax lens logits for one residual state.
inline std::vector<double> lens_logits(std::span<const double> x, const LensConfig& cfg) {
  require(x.size() == cfg.model_dim(), ErrorKind::shape,
          "activation width " + std::to_string(x.size()) + " does not match decoder width " + std::to_string(cfg.model_dim()));
  std::vector<double> normed(x.begin(), x.end());
  if (cfg.apply_final_norm) {
    if (cfg.norm_kind == NormKind::layernorm)
      layer_norm(x, cfg.norm_gamma, cfg.norm_beta, normed);
    else
      rms_norm(x, cfg.norm_gamma, normed);
  }
  std::vector<double> logits(cfg.vocab());
  for (std::size_t v = 0; v < logits.size(); ++v) {
    const auto w = cfg.decoder.row(v);
    double acc = 0.0;
    for (std::size_t k = 0; k < normed.size(); ++k) acc += w[k] * normed[k];
    logits[v] = acc;
  }
  return logits;
}

inline Distribution decode(std::span<const double> x, const LensConfig& cfg) {
  const auto logits = lens_logits(x, cfg);
  return Distribution::from_logits(std::span<const double>(logits));
}

/// Projects the L+1 residual states of one token position, hidden is [L+1, d].
inline std::vector<Distribution> project(const Matrix& hidden, const LensConfig& cfg) {
  cfg.validate();
  require(hidden.cols() == cfg.model_dim(), ErrorKind::shape, "hidden width does not match decoder width");
  std::vector<Distribution> out;
  out.reserve(hidden.rows());
  for (std::size_t i = 0; i < hidden.rows(); ++i) out.push_back(decode(hidden.row(i), cfg));
  return out;
}

/// Builds the lens from a bundle's `decoder` and optional `ln_gamma`/`ln_beta`.
inline LensConfig lens_config_from_bundle(const Bundle& b) {
  const auto& dec = b.entry("decoder");
  const auto raw = b.tensor_f32("decoder");
  LensConfig cfg;
  cfg.decoder = Matrix(dec.shape.at(0), dec.shape.at(1), std::vector<double>(raw.begin(), raw.end()));
  if (b.has("ln_gamma")) {
    cfg.apply_final_norm = true;
    cfg.norm_kind = parse_norm_kind(meta_or<std::string>(b, "norm_kind", "layernorm"));
    const auto g = b.tensor_f32("ln_gamma");
    cfg.norm_gamma.assign(g.begin(), g.end());
    if (b.has("ln_beta") && cfg.norm_kind == NormKind::layernorm) {
      const auto beta = b.tensor_f32("ln_beta");
      cfg.norm_beta.assign(beta.begin(), beta.end());
    }
  }
  cfg.validate();
  return cfg;
}

/// Per-position access to the L+1 layer distributions a bundle encodes,
/// whichever representation it carries (distributions > logits > hidden).
class LayerDistributions {
 public:
  enum class Source { distributions, logits, hidden };

  explicit LayerDistributions(const Bundle& b) {
    const char* name = nullptr;
    if (b.has("distributions")) {
      source_ = Source::distributions, name = "distributions";
    } else if (b.has("logits")) {
      source_ = Source::logits, name = "logits";
    } else if (b.has("hidden") && b.has("decoder")) {
      source_ = Source::hidden, name = "hidden";
      lens_ = lens_config_from_bundle(b);
    } else {
      fail(ErrorKind::content, "bundle carries none of distributions, logits, or hidden+decoder");
    }
    const auto& e = b.entry(name);
    tokens_ = e.shape.at(0);
    depth_ = e.shape.at(1);
    width_ = e.shape.at(2);
    require(depth_ >= 2, ErrorKind::shape, "profiles need at least two layer positions (L+1 >= 2)");
    data_ = b.tensor_f32(name);
  }

  Source source() const noexcept { return source_; }
  std::size_t tokens() const noexcept { return tokens_; }
  std::size_t depth() const noexcept { return depth_; }
  std::size_t vocab() const noexcept { return source_ == Source::hidden ? lens_.vocab() : width_; }

  std::vector<Distribution> at(std::size_t token) const {
    require(token < tokens_, ErrorKind::index, "token position out of range");
    std::vector<Distribution> out;
    out.reserve(depth_);
    for (std::size_t i = 0; i < depth_; ++i) {
      std::span<const float> row(data_.data() + (token * depth_ + i) * width_, width_);
      switch (source_) {
        case Source::distributions: out.emplace_back(row); break;
        case Source::logits: out.push_back(Distribution::from_logits(row)); break;
        case Source::hidden: {
          std::vector<double> x(row.begin(), row.end());
          out.push_back(decode(x, lens_));
          break;
        }
      }
    }
    return out;
  }

 private:
  Source source_ = Source::distributions;
  std::size_t tokens_ = 0, depth_ = 0, width_ = 0;
  std::vector<float> data_;
  LensConfig lens_;
};

/// Per-token sequence of per-layer entropies, values is [T, L+1].
struct EntropyProfile {
  Matrix values;
  std::vector<std::size_t> token_ids;
  json metadata = json::object();

  std::size_t tokens() const noexcept { return values.rows(); }
  std::size_t depth() const noexcept { return values.cols(); }
};

inline EntropyProfile profile_from_bundle(const Bundle& b, const EntropyKind& kind = EntropyKind::shannon()) {
  const LayerDistributions layers(b);
  EntropyProfile p;
  p.values = Matrix(layers.tokens(), layers.depth());
  parallel::for_each_index(layers.tokens(), [&](std::size_t t) {
    const auto dists = layers.at(t);
    for (std::size_t i = 0; i < dists.size(); ++i) p.values(t, i) = entropy(dists[i], kind);
  });
  if (b.has("next_tokens")) {
    for (float v : b.tensor_f32("next_tokens")) p.token_ids.push_back(static_cast<std::size_t>(v));
  }
  p.metadata = b.metadata;
  return p;
}

}  // namespace entlens
