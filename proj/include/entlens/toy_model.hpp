#pragma once

// A tiny deterministic decoder-only transformer used as a desk-scale fixture.
//
// Pre-norm blocks (LayerNorm -> causal multi-head attention -> residual add,
// LayerNorm -> GELU MLP -> residual add), sinusoidal positions, a final
// LayerNorm and a decoder tied to the embedding. Every block can be skipped,
// in which case the residual stream passes through it unchanged.
//
// Weights come from Xoshiro256 seeded with the config seed, drawn in a fixed
// order: embedding [V, d], then per block ln1 (gamma, beta), Wq, Wk, Wv, Wo,
// ln2 (gamma, beta), W1, b1, W2, b2, then the final norm (gamma, beta).
// Matrices and biases are uniform(-0.08, 0.08); norm gains are 1 + that.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "entlens/entropy.hpp"
#include "entlens/error.hpp"
#include "entlens/lens.hpp"
#include "entlens/matrix.hpp"
#include "entlens/rng.hpp"
#include "entlens/tensor_store.hpp"

namespace entlens {

inline constexpr double kToyInitScale = 0.08;

struct ToyConfig {
  std::size_t vocab = 64;
  std::size_t dim = 32;
  std::size_t blocks = 4;
  std::size_t heads = 2;
  std::size_t mlp_hidden = 64;
  std::uint64_t seed = 0;

  void validate() const {
    require(vocab > 0 && dim > 0 && blocks > 0 && heads > 0 && mlp_hidden > 0, ErrorKind::config,
            "toy model dimensions must be positive");
    require(dim % heads == 0, ErrorKind::config, "model dimension must be divisible by the head count");
  }
};

struct ForwardResult {
  std::vector<Matrix> hidden;              // per position, [L+1, d]
  std::vector<std::vector<double>> logits; // per position, [V]
  std::vector<Distribution> outputs;       // per position
};

struct DecodeMode {
  bool sampled = false;
  std::uint64_t seed = 0;

  static DecodeMode greedy() { return {}; }
  static DecodeMode sample(std::uint64_t seed) { return {true, seed}; }
};

struct GenerateResult {
  std::vector<std::size_t> tokens;       // generated ids
  std::vector<Distribution> step_outputs; // distribution each token was drawn from
  Bundle bundle;
};

inline double gelu(double x) {
  constexpr double kSqrt2OverPi = 0.7978845608028654;
  return 0.5 * x * (1.0 + std::tanh(kSqrt2OverPi * (x + 0.044715 * x * x * x)));
}

class ToyModel {
 public:
  struct Block {
    std::vector<double> ln1_gamma, ln1_beta, ln2_gamma, ln2_beta;
    Matrix wq, wk, wv, wo;  // [d, d], y = x W
    Matrix w1;              // [d, mlp]
    std::vector<double> b1;
    Matrix w2;              // [mlp, d]
    std::vector<double> b2;
  };

  explicit ToyModel(ToyConfig cfg) : cfg_(cfg) {
    cfg_.validate();
    Xoshiro256 rng(cfg_.seed);
    auto mat = [&](std::size_t r, std::size_t c) {
      Matrix m(r, c);
      for (auto& v : m.data()) v = rng.uniform(-kToyInitScale, kToyInitScale);
      return m;
    };
    auto vec = [&](std::size_t n, double offset) {
      std::vector<double> v(n);
      for (auto& x : v) x = offset + rng.uniform(-kToyInitScale, kToyInitScale);
      return v;
    };
    const std::size_t d = cfg_.dim;
    embedding_ = mat(cfg_.vocab, d);
    for (std::size_t l = 0; l < cfg_.blocks; ++l) {
      Block b;
      b.ln1_gamma = vec(d, 1.0);
      b.ln1_beta = vec(d, 0.0);
      b.wq = mat(d, d);
      b.wk = mat(d, d);
      b.wv = mat(d, d);
      b.wo = mat(d, d);
      b.ln2_gamma = vec(d, 1.0);
      b.ln2_beta = vec(d, 0.0);
      b.w1 = mat(d, cfg_.mlp_hidden);
      b.b1 = vec(cfg_.mlp_hidden, 0.0);
      b.w2 = mat(cfg_.mlp_hidden, d);
      b.b2 = vec(d, 0.0);
      blocks_.push_back(std::move(b));
    }
    head_.apply_final_norm = true;
    head_.norm_kind = NormKind::layernorm;
    head_.norm_gamma = vec(d, 1.0);
    head_.norm_beta = vec(d, 0.0);
    head_.decoder = embedding_;  // tied: logits = E * norm(x)
  }

  const ToyConfig& config() const noexcept { return cfg_; }
  const Matrix& embedding() const noexcept { return embedding_; }
  /// The output head as a lens configuration; the logit-lens shares it.
  const LensConfig& head() const noexcept { return head_; }
  const std::vector<Block>& blocks() const noexcept { return blocks_; }

  ForwardResult forward(std::span<const std::size_t> ids, const std::set<std::size_t>& skip = {}) const {
    const std::size_t n = ids.size(), d = cfg_.dim, L = cfg_.blocks;
    for (auto id : ids) require(id < cfg_.vocab, ErrorKind::index, "token id " + std::to_string(id) + " out of range");
    for (auto s : skip) require(s < L, ErrorKind::index, "skip block " + std::to_string(s) + " out of range");

    ForwardResult out;
    out.hidden.assign(n, Matrix(L + 1, d));
    Matrix h(n, d);
    for (std::size_t t = 0; t < n; ++t) {
      for (std::size_t k = 0; k < d; ++k) h(t, k) = embedding_(ids[t], k) + positional(t, k);
    }
    record(out, h, 0);
    for (std::size_t l = 0; l < L; ++l) {
      if (!skip.contains(l)) apply_block(blocks_[l], h);
      record(out, h, l + 1);
    }
    for (std::size_t t = 0; t < n; ++t) {
      out.logits.push_back(lens_logits(h.row(t), head_));
      out.outputs.push_back(Distribution::from_logits(std::span<const double>(out.logits.back())));
    }
    return out;
  }

  GenerateResult generate(std::span<const std::size_t> prompt, std::size_t steps, DecodeMode mode = DecodeMode::greedy(),
                          bool with_distributions = false) const {
    require(!prompt.empty(), ErrorKind::usage, "generation needs a non-empty prompt");
    require(steps >= 1, ErrorKind::usage, "generation needs at least one step");
    const std::size_t L = cfg_.blocks, d = cfg_.dim, V = cfg_.vocab;
    std::vector<std::size_t> seq(prompt.begin(), prompt.end());
    GenerateResult res;
    std::vector<float> hidden;
    std::vector<float> dists;
    Xoshiro256 rng(mode.seed);
    for (std::size_t s = 0; s < steps; ++s) {
      const auto fw = forward(seq);
      const Matrix& last = fw.hidden.back();
      hidden.insert(hidden.end(), last.data().begin(), last.data().end());
      if (with_distributions) {
        for (const auto& dist : project(last, head_)) dists.insert(dists.end(), dist.probs().begin(), dist.probs().end());
      }
      const Distribution& out = fw.outputs.back();
      const std::size_t next = mode.sampled ? sample_token(out, rng) : argmax_token(out);
      res.step_outputs.push_back(out);
      res.tokens.push_back(next);
      seq.push_back(next);
    }
    auto& b = res.bundle;
    b.metadata = json{{"model", model_id()},
                      {"layers", L},
                      {"vocab", V},
                      {"d_model", d},
                      {"heads", cfg_.heads},
                      {"tokens", steps},
                      {"norm_kind", "layernorm"},
                      {"tied", true},
                      {"prompt_ids", std::vector<std::size_t>(prompt.begin(), prompt.end())},
                      {"decode", mode.sampled ? "sampled" : "greedy"},
                      {"last_prompt_row", 0}};
    if (mode.sampled) b.metadata["sample_seed"] = mode.seed;
    b.add_tensor("hidden", {steps, L + 1, d}, std::span<const float>(hidden));
    if (with_distributions) b.add_tensor("distributions", {steps, L + 1, V}, std::span<const float>(dists));
    b.add_tensor("decoder", {V, d}, head_.decoder.data());
    b.add_tensor("ln_gamma", {d}, std::span<const double>(head_.norm_gamma));
    b.add_tensor("ln_beta", {d}, std::span<const double>(head_.norm_beta));
    std::vector<float> next(res.tokens.begin(), res.tokens.end());
    b.add_tensor("next_tokens", {steps}, std::span<const float>(next));
    return res;
  }

  std::string model_id() const { return "toy:" + std::to_string(cfg_.seed); }

  static double positional(std::size_t pos, std::size_t k, std::size_t dim) {
    const double freq = std::pow(10000.0, -static_cast<double>(k - k % 2) / static_cast<double>(dim));
    const double angle = static_cast<double>(pos) * freq;
    return k % 2 == 0 ? std::sin(angle) : std::cos(angle);
  }

 private:
  double positional(std::size_t pos, std::size_t k) const { return positional(pos, k, cfg_.dim); }

  static void record(ForwardResult& out, const Matrix& h, std::size_t layer) {
    for (std::size_t t = 0; t < h.rows(); ++t) std::copy(h.row(t).begin(), h.row(t).end(), out.hidden[t].row(layer).begin());
  }

  static void matvec(std::span<const double> x, const Matrix& w, std::span<double> y) {
    std::fill(y.begin(), y.end(), 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const auto wr = w.row(i);
      for (std::size_t j = 0; j < y.size(); ++j) y[j] += x[i] * wr[j];
    }
  }

  void apply_block(const Block& b, Matrix& h) const {
    const std::size_t n = h.rows(), d = cfg_.dim, heads = cfg_.heads, dh = d / heads;
    Matrix a(n, d), q(n, d), k(n, d), v(n, d);
    for (std::size_t t = 0; t < n; ++t) {
      layer_norm(h.row(t), b.ln1_gamma, b.ln1_beta, a.row(t));
      matvec(a.row(t), b.wq, q.row(t));
      matvec(a.row(t), b.wk, k.row(t));
      matvec(a.row(t), b.wv, v.row(t));
    }
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<double> attn(d), proj(d), weights;
    for (std::size_t t = 0; t < n; ++t) {
      std::fill(attn.begin(), attn.end(), 0.0);
      for (std::size_t hd = 0; hd < heads; ++hd) {
        const std::size_t off = hd * dh;
        weights.assign(t + 1, 0.0);
        double peak = -INFINITY;
        for (std::size_t s = 0; s <= t; ++s) {
          double dot = 0.0;
          for (std::size_t j = 0; j < dh; ++j) dot += q(t, off + j) * k(s, off + j);
          weights[s] = dot * scale;
          peak = std::max(peak, weights[s]);
        }
        double total = 0.0;
        for (auto& w : weights) total += (w = std::exp(w - peak));
        for (std::size_t s = 0; s <= t; ++s)
          for (std::size_t j = 0; j < dh; ++j) attn[off + j] += weights[s] / total * v(s, off + j);
      }
      matvec(attn, b.wo, proj);
      for (std::size_t j = 0; j < d; ++j) h(t, j) += proj[j];
    }
    std::vector<double> m(d), hidden(cfg_.mlp_hidden), mlp(d);
    for (std::size_t t = 0; t < n; ++t) {
      layer_norm(h.row(t), b.ln2_gamma, b.ln2_beta, m);
      matvec(m, b.w1, hidden);
      for (std::size_t j = 0; j < hidden.size(); ++j) hidden[j] = gelu(hidden[j] + b.b1[j]);
      matvec(hidden, b.w2, mlp);
      for (std::size_t j = 0; j < d; ++j) h(t, j) += mlp[j] + b.b2[j];
    }
  }

  static std::size_t argmax_token(const Distribution& d) {
    const auto p = d.probs();
    return static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
  }

  static std::size_t sample_token(const Distribution& d, Xoshiro256& rng) {
    const double u = rng.uniform();
    double cum = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) {
      cum += d[i];
      if (u < cum) return i;
    }
    return d.size() - 1;
  }

  ToyConfig cfg_;
  Matrix embedding_;
  std::vector<Block> blocks_;
  LensConfig head_;
};

}  // namespace entlens
