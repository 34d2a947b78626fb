#pragma once

// Entropy-delta guided layer skipping: choose blocks per question, emit skip
// plans, and measure multiple-choice accuracy with those blocks zeroed.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <cstdio>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "entlens/entropy.hpp"
#include "entlens/error.hpp"
#include "entlens/format.hpp"
#include "entlens/lens.hpp"
#include "entlens/parallel.hpp"
#include "entlens/rng.hpp"
#include "entlens/tensor_store.hpp"
#include "entlens/toy_model.hpp"

namespace entlens {

enum class Strategy { max_dh, min_dh, random };

inline const char* to_string(Strategy s) {
  switch (s) {
    case Strategy::max_dh: return "max_dh";
    case Strategy::min_dh: return "min_dh";
    case Strategy::random: return "random";
  }
  return "?";
}

/// Accepts both the plan spelling (max_dh) and the CLI shorthand (max).
inline Strategy parse_strategy(const std::string& s) {
  if (s == "max_dh" || s == "max") return Strategy::max_dh;
  if (s == "min_dh" || s == "min") return Strategy::min_dh;
  if (s == "random") return Strategy::random;
  fail(ErrorKind::usage, "unknown strategy '" + s + "'");
}

inline constexpr std::array<double, 5> kSkipFractions{0.1, 0.2, 0.3, 0.4, 0.5};

/// max(1, round(fraction * L)), rounding halves away from zero.
inline std::size_t skip_count(double fraction, std::size_t blocks) {
  require(fraction > 0.0 && fraction <= 0.5, ErrorKind::usage, "skip fraction must lie in (0, 0.5]");
  // Nudge for products that land a hair below .5 in binary.
  const auto n = static_cast<std::size_t>(std::round(fraction * static_cast<double>(blocks) + 1e-9));
  return std::max<std::size_t>(1, n);
}

/// Block indices to skip, ascending. Entry i of `delta` is block i's entropy change.
inline std::vector<std::size_t> select_layers(std::span<const double> delta, Strategy strategy, std::size_t count,
                                              std::uint64_t seed = 0) {
  require(count >= 1, ErrorKind::usage, "at least one layer must be selected");
  require(count <= delta.size(), ErrorKind::usage, "cannot select more layers than there are blocks");
  std::vector<std::size_t> idx(delta.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  switch (strategy) {
    case Strategy::max_dh:
      std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return delta[a] > delta[b]; });
      break;
    case Strategy::min_dh:
      std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return delta[a] < delta[b]; });
      break;
    case Strategy::random: {
      Xoshiro256 rng(seed);
      for (std::size_t i = 0; i < count; ++i) std::swap(idx[i], idx[i + rng.below(idx.size() - i)]);
      break;
    }
  }
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  return idx;
}

struct SkipPlan {
  Strategy strategy = Strategy::max_dh;
  double fraction = 0.1;
  std::uint64_t seed = 0;
  std::map<std::string, std::vector<std::size_t>> entries;

  json to_json() const {
    return json{{"strategy", to_string(strategy)}, {"fraction", fraction}, {"seed", seed}, {"entries", entries}};
  }

  static SkipPlan from_json(const json& j) {
    try {
      SkipPlan p;
      p.strategy = parse_strategy(j.at("strategy").get<std::string>());
      p.fraction = j.at("fraction").get<double>();
      p.seed = j.value("seed", std::uint64_t{0});
      p.entries = j.at("entries").get<std::map<std::string, std::vector<std::size_t>>>();
      return p;
    } catch (const json::exception& e) {
      fail(ErrorKind::format, std::string("malformed skip plan: ") + e.what());
    }
  }

  void validate(std::size_t blocks) const {
    for (const auto& [q, layers] : entries)
      for (auto l : layers)
        require(l < blocks, ErrorKind::index, "plan for '" + q + "' skips block " + std::to_string(l) + " of " +
                                                  std::to_string(blocks));
  }
};

/// Per-question seed for the random strategy, independent of input order.
inline std::uint64_t question_seed(std::uint64_t seed, const std::string& question) { return mix_seed(seed, fnv1a(question)); }

inline std::string question_id_of(const Bundle& b, std::size_t index) {
  for (const char* key : {"question_id", "prompt_id"})
    if (b.metadata.contains(key)) {
      const auto& v = b.metadata[key];
      return v.is_string() ? v.get<std::string>() : v.dump();
    }
  char buf[32];
  std::snprintf(buf, sizeof(buf), "q%03zu", index + 1);
  return buf;
}

/// Shannon profile at the final prompt position of a question bundle.
/// `last_prompt_row` metadata names the row (default 0: the first generated
/// step, which is conditioned on the full prompt).
inline std::vector<double> answer_position_profile(const Bundle& b) {
  const LayerDistributions layers(b);
  const auto row = meta_or<std::size_t>(b, "last_prompt_row", 0);
  require(row < layers.tokens(), ErrorKind::content, "bundle lacks the final prompt position");
  std::vector<double> h;
  for (const auto& d : layers.at(row)) h.push_back(shannon_entropy(d));
  return h;
}

inline SkipPlan plan_from_bundles(std::size_t count, const std::function<Bundle(std::size_t)>& load, Strategy strategy,
                                  double fraction, std::uint64_t seed) {
  require(fraction > 0.0 && fraction <= 0.5, ErrorKind::usage, "skip fraction must lie in (0, 0.5]");
  std::vector<std::string> ids(count);
  std::vector<std::vector<std::size_t>> layers(count);
  parallel::for_each_index(count, [&](std::size_t i) {
    const Bundle b = load(i);
    ids[i] = question_id_of(b, i);
    const auto delta = delta_entropy(answer_position_profile(b));
    layers[i] = select_layers(delta, strategy, skip_count(fraction, delta.size()), question_seed(seed, ids[i]));
  });
  SkipPlan plan{strategy, fraction, seed, {}};
  for (std::size_t i = 0; i < count; ++i) {
    require(plan.entries.emplace(ids[i], layers[i]).second, ErrorKind::content, "duplicate question id '" + ids[i] + "'");
  }
  return plan;
}

inline SkipPlan plan_from_bundles(std::span<const Bundle> bundles, Strategy strategy, double fraction, std::uint64_t seed) {
  return plan_from_bundles(bundles.size(), [&](std::size_t i) { return bundles[i]; }, strategy, fraction, seed);
}

using AnswerIds = std::array<std::size_t, 4>;
/// Toy fixture convention: ids 1-4 are the answers A-D.
inline constexpr AnswerIds kToyAnswerIds{1, 2, 3, 4};

/// Answer index (0..3) with the highest probability among the answer tokens.
inline std::size_t predict_answer(const Distribution& d, const AnswerIds& answers) {
  std::size_t best = 0;
  for (std::size_t a = 1; a < answers.size(); ++a)
    if (d[answers[a]] > d[answers[best]]) best = a;
  return best;
}

inline void check_answer_ids(const AnswerIds& answers, std::size_t vocab) {
  for (std::size_t a = 0; a < answers.size(); ++a) {
    require(answers[a] < vocab, ErrorKind::index, "answer token id out of range");
    for (std::size_t b = a + 1; b < answers.size(); ++b)
      require(answers[a] != answers[b], ErrorKind::usage, "answer token ids must be distinct");
  }
}

inline double evaluate_mcq(std::span<const Distribution> outputs, const AnswerIds& answers, std::span<const std::size_t> gold) {
  require(outputs.size() == gold.size(), ErrorKind::shape, "one gold answer per question required");
  require(!outputs.empty(), ErrorKind::content, "no questions to evaluate");
  std::size_t hits = 0;
  for (std::size_t q = 0; q < outputs.size(); ++q) {
    check_answer_ids(answers, outputs[q].size());
    require(gold[q] < answers.size(), ErrorKind::index, "gold answer index must be 0..3");
    hits += predict_answer(outputs[q], answers) == gold[q];
  }
  return static_cast<double>(hits) / static_cast<double>(outputs.size());
}

struct Question {
  std::string id;
  std::vector<std::size_t> prompt;
  std::size_t gold = 0;
};

/// Reads {"questions": [{"id", "prompt": [ids], "gold": 0..3}]} (or a bare array).
inline std::vector<Question> questions_from_json(const json& j) {
  try {
    const json& list = j.is_array() ? j : j.at("questions");
    std::vector<Question> out;
    for (const auto& q : list)
      out.push_back({q.at("id").get<std::string>(), q.at("prompt").get<std::vector<std::size_t>>(), q.at("gold").get<std::size_t>()});
    return out;
  } catch (const json::exception& e) {
    fail(ErrorKind::format, std::string("malformed question file: ") + e.what());
  }
}

inline json questions_to_json(std::span<const Question> qs) {
  json list = json::array();
  for (const auto& q : qs) list.push_back(json{{"id", q.id}, {"prompt", q.prompt}, {"gold", q.gold}});
  return json{{"questions", list}};
}

/// Final-position output of the toy model for each question, skipping the
/// blocks `skip_for(question)` returns.
inline std::vector<Distribution> answer_outputs(const ToyModel& model, std::span<const Question> questions,
                                                const std::function<std::set<std::size_t>(const Question&)>& skip_for) {
  std::vector<std::optional<Distribution>> slots(questions.size());
  parallel::for_each_index(questions.size(), [&](std::size_t i) {
    slots[i] = model.forward(questions[i].prompt, skip_for(questions[i])).outputs.back();
  });
  std::vector<Distribution> out;
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

struct AccuracyRow {
  std::string strategy;
  double fraction = 0.0;
  double accuracy = 0.0;
  double baseline = 0.0;
  double delta = 0.0;
};

inline double baseline_accuracy(const ToyModel& model, std::span<const Question> questions, const AnswerIds& answers) {
  std::vector<std::size_t> gold;
  for (const auto& q : questions) gold.push_back(q.gold);
  const auto outs = answer_outputs(model, questions, [](const Question&) { return std::set<std::size_t>{}; });
  return evaluate_mcq(outs, answers, gold);
}

/// Accuracy with each question's planned blocks zeroed, against the unablated
/// baseline. Questions missing from the plan run unablated.
inline AccuracyRow ablate_and_eval(const ToyModel& model, const SkipPlan& plan, std::span<const Question> questions,
                                   const AnswerIds& answers = kToyAnswerIds) {
  plan.validate(model.config().blocks);
  std::vector<std::size_t> gold;
  for (const auto& q : questions) gold.push_back(q.gold);
  const auto ablated = answer_outputs(model, questions, [&](const Question& q) {
    auto it = plan.entries.find(q.id);
    return it == plan.entries.end() ? std::set<std::size_t>{} : std::set<std::size_t>(it->second.begin(), it->second.end());
  });
  AccuracyRow row{to_string(plan.strategy), plan.fraction, evaluate_mcq(ablated, answers, gold),
                  baseline_accuracy(model, questions, answers), 0.0};
  row.delta = row.accuracy - row.baseline;
  return row;
}

/// Question bundles from the toy model: one generated step per question, so
/// row 0 holds the final prompt position.
inline std::vector<Bundle> question_bundles(const ToyModel& model, std::span<const Question> questions) {
  std::vector<Bundle> out(questions.size());
  parallel::for_each_index(questions.size(), [&](std::size_t i) {
    out[i] = model.generate(questions[i].prompt, 1).bundle;
    out[i].metadata["question_id"] = questions[i].id;
  });
  return out;
}

/// Full strategy x fraction grid on the toy model. Random rows average the
/// accuracy over `random_seeds` seeds starting at `seed`.
inline std::vector<AccuracyRow> intervention_grid(const ToyModel& model, std::span<const Question> questions,
                                                  const AnswerIds& answers, std::size_t random_seeds, std::uint64_t seed,
                                                  std::span<const double> fractions = kSkipFractions) {
  require(random_seeds >= 1, ErrorKind::usage, "at least one random seed is required");
  const auto bundles = question_bundles(model, questions);
  const double base = baseline_accuracy(model, questions, answers);
  std::vector<AccuracyRow> rows;
  for (Strategy s : {Strategy::max_dh, Strategy::min_dh, Strategy::random}) {
    for (double f : fractions) {
      const std::size_t runs = s == Strategy::random ? random_seeds : 1;
      double acc = 0.0;
      for (std::size_t r = 0; r < runs; ++r) {
        const auto plan = plan_from_bundles(bundles, s, f, seed + r);
        acc += ablate_and_eval(model, plan, questions, answers).accuracy;
      }
      acc /= static_cast<double>(runs);
      rows.push_back({to_string(s), f, acc, base, acc - base});
    }
  }
  return rows;
}

inline std::string accuracy_csv(std::span<const AccuracyRow> rows) {
  std::ostringstream out;
  out << "strategy,fraction,accuracy,baseline,delta\n";
  for (const auto& r : rows)
    out << r.strategy << ',' << format_double(r.fraction) << ',' << format_double(r.accuracy) << ','
        << format_double(r.baseline) << ',' << format_double(r.delta) << '\n';
  return out.str();
}

}  // namespace entlens
