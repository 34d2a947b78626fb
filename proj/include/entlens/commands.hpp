#pragma once

// Implementations behind the `entlens` command-line tool. Each command takes a
// plain options struct, writes its artifacts, and throws entlens::Error on
// failure; argument parsing lives in tools/entlens.cpp.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "entlens/claims.hpp"
#include "entlens/diagnostics.hpp"
#include "entlens/format.hpp"
#include "entlens/interventions.hpp"
#include "entlens/profiles.hpp"
#include "entlens/report.hpp"
#include "entlens/tensor_store.hpp"
#include "entlens/toy_model.hpp"

namespace entlens::cli {

namespace fs = std::filesystem;

inline std::vector<std::string> path_strings(const std::vector<fs::path>& paths) {
  std::vector<std::string> out;
  for (const auto& p : paths) out.push_back(p.string());
  return out;
}

inline std::function<Bundle(std::size_t)> loader(const std::vector<fs::path>& paths) {
  return [&paths](std::size_t i) { return load_bundle(paths[i]); };
}

inline EntropyKind entropy_kind(const std::string& name, std::optional<double> alpha) {
  if (name == "shannon") {
    require(!alpha, ErrorKind::usage, "--alpha only applies to --entropy renyi");
    return EntropyKind::shannon();
  }
  if (name == "renyi") {
    require(alpha.has_value(), ErrorKind::usage, "--entropy renyi requires --alpha");
    require(*alpha > 0.0, ErrorKind::usage, "--alpha must be positive");
    if (std::abs(*alpha - 1.0) < kRenyiShannonBand) return EntropyKind::shannon();
    return EntropyKind::renyi(*alpha);
  }
  fail(ErrorKind::usage, "unknown entropy '" + name + "'");
}

/// Profile-index subsets used to probe which depths carry the signal.
/// Index 0 is the embedding state; first/middle/last refer to block outputs.
inline std::vector<std::size_t> layer_subset(const std::string& name, std::size_t depth) {
  require(depth >= 2, ErrorKind::content, "layer subsets need at least one block");
  const std::size_t blocks = depth - 1;
  const std::size_t first = 1, middle = 1 + (blocks - 1) / 2, last = blocks;
  if (name == "all") {
    std::vector<std::size_t> all(depth);
    std::iota(all.begin(), all.end(), std::size_t{0});
    return all;
  }
  if (name == "first") return {first};
  if (name == "middle") return {middle};
  if (name == "last") return {last};
  if (name == "first+middle+last") {
    std::vector<std::size_t> v{first, middle, last};
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
  }
  fail(ErrorKind::usage, "unknown layer subset '" + name + "'");
}

// ---------------------------------------------------------------- profile

struct ProfileOptions {
  std::vector<fs::path> inputs;
  std::string entropy = "shannon";
  std::optional<double> alpha;
  std::string aggregate = "concat";
  std::optional<std::size_t> resample;
  bool standardize = false;
  fs::path out = "profiles.entl";
};

inline ProfileDataset run_profile(const ProfileOptions& o) {
  require(!o.inputs.empty(), ErrorKind::usage, "no input bundles");
  AssembleOptions a;
  a.entropy = entropy_kind(o.entropy, o.alpha);
  a.aggregation = parse_aggregation(o.aggregate);
  a.target_depth = o.resample;
  a.standardize = o.standardize;
  auto ds = assemble(o.inputs.size(), loader(o.inputs), a);

  RunManifest run{"profile", path_strings(o.inputs), {}, 0};
  run.parameters = {{"entropy", o.entropy},
                    {"alpha", o.alpha ? format_double(*o.alpha) : ""},
                    {"aggregate", o.aggregate},
                    {"resample", o.resample ? std::to_string(*o.resample) : ""},
                    {"standardize", o.standardize ? "true" : "false"}};
  auto b = dataset_to_bundle(ds);
  b.metadata["run"] = run.to_json();
  if (o.out.has_parent_path()) fs::create_directories(o.out.parent_path());
  save_bundle(b, o.out);
  write_text(sibling(o.out, "", ".csv"), dataset_to_csv(ds));
  return ds;
}

// ---------------------------------------------------------------- validate

inline OverlapDenominator parse_denominator(const std::string& s) {
  if (s == "min") return OverlapDenominator::min;
  if (s == "union") return OverlapDenominator::union_;
  if (s == "predecessor") return OverlapDenominator::predecessor;
  fail(ErrorKind::usage, "unknown overlap denominator '" + s + "'");
}

struct ValidateOptions {
  std::vector<fs::path> inputs;
  double p = kDefaultTopP;
  std::string denominator = "min";
  fs::path out = "report.json";
};

inline json run_validate(const ValidateOptions& o) {
  require(!o.inputs.empty(), ErrorKind::usage, "no input bundles");
  require(o.p > 0.0 && o.p <= 1.0, ErrorKind::usage, "--p must lie in (0, 1]");
  const auto analysis = analyze_candidates(o.inputs.size(), loader(o.inputs), o.p, parse_denominator(o.denominator));
  const auto c1 = correlate_entropy_candidates(analysis);
  const auto c2 = overlap_matrix(analysis);

  json per_layer = json::array();
  for (const auto& l : c1.per_layer) {
    per_layer.push_back(json{{"layer", l.layer},
                             {"n", l.n},
                             {"mean_delta_entropy", l.mean_delta_entropy},
                             {"mean_delta_candidates", l.mean_delta_candidates},
                             {"spearman", l.spearman ? json(*l.spearman) : json(nullptr)},
                             {"sign_agreement", l.sign_agreement}});
  }
  json c1j{{"spearman", c1.spearman ? json(*c1.spearman) : json(nullptr)}, {"pairs", c1.pairs}, {"per_layer", per_layer}};
  if (!c1.spearman) c1j["warning"] = c1.warning;

  std::ostringstream heat;
  heat << "model,layer,mean_overlap,count\n";
  json c2j = json::array();
  for (const auto& cell : c2) {
    heat << csv_field(cell.model) << ',' << cell.layer << ',' << format_double(cell.mean_overlap) << ',' << cell.count << '\n';
    c2j.push_back(json{{"model", cell.model}, {"layer", cell.layer}, {"mean_overlap", cell.mean_overlap}, {"count", cell.count}});
  }
  std::ostringstream trans;
  trans << "sample,model,token,layer,delta_entropy,delta_candidates,direction\n";
  for (const auto& r : analysis.transitions) {
    const char* dir = r.delta_candidates > 0 ? "expand" : (r.delta_candidates < 0 ? "prune" : "flat");
    trans << r.sample << ',' << csv_field(analysis.models[r.sample]) << ',' << r.token << ',' << r.layer << ','
          << format_double(r.delta_entropy) << ',' << r.delta_candidates << ',' << dir << '\n';
  }

  RunManifest run{"validate", path_strings(o.inputs), {{"p", format_double(o.p)}, {"overlap_denominator", o.denominator}}, 0};
  json report{{"run", run.to_json()}, {"p", o.p}, {"overlap_denominator", o.denominator}, {"c1", c1j}, {"c2", c2j}};
  write_json(o.out, report);
  write_text(sibling(o.out, "_c2", ".csv"), heat.str());
  write_text(sibling(o.out, "_transitions", ".csv"), trans.str());
  return report;
}

// ---------------------------------------------------------------- classify

struct ClassifyOptions {
  fs::path dataset;
  std::size_t k = 3;
  std::size_t folds = 10;
  std::string metric = "ovr_auc";
  std::string protocol = "stratified";
  std::string layers = "all";
  std::uint64_t seed = 0;
  fs::path out = "results.json";
};

inline json run_classify(const ClassifyOptions& o) {
  require(o.folds >= 2, ErrorKind::usage, "--folds must be at least 2");
  require(o.k >= 1, ErrorKind::usage, "--k must be positive");
  Protocol protocol;
  if (o.protocol == "stratified")
    protocol = Protocol::stratified;
  else if (o.protocol == "split50x10" || o.protocol == "split50")
    protocol = Protocol::split50;
  else
    fail(ErrorKind::usage, "unknown protocol '" + o.protocol + "'");
  const Metric metric = parse_metric(o.metric);
  auto ds = dataset_from_bundle(load_bundle(o.dataset));
  if (o.layers != "all") {
    const auto keep = layer_subset(o.layers, ds.depth);
    ds = filter_layers(ds, keep);
  }
  const auto rep = cross_validate(ds, {o.k, o.folds, metric, protocol, o.seed});

  RunManifest run{"classify", {o.dataset.string()}, {}, o.seed};
  run.parameters = {{"k", std::to_string(o.k)}, {"folds", std::to_string(o.folds)}, {"metric", o.metric},
                    {"protocol", o.protocol},   {"layers", o.layers}};
  const std::string summary = (metric == Metric::ovr_auc ? "AUC " : (metric == Metric::macro_f1 ? "macro-F1 " : "accuracy ")) +
                              format_fixed(100.0 * rep.mean, 2) + " +/- " + format_fixed(100.0 * rep.std, 2);
  json j{{"run", run.to_json()},
         {"metric_name", rep.metric_name},
         {"per_fold", rep.per_fold},
         {"mean", rep.mean},
         {"std", rep.std},
         {"folds", rep.folds},
         {"seed", rep.seed},
         {"protocol", rep.protocol},
         {"layers", o.layers},
         {"samples", ds.size()},
         {"features", ds.features.cols()},
         {"summary", summary}};
  write_json(o.out, j);
  return j;
}

// ---------------------------------------------------------------- project / similarity

struct ProjectOptions {
  fs::path dataset;
  std::size_t components = 2;
  fs::path out = "coords.csv";
};

inline PcaResult run_project(const ProjectOptions& o) {
  const auto ds = dataset_from_bundle(load_bundle(o.dataset));
  const auto pca = pca_project(ds.features, o.components);
  std::ostringstream csv;
  csv << "sample,label";
  for (std::size_t c = 0; c < o.components; ++c) csv << ",pc" << c + 1;
  csv << '\n';
  for (std::size_t r = 0; r < ds.size(); ++r) {
    csv << r << ',' << csv_field(ds.label_names[ds.labels[r]]);
    for (std::size_t c = 0; c < o.components; ++c) csv << ',' << format_double(pca.coordinates(r, c));
    csv << '\n';
  }
  write_text(o.out, csv.str());
  RunManifest run{"project", {o.dataset.string()}, {{"components", std::to_string(o.components)}}, 0};
  write_json(sibling(o.out, "", ".json"), json{{"run", run.to_json()}, {"explained_variance_ratio", pca.explained_ratio}});
  return pca;
}

struct SimilarityOptions {
  std::optional<fs::path> dataset;  // use its features as-is
  std::vector<fs::path> inputs;     // or recompute profiles per alpha
  std::vector<double> alphas{0.5, 1.0, 5.0};
  std::string aggregate = "mean";
  std::optional<std::size_t> resample;
  fs::path out = "sim_{alpha}.csv";
};

inline std::string similarity_csv(const Matrix& m) {
  std::ostringstream csv;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) csv << (c ? "," : "") << format_double(m(r, c));
    csv << '\n';
  }
  return csv.str();
}

inline json run_similarity(const SimilarityOptions& o) {
  require(o.dataset.has_value() != !o.inputs.empty(), ErrorKind::usage, "pass either --dataset or --input bundles");
  json sigmas = json::array();
  auto out_for = [&](const std::string& tag) {
    std::string s = o.out.string();
    const auto pos = s.find("{alpha}");
    if (pos != std::string::npos) return fs::path(s.replace(pos, 7, tag));
    return sibling(o.out, "_" + tag, o.out.extension().string());
  };
  if (o.dataset) {
    const auto ds = dataset_from_bundle(load_bundle(*o.dataset));
    const auto sim = similarity_matrix(ds.features);
    const auto path = out_for(ds.entropy);
    write_text(path, similarity_csv(sim.similarity));
    sigmas.push_back(json{{"entropy", ds.entropy}, {"sigma", sim.sigma}, {"file", path.string()}});
  } else {
    require(!o.alphas.empty(), ErrorKind::usage, "--alphas is empty");
    for (double alpha : o.alphas) {
      require(alpha > 0.0, ErrorKind::usage, "alphas must be positive");
      AssembleOptions a;
      a.entropy = std::abs(alpha - 1.0) < kRenyiShannonBand ? EntropyKind::shannon() : EntropyKind::renyi(alpha);
      a.aggregation = parse_aggregation(o.aggregate);
      a.target_depth = o.resample;
      // Similarity is label-free; unlabeled bundles get a placeholder.
      const auto ds = assemble(o.inputs.size(), [&](std::size_t i) {
        auto b = load_bundle(o.inputs[i]);
        if (!b.metadata.contains("label")) b.metadata["label"] = "unlabeled";
        return b;
      }, a);
      const auto sim = similarity_matrix(ds.features);
      const auto path = out_for(format_double(alpha));
      write_text(path, similarity_csv(sim.similarity));
      sigmas.push_back(json{{"alpha", alpha}, {"sigma", sim.sigma}, {"file", path.string()}});
    }
  }
  std::vector<std::string> inputs = o.dataset ? std::vector<std::string>{o.dataset->string()} : path_strings(o.inputs);
  std::string alphas;
  for (double a : o.alphas) alphas += (alphas.empty() ? "" : ",") + format_double(a);
  RunManifest run{"similarity", inputs, {{"alphas", alphas}, {"aggregate", o.aggregate}}, 0};
  json summary{{"run", run.to_json()}, {"matrices", sigmas}};
  write_json(sibling(out_for("summary"), "", ".json"), summary);
  return summary;
}

// ---------------------------------------------------------------- toy

/// Parses "toy:<seed>" or "toy:<seed>:<blocks>".
inline ToyConfig parse_toy_model(const std::string& spec) {
  require(spec.rfind("toy:", 0) == 0, ErrorKind::usage, "model must be toy:<seed>[:<blocks>]");
  ToyConfig cfg;
  const std::string rest = spec.substr(4);
  try {
    const auto colon = rest.find(':');
    cfg.seed = std::stoull(rest.substr(0, colon));
    if (colon != std::string::npos) cfg.blocks = std::stoul(rest.substr(colon + 1));
  } catch (const std::exception&) {
    fail(ErrorKind::usage, "model must be toy:<seed>[:<blocks>]");
  }
  cfg.validate();
  return cfg;
}

inline std::vector<std::size_t> parse_id_list(const std::string& csv) {
  std::vector<std::size_t> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      out.push_back(std::stoul(item));
    } catch (const std::exception&) {
      fail(ErrorKind::usage, "bad token id '" + item + "'");
    }
  }
  return out;
}

struct ToyDumpOptions {
  std::uint64_t seed = 0;
  std::size_t blocks = 4;
  std::size_t tokens = 8;
  std::vector<std::size_t> prompt_ids{5, 6, 7};
  std::string label;
  std::string prompt_id;
  bool with_distributions = false;
  bool sampled = false;
  std::uint64_t sample_seed = 0;
  fs::path out = "toy.entl";
  std::optional<fs::path> questions;  // one bundle per question into out_dir
  fs::path out_dir = "questions";
};

inline ToyModel toy_model(std::uint64_t seed, std::size_t blocks) {
  ToyConfig cfg;
  cfg.seed = seed;
  cfg.blocks = blocks;
  return ToyModel(cfg);
}

inline std::vector<fs::path> run_toy_dump(const ToyDumpOptions& o) {
  const auto model = toy_model(o.seed, o.blocks);
  RunManifest run{"toy dump", {}, {{"tokens", std::to_string(o.tokens)}, {"blocks", std::to_string(o.blocks)}}, o.seed};
  if (o.questions) {
    const auto qs = questions_from_json(read_json(*o.questions));
    run.inputs = {o.questions->string()};
    const auto bundles = question_bundles(model, qs);
    std::vector<fs::path> written;
    fs::create_directories(o.out_dir);
    for (std::size_t i = 0; i < qs.size(); ++i) {
      auto b = bundles[i];
      b.metadata["label"] = o.label.empty() ? model.model_id() : o.label;
      b.metadata["gold"] = qs[i].gold;
      b.metadata["run"] = run.to_json();
      written.push_back(o.out_dir / (qs[i].id + ".entl"));
      save_bundle(b, written.back());
    }
    return written;
  }
  const auto mode = o.sampled ? DecodeMode::sample(o.sample_seed) : DecodeMode::greedy();
  auto res = model.generate(o.prompt_ids, o.tokens, mode, o.with_distributions);
  res.bundle.metadata["label"] = o.label.empty() ? model.model_id() : o.label;
  if (!o.prompt_id.empty()) res.bundle.metadata["prompt_id"] = o.prompt_id;
  run.parameters["prompt_ids"] = json(o.prompt_ids).dump();
  res.bundle.metadata["run"] = run.to_json();
  if (o.out.has_parent_path()) fs::create_directories(o.out.parent_path());
  save_bundle(res.bundle, o.out);
  return {o.out};
}

struct ToyQuestionsOptions {
  std::uint64_t seed = 0;
  std::size_t count = 40;
  std::size_t prompt_length = 6;
  std::size_t vocab = 64;
  fs::path out = "questions.json";
};

/// Random prompts over the non-answer vocabulary with uniformly drawn gold answers.
inline std::vector<Question> run_toy_questions(const ToyQuestionsOptions& o) {
  require(o.vocab > 5, ErrorKind::usage, "vocabulary too small for answer ids 1-4");
  Xoshiro256 rng(o.seed);
  std::vector<Question> qs;
  for (std::size_t i = 0; i < o.count; ++i) {
    Question q;
    char id[32];
    std::snprintf(id, sizeof(id), "q%03zu", i + 1);
    q.id = id;
    for (std::size_t t = 0; t < o.prompt_length; ++t) q.prompt.push_back(5 + rng.below(o.vocab - 5));
    q.gold = rng.below(4);
    qs.push_back(std::move(q));
  }
  write_json(o.out, questions_to_json(qs));
  return qs;
}

// ---------------------------------------------------------------- intervene

struct PlanOptions {
  std::vector<fs::path> inputs;
  std::string strategy = "max";
  double fraction = 0.1;
  std::uint64_t seed = 0;
  fs::path out = "plan.json";
};

inline SkipPlan run_plan(const PlanOptions& o) {
  require(!o.inputs.empty(), ErrorKind::usage, "no question bundles");
  require(o.fraction > 0.0 && o.fraction <= 0.5, ErrorKind::usage, "--fraction must lie in (0, 0.5]");
  const auto plan = plan_from_bundles(o.inputs.size(), loader(o.inputs), parse_strategy(o.strategy), o.fraction, o.seed);
  RunManifest run{"intervene plan", path_strings(o.inputs), {{"strategy", o.strategy}, {"fraction", format_double(o.fraction)}}, o.seed};
  auto j = plan.to_json();
  j["run"] = run.to_json();
  write_json(o.out, j);
  return plan;
}

inline AnswerIds parse_answer_ids(const std::string& csv) {
  const auto ids = parse_id_list(csv);
  require(ids.size() == 4, ErrorKind::usage, "--answer-ids needs exactly four ids");
  return {ids[0], ids[1], ids[2], ids[3]};
}

struct EvalOptions {
  std::string model = "toy:0";
  std::vector<fs::path> plans;
  fs::path questions;
  std::string answer_ids = "1,2,3,4";
  fs::path out = "acc.csv";
};

inline std::vector<AccuracyRow> run_eval(const EvalOptions& o) {
  require(!o.plans.empty(), ErrorKind::usage, "no plans to evaluate");
  const ToyModel model(parse_toy_model(o.model));
  const auto qs = questions_from_json(read_json(o.questions));
  const auto answers = parse_answer_ids(o.answer_ids);
  check_answer_ids(answers, model.config().vocab);
  std::vector<AccuracyRow> rows;
  for (const auto& p : o.plans) rows.push_back(ablate_and_eval(model, SkipPlan::from_json(read_json(p)), qs, answers));
  write_text(o.out, accuracy_csv(rows));
  auto inputs = path_strings(o.plans);
  inputs.push_back(o.questions.string());
  RunManifest run{"intervene eval", inputs, {{"model", o.model}, {"answer_ids", o.answer_ids}}, 0};
  write_json(sibling(o.out, "", ".json"), json{{"run", run.to_json()}});
  return rows;
}

struct GridOptions {
  std::string model = "toy:0";
  fs::path questions;
  std::string answer_ids = "1,2,3,4";
  std::size_t random_seeds = 20;
  std::uint64_t seed = 0;
  fs::path out = "grid.csv";
};

inline std::vector<AccuracyRow> run_grid(const GridOptions& o) {
  const ToyModel model(parse_toy_model(o.model));
  const auto qs = questions_from_json(read_json(o.questions));
  const auto answers = parse_answer_ids(o.answer_ids);
  check_answer_ids(answers, model.config().vocab);
  const auto rows = intervention_grid(model, qs, answers, o.random_seeds, o.seed);
  write_text(o.out, accuracy_csv(rows));
  RunManifest run{"intervene grid", {o.questions.string()},
                  {{"model", o.model}, {"answer_ids", o.answer_ids}, {"random_seeds", std::to_string(o.random_seeds)}}, o.seed};
  write_json(sibling(o.out, "", ".json"), json{{"run", run.to_json()}});
  return rows;
}

}  // namespace entlens::cli
