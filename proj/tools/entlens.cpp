// entlens: entropy-profile analysis of layer-wise transformer activations.
//
//   entlens toy dump --seed 7 --tokens 16 --out toy.entl
//   entlens profile --input toy.entl --aggregate mean --out profiles.entl
//   entlens validate --input toy.entl --out report.json
//   entlens classify --dataset profiles.entl --k 11 --out results.json
//
// Exit codes: 0 success, 1 usage error, 2 data/format error, 3 internal error.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "entlens/commands.hpp"

namespace {

namespace cli = entlens::cli;
namespace fs = std::filesystem;

int exit_code(entlens::ErrorKind kind) {
  switch (kind) {
    case entlens::ErrorKind::usage: return 1;
    case entlens::ErrorKind::internal: return 3;
    default: return 2;
  }
}

std::vector<double> parse_doubles(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      entlens::fail(entlens::ErrorKind::usage, "bad number '" + item + "'");
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Entropy profiles of layer-wise next-token distributions"};
  app.set_version_flag("--version", std::string(entlens::kToolVersion));
  app.require_subcommand(1);

  // profile
  cli::ProfileOptions prof;
  std::optional<double> prof_alpha;
  std::optional<std::size_t> prof_resample;
  auto* profile = app.add_subcommand("profile", "Build a profile dataset from bundles");
  profile->add_option("--input", prof.inputs, "Input .entl bundles")->required();
  profile->add_option("--entropy", prof.entropy, "shannon | renyi")->check(CLI::IsMember({"shannon", "renyi"}));
  profile->add_option("--alpha", prof_alpha, "Renyi order");
  profile->add_option("--aggregate", prof.aggregate, "concat | mean | windowed")->check(CLI::IsMember({"concat", "mean", "windowed"}));
  profile->add_option("--resample", prof_resample, "Resample the layer axis to this depth");
  profile->add_flag("--standardize", prof.standardize, "Standardize feature columns");
  profile->add_option("--out", prof.out, "Output dataset bundle (a .csv is written alongside)");

  // validate
  cli::ValidateOptions val;
  auto* validate = app.add_subcommand("validate", "Check entropy deltas against top-p candidate dynamics");
  validate->add_option("--input", val.inputs, "Input .entl bundles")->required();
  validate->add_option("--p", val.p, "Top-p threshold");
  validate->add_option("--overlap-denominator", val.denominator, "min | union | predecessor")
      ->check(CLI::IsMember({"min", "union", "predecessor"}));
  validate->add_option("--out", val.out, "Report JSON");

  // classify
  cli::ClassifyOptions cls;
  auto* classify = app.add_subcommand("classify", "Cross-validated kNN on a profile dataset");
  classify->add_option("--dataset", cls.dataset, "Profile dataset bundle")->required();
  classify->add_option("--k", cls.k, "Neighbours");
  classify->add_option("--folds", cls.folds, "Folds (or runs for split50x10)");
  classify->add_option("--metric", cls.metric, "ovr_auc | macro_f1 | accuracy")
      ->check(CLI::IsMember({"ovr_auc", "macro_f1", "accuracy"}));
  classify->add_option("--protocol", cls.protocol, "stratified | split50x10")->check(CLI::IsMember({"stratified", "split50x10"}));
  classify->add_option("--layers", cls.layers, "all | first | middle | last | first+middle+last")
      ->check(CLI::IsMember({"all", "first", "middle", "last", "first+middle+last"}));
  classify->add_option("--seed", cls.seed, "Fold shuffle seed");
  classify->add_option("--out", cls.out, "Results JSON");

  // project
  cli::ProjectOptions proj;
  auto* project = app.add_subcommand("project", "PCA coordinates of a profile dataset");
  project->add_option("--dataset", proj.dataset, "Profile dataset bundle")->required();
  project->add_option("--components", proj.components, "Principal components");
  project->add_option("--out", proj.out, "Coordinates CSV");

  // similarity
  cli::SimilarityOptions sim;
  std::optional<fs::path> sim_dataset;
  std::string sim_alphas = "0.5,1,5";
  std::optional<std::size_t> sim_resample;
  auto* similarity = app.add_subcommand("similarity", "Cosine-similarity matrices of profiles");
  similarity->add_option("--dataset", sim_dataset, "Profile dataset bundle");
  similarity->add_option("--input", sim.inputs, "Bundles to profile once per alpha");
  similarity->add_option("--alphas", sim_alphas, "Comma-separated Renyi orders");
  similarity->add_option("--aggregate", sim.aggregate, "concat | mean | windowed");
  similarity->add_option("--resample", sim_resample, "Resample the layer axis to this depth");
  similarity->add_option("--out", sim.out, "Output path; {alpha} is substituted");

  // intervene
  auto* intervene = app.add_subcommand("intervene", "Entropy-guided layer skipping");
  intervene->require_subcommand(1);
  cli::PlanOptions plan;
  auto* plan_cmd = intervene->add_subcommand("plan", "Select blocks to skip per question");
  plan_cmd->add_option("--input", plan.inputs, "Question bundles")->required();
  plan_cmd->add_option("--strategy", plan.strategy, "max | min | random")->check(CLI::IsMember({"max", "min", "random", "max_dh", "min_dh"}));
  plan_cmd->add_option("--fraction", plan.fraction, "Fraction of blocks in (0, 0.5]");
  plan_cmd->add_option("--seed", plan.seed, "Seed for the random strategy");
  plan_cmd->add_option("--out", plan.out, "Plan JSON");

  cli::EvalOptions eval;
  auto* eval_cmd = intervene->add_subcommand("eval", "Accuracy of the toy model under skip plans");
  eval_cmd->add_option("--model", eval.model, "toy:<seed>[:<blocks>]");
  eval_cmd->add_option("--plan", eval.plans, "Plan JSON (repeatable)")->required();
  eval_cmd->add_option("--questions", eval.questions, "Question JSON")->required();
  eval_cmd->add_option("--answer-ids", eval.answer_ids, "Token ids for A,B,C,D");
  eval_cmd->add_option("--out", eval.out, "Accuracy CSV");

  cli::GridOptions grid;
  auto* grid_cmd = intervene->add_subcommand("grid", "Strategy x fraction accuracy grid on the toy model");
  grid_cmd->add_option("--model", grid.model, "toy:<seed>[:<blocks>]");
  grid_cmd->add_option("--questions", grid.questions, "Question JSON")->required();
  grid_cmd->add_option("--answer-ids", grid.answer_ids, "Token ids for A,B,C,D");
  grid_cmd->add_option("--random-seeds", grid.random_seeds, "Seeds averaged for the random strategy");
  grid_cmd->add_option("--seed", grid.seed, "First random seed");
  grid_cmd->add_option("--out", grid.out, "Accuracy CSV");

  // toy
  auto* toy = app.add_subcommand("toy", "Deterministic toy transformer fixture");
  toy->require_subcommand(1);
  cli::ToyDumpOptions dump;
  std::string dump_prompt = "5,6,7";
  std::optional<fs::path> dump_questions;
  std::string dump_mode = "greedy";
  auto* dump_cmd = toy->add_subcommand("dump", "Generate and write a hidden-state bundle");
  dump_cmd->add_option("--seed", dump.seed, "Weight seed");
  dump_cmd->add_option("--blocks", dump.blocks, "Transformer blocks");
  dump_cmd->add_option("--tokens", dump.tokens, "Generated tokens");
  dump_cmd->add_option("--prompt-ids", dump_prompt, "Comma-separated prompt token ids");
  dump_cmd->add_option("--label", dump.label, "Label stored in metadata");
  dump_cmd->add_option("--prompt-id", dump.prompt_id, "Prompt identifier stored in metadata");
  dump_cmd->add_option("--mode", dump_mode, "greedy | sampled")->check(CLI::IsMember({"greedy", "sampled"}));
  dump_cmd->add_option("--sample-seed", dump.sample_seed, "Seed for sampled decoding");
  dump_cmd->add_flag("--with-distributions", dump.with_distributions, "Also store lens distributions");
  dump_cmd->add_option("--questions", dump_questions, "Question JSON: write one bundle per question");
  dump_cmd->add_option("--out-dir", dump.out_dir, "Directory for per-question bundles");
  dump_cmd->add_option("--out", dump.out, "Output bundle");

  std::uint64_t gen_seed = 0;
  std::size_t gen_blocks = 4, gen_tokens = 8;
  std::string gen_prompt = "5,6,7", gen_mode = "greedy";
  std::uint64_t gen_sample_seed = 0;
  auto* gen_cmd = toy->add_subcommand("generate", "Print generated token ids as JSON");
  gen_cmd->add_option("--seed", gen_seed, "Weight seed");
  gen_cmd->add_option("--blocks", gen_blocks, "Transformer blocks");
  gen_cmd->add_option("--tokens", gen_tokens, "Generated tokens");
  gen_cmd->add_option("--prompt-ids", gen_prompt, "Comma-separated prompt token ids");
  gen_cmd->add_option("--mode", gen_mode, "greedy | sampled")->check(CLI::IsMember({"greedy", "sampled"}));
  gen_cmd->add_option("--sample-seed", gen_sample_seed, "Seed for sampled decoding");

  cli::ToyQuestionsOptions tq;
  auto* q_cmd = toy->add_subcommand("questions", "Write a random multiple-choice question set");
  q_cmd->add_option("--seed", tq.seed, "Seed");
  q_cmd->add_option("--count", tq.count, "Questions");
  q_cmd->add_option("--prompt-length", tq.prompt_length, "Prompt tokens per question");
  q_cmd->add_option("--out", tq.out, "Question JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*profile) {
      prof.alpha = prof_alpha;
      prof.resample = prof_resample;
      const auto ds = cli::run_profile(prof);
      std::cout << "wrote " << ds.size() << " x " << ds.features.cols() << " features to " << prof.out.string() << "\n";
    } else if (*validate) {
      const auto rep = cli::run_validate(val);
      const auto& rho = rep["c1"]["spearman"];
      std::cout << "C1 spearman: " << (rho.is_null() ? std::string("undefined (") + rep["c1"]["warning"].get<std::string>() + ")"
                                                     : entlens::format_fixed(rho.get<double>(), 4))
                << "\n";
    } else if (*classify) {
      const auto rep = cli::run_classify(cls);
      std::cout << rep["summary"].get<std::string>() << "\n";
    } else if (*project) {
      const auto pca = cli::run_project(proj);
      std::cout << "explained variance:";
      for (double r : pca.explained_ratio) std::cout << ' ' << entlens::format_fixed(r, 4);
      std::cout << "\n";
    } else if (*similarity) {
      sim.dataset = sim_dataset;
      sim.resample = sim_resample;
      sim.alphas = parse_doubles(sim_alphas);
      const auto summary = cli::run_similarity(sim);
      for (const auto& m : summary["matrices"]) std::cout << m["file"].get<std::string>() << " sigma=" << m["sigma"] << "\n";
    } else if (*plan_cmd) {
      const auto p = cli::run_plan(plan);
      std::cout << "planned " << p.entries.size() << " questions -> " << plan.out.string() << "\n";
    } else if (*eval_cmd) {
      for (const auto& r : cli::run_eval(eval))
        std::cout << r.strategy << " " << r.fraction << ": accuracy " << r.accuracy << " (delta " << r.delta << ")\n";
    } else if (*grid_cmd) {
      std::cout << entlens::accuracy_csv(cli::run_grid(grid));
    } else if (*dump_cmd) {
      dump.prompt_ids = cli::parse_id_list(dump_prompt);
      dump.questions = dump_questions;
      dump.sampled = dump_mode == "sampled";
      for (const auto& p : cli::run_toy_dump(dump)) std::cout << p.string() << "\n";
    } else if (*gen_cmd) {
      const auto model = cli::toy_model(gen_seed, gen_blocks);
      const auto mode = gen_mode == "sampled" ? entlens::DecodeMode::sample(gen_sample_seed) : entlens::DecodeMode::greedy();
      const auto res = model.generate(cli::parse_id_list(gen_prompt), gen_tokens, mode);
      std::cout << entlens::json{{"model", model.model_id()}, {"tokens", res.tokens}}.dump() << "\n";
    } else if (*q_cmd) {
      const auto qs = cli::run_toy_questions(tq);
      std::cout << "wrote " << qs.size() << " questions to " << tq.out.string() << "\n";
    }
  } catch (const entlens::Error& e) {
    std::cerr << "entlens: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "entlens: internal error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
