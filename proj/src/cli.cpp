#include "evigrpo/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "evigrpo/annotate.hpp"
#include "evigrpo/eval.hpp"
#include "evigrpo/selfcheck.hpp"
#include "evigrpo/synth.hpp"
#include "evigrpo/trainer.hpp"

namespace evigrpo {

namespace {

struct SharedArgs {
  uint64_t seed = 0;
  std::string out = ".";
  std::string psf = "psf3";
};

void add_shared(CLI::App* sub, SharedArgs& shared) {
  // Options the subcommand does not define fall through to the parent app;
  // that is what lets --config be typed after the subcommand name.
  sub->fallthrough();
  sub->add_option("--seed", shared.seed, "seed for every random stream")
      ->capture_default_str();
  sub->add_option("--out", shared.out, "output directory")->capture_default_str();
  sub->add_option("--psf", shared.psf, "output format")
      ->check(CLI::IsMember({"psf1", "psf2", "psf3", "none"}))
      ->capture_default_str();
}

PsfKind shared_psf(const SharedArgs& shared) {
  return *psf_from_name(shared.psf);  // IsMember already vetted the string
}

std::string ensure_out(const SharedArgs& shared) {
  std::filesystem::create_directories(shared.out);
  return shared.out;
}

void add_train_flags(CLI::App* sub, TrainConfig& cfg) {
  sub->add_option("--group-size", cfg.group_size, "rollouts per sample (G)")
      ->capture_default_str();
  sub->add_option("--batch-size", cfg.batch_size, "samples per step")
      ->capture_default_str();
  sub->add_option("--kl-weight", cfg.kl_weight, "KL penalty weight (beta)")
      ->capture_default_str();
  sub->add_option("--clip-epsilon", cfg.clip_epsilon, "ratio clip half-width")
      ->capture_default_str();
  sub->add_option("--learning-rate", cfg.learning_rate, "gradient step size")
      ->capture_default_str();
  sub->add_option("--epochs", cfg.epochs_per_stage, "epochs per stage")
      ->capture_default_str();
  sub->add_option("--std-epsilon", cfg.std_epsilon, "advantage std guard")
      ->capture_default_str();
  sub->add_option("--updates-per-batch", cfg.updates_per_batch,
                  "gradient updates per rollout batch")
      ->capture_default_str();
  sub->add_option("--init-scale", cfg.init_scale, "policy init noise scale")
      ->capture_default_str();
  sub->add_option("--kl-mode", cfg.kl_mode, "KL computation")
      ->transform(CLI::CheckedTransformer(
          std::map<std::string, KlMode>{{"exact", KlMode::ExactFactored},
                                        {"k3", KlMode::K3Estimator}},
          CLI::ignore_case))
      ->default_str("exact");
  sub->add_option("--ref-refresh", cfg.ref_refresh, "reference policy refresh")
      ->transform(CLI::CheckedTransformer(
          std::map<std::string, RefRefresh>{{"per-stage", RefRefresh::PerStage},
                                            {"never", RefRefresh::Never}},
          CLI::ignore_case))
      ->default_str("per-stage");
}

void print_checks(const std::vector<CheckResult>& checks, int& exit_code) {
  for (const CheckResult& check : checks) {
    std::cout << (check.pass ? "PASS " : "FAIL ") << check.name << ": "
              << check.detail << "\n";
    if (!check.pass) exit_code = 2;
  }
}

}  // namespace

int dispatch(int argc, const char* const* argv) {
  CLI::App app{"evidence-guided multi-page document QA: data, training, scoring"};
  app.require_subcommand(1);
  app.set_config("--config", "",
                 "key=value config file, keys under a [subcommand] section; "
                 "command line wins");
  int exit_code = 0;

  // ---- gen-data ----
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic QA corpus");
  SharedArgs gen_shared;
  add_shared(gen, gen_shared);
  CorpusConfig ccfg;
  double two_hop_frac = 0.0;
  gen->add_option("--documents", ccfg.num_documents, "number of documents")
      ->capture_default_str();
  gen->add_option("--min-pages", ccfg.min_pages, "minimum pages per document")
      ->capture_default_str();
  gen->add_option("--max-pages", ccfg.max_pages, "maximum pages per document")
      ->capture_default_str();
  gen->add_option("--min-facts", ccfg.min_facts_per_page, "minimum facts per page")
      ->capture_default_str();
  gen->add_option("--max-facts", ccfg.max_facts_per_page, "maximum facts per page")
      ->capture_default_str();
  gen->add_option("--vocab", ccfg.vocabulary_size, "key/value vocabulary size")
      ->capture_default_str();
  gen->add_option("--two-hop-frac", two_hop_frac,
                  "fraction of two-hop comparison questions")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  gen->add_option("--id-prefix", ccfg.id_prefix, "sample id prefix")
      ->capture_default_str();
  gen->callback([&] {
    ccfg.seed = gen_shared.seed;
    ccfg.hop_distribution.clear();
    if (two_hop_frac < 1.0) ccfg.hop_distribution.push_back({1, 1.0 - two_hop_frac});
    if (two_hop_frac > 0.0) ccfg.hop_distribution.push_back({2, two_hop_frac});
    const Corpus corpus = generate_corpus(ccfg);
    save_corpus(corpus, ensure_out(gen_shared) + "/corpus.jsonl");
  });

  // ---- train ----
  auto* train = app.add_subcommand("train", "run GRPO training on a corpus");
  SharedArgs train_shared;
  add_shared(train, train_shared);
  TrainConfig tcfg;
  std::string train_data, train_multi;
  int train_steps_count = 100;
  train->add_option("--data", train_data, "training corpus (JSONL)")->required();
  train->add_option("--multi-data", train_multi,
                    "second-stage corpus; enables the two-stage curriculum");
  train->add_option("--steps", train_steps_count,
                    "step count for single-corpus training (curriculum derives "
                    "its own from --epochs)")
      ->capture_default_str();
  add_train_flags(train, tcfg);
  train->callback([&] {
    tcfg.seed = train_shared.seed;
    tcfg.psf = shared_psf(train_shared);
    const Corpus corpus = load_dataset(train_data);
    TrainResult result =
        train_multi.empty()
            ? train_steps(tcfg, corpus, train_steps_count, "train")
            : run_curriculum(tcfg, corpus, load_dataset(train_multi));
    const std::string out = ensure_out(train_shared);
    save_trace(result.trace, out + "/trace.jsonl");
    save_checkpoint(result.policy, out, tcfg.seed);
  });

  // ---- eval ----
  auto* eval_cmd = app.add_subcommand("eval", "score a checkpoint or predictions");
  SharedArgs eval_shared;
  add_shared(eval_cmd, eval_shared);
  std::vector<std::string> eval_data;
  std::string eval_checkpoint, eval_predictions;
  eval_cmd->add_option("--data", eval_data, "dataset(s) to score (JSONL)")
      ->required();
  eval_cmd->add_option("--checkpoint", eval_checkpoint,
                       "checkpoint directory (default: --out)");
  eval_cmd->add_option("--predictions", eval_predictions,
                       "score a prediction file instead of a checkpoint "
                       "(single --data only)");
  eval_cmd->callback([&] {
    if (!eval_predictions.empty() && eval_data.size() != 1)
      throw CLI::ValidationError("--predictions requires exactly one --data");
    EvalReport report;
    AnlsConfig acfg;
    report.anls_threshold = acfg.threshold;
    const PsfKind psf = shared_psf(eval_shared);
    if (eval_predictions.empty()) {
      const std::string ckpt_dir =
          eval_checkpoint.empty() ? eval_shared.out : eval_checkpoint;
      const PolicyParams params = load_checkpoint(ckpt_dir);
      for (const std::string& path : eval_data)
        report.rows.push_back(
            evaluate(params, load_dataset(path), psf, acfg,
                     std::filesystem::path(path).stem().string()));
    } else {
      report.rows.push_back(
          evaluate(load_predictions(eval_predictions), load_dataset(eval_data[0]),
                   psf, acfg, std::filesystem::path(eval_data[0]).stem().string()));
    }
    write_reports(report, ensure_out(eval_shared));
  });

  // ---- ablate ----
  auto* ablate = app.add_subcommand(
      "ablate", "train every variant (formats x data strategies) and score it");
  SharedArgs ablate_shared;
  add_shared(ablate, ablate_shared);
  TrainConfig acfg_train;
  std::string ab_single, ab_multi, ab_heldout;
  ablate->add_option("--single-data", ab_single, "stage-1 corpus (JSONL)")
      ->required();
  ablate->add_option("--multi-data", ab_multi, "stage-2 corpus (JSONL)")->required();
  ablate->add_option("--heldout-data", ab_heldout, "held-out scoring corpus (JSONL)")
      ->required();
  add_train_flags(ablate, acfg_train);
  ablate->callback([&] {
    acfg_train.seed = ablate_shared.seed;
    const AblationReport report =
        run_ablation(default_ablation_variants(), load_dataset(ab_single),
                     load_dataset(ab_multi), load_dataset(ab_heldout), acfg_train);
    const std::string out = ensure_out(ablate_shared);
    for (auto [name, text] :
         {std::pair{"/report.json", ablation_to_json(report)},
          std::pair{"/report.md", ablation_to_markdown(report)}}) {
      std::ofstream file(out + name, std::ios::binary);
      if (!file) throw std::runtime_error("ablate: cannot write under " + out);
      file << text;
    }
  });

  // ---- annotate ----
  auto* annotate = app.add_subcommand(
      "annotate", "two-stage generate-then-verify annotation over a corpus");
  SharedArgs anno_shared;
  add_shared(annotate, anno_shared);
  std::string anno_data, anno_remote;
  MatchConfig match_cfg;
  OracleNoise noise;
  RemoteConfig remote_cfg;
  annotate->add_option("--data", anno_data, "corpus to annotate (JSONL)")->required();
  annotate->add_option("--match-threshold", match_cfg.threshold,
                       "min ANLS for a ground-truth match")
      ->capture_default_str();
  annotate->add_option("--answer-noise", noise.answer_corruption,
                       "oracle backend: wrong-answer probability per stage")
      ->capture_default_str();
  annotate->add_option("--format-noise", noise.format_corruption,
                       "oracle backend: malformed-output probability per stage")
      ->capture_default_str();
  annotate->add_option("--transport-noise", noise.transport_failure,
                       "oracle backend: simulated outage probability per stage")
      ->capture_default_str();
  annotate->add_option("--remote", anno_remote,
                       "annotate via HTTP endpoint instead of the oracle backend");
  annotate->add_option("--token-env", remote_cfg.token_env,
                       "environment variable holding the bearer token")
      ->capture_default_str();
  annotate->add_option("--timeout", remote_cfg.timeout_seconds,
                       "remote request timeout, seconds")
      ->capture_default_str();
  annotate->callback([&] {
    const Corpus corpus = load_dataset(anno_data);
    std::unique_ptr<AnnotatorBackend> backend;
    if (anno_remote.empty()) {
      backend = std::make_unique<OracleBackend>(corpus, noise, anno_shared.seed);
    } else {
      remote_cfg.url = anno_remote;
      backend = std::make_unique<RemoteBackend>(remote_cfg);
    }
    const PipelineResult result = run_pipeline(corpus, *backend, match_cfg);
    export_evibench(result, corpus, ensure_out(anno_shared) + "/annotations.jsonl");

    nlohmann::ordered_json summary;
    summary["total"] = result.summary.total;
    summary["retained"] = result.summary.retained;
    summary["retention_rate"] = result.summary.retention_rate;
    summary["rejections"] = result.summary.rejections;
    summary["retained_by_category"] = result.summary.category_totals;
    std::cout << summary.dump(2) << "\n";
  });

  // ---- check-rewards ----
  auto* check = app.add_subcommand(
      "check-rewards", "brute-force oracles for the reward math (PASS/FAIL)");
  SharedArgs check_shared;
  add_shared(check, check_shared);
  check->callback([&] { print_checks(run_reward_checks(), exit_code); });

  // ---- grad-check ----
  auto* grad = app.add_subcommand(
      "grad-check", "finite-difference check of the objective gradient");
  SharedArgs grad_shared;
  add_shared(grad, grad_shared);
  GradCheckConfig gcfg;
  grad->add_option("--batches", gcfg.batches, "random batches to test")
      ->capture_default_str();
  grad->add_option("--fd-step", gcfg.step, "central-difference displacement")
      ->capture_default_str();
  grad->add_option("--tolerance", gcfg.tolerance, "max relative error")
      ->capture_default_str();
  grad->callback([&] {
    gcfg.seed = grad_shared.seed == 0 ? GradCheckConfig{}.seed : grad_shared.seed;
    print_checks({check_gradient(gcfg)}, exit_code);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
    std::cerr << e.what() << "\n\n" << app.help() << std::flush;
    return 1;
  } catch (const std::exception& e) {
    std::cerr << nlohmann::json{{"error", e.what()}}.dump() << std::endl;
    return 2;
  }
  return exit_code;
}

}  // namespace evigrpo
