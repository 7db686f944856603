#include "evigrpo/trainer.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <utility>

#include <json.hpp>

#include "evigrpo/common.hpp"
#include "evigrpo/eval.hpp"

namespace evigrpo {

namespace {

// Stream salts; every random draw in training derives from
// (cfg.seed, salt, step or epoch, position).
constexpr uint64_t kRolloutSalt = 0x9011A57ull;
constexpr uint64_t kShuffleSalt = 0x5AFF1Eull;

int effective_batch(const TrainConfig& cfg, int n) {
  return std::min(cfg.batch_size, n);
}

// Drop-remainder epochs: floor(n / batch), at least one step.
int steps_per_epoch(const TrainConfig& cfg, int n) {
  return std::max(1, n / effective_batch(cfg, n));
}

}  // namespace

void validate(const TrainConfig& cfg) {
  if (cfg.group_size < 2)
    throw std::invalid_argument("group_size must be at least 2");
  if (cfg.batch_size < 1) throw std::invalid_argument("batch_size must be positive");
  if (cfg.kl_weight < 0.0)
    throw std::invalid_argument("kl_weight must be nonnegative");
  if (!(cfg.clip_epsilon > 0.0 && cfg.clip_epsilon < 1.0))
    throw std::invalid_argument("clip_epsilon must lie in (0, 1)");
  if (cfg.learning_rate <= 0.0)
    throw std::invalid_argument("learning_rate must be positive");
  if (cfg.epochs_per_stage < 1)
    throw std::invalid_argument("epochs_per_stage must be positive");
  if (cfg.std_epsilon <= 0.0)
    throw std::invalid_argument("std_epsilon must be positive");
  if (cfg.updates_per_batch < 1)
    throw std::invalid_argument("updates_per_batch must be positive");
  if (cfg.init_scale < 0.0)
    throw std::invalid_argument("init_scale must be nonnegative");
}

void save_trace(const TrainTrace& trace, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_trace: cannot open " + path);
  for (const StepRecord& r : trace) {
    nlohmann::ordered_json obj;
    obj["step"] = r.step;
    obj["stage"] = r.stage;
    obj["mean_total"] = r.mean_total;
    obj["mean_format"] = r.mean_format;
    obj["mean_accuracy"] = r.mean_accuracy;
    obj["mean_evidence"] = r.mean_evidence;
    obj["loss"] = r.loss;
    obj["mean_kl"] = r.mean_kl;
    obj["grad_norm"] = r.grad_norm;
    out << obj.dump() << "\n";
  }
}

std::vector<CompiledEntry> compile(const Corpus& corpus) {
  std::vector<CompiledEntry> out;
  out.reserve(corpus.size());
  for (const CorpusEntry& entry : corpus)
    out.push_back({&entry, std::make_shared<const SampleContext>(
                               make_context(entry.sample, entry.doc))});
  return out;
}

StepRecord grpo_step(PolicyParams& policy, const PolicyParams& reference,
                     std::span<const CompiledEntry> batch, const TrainConfig& cfg,
                     uint64_t global_step) {
  validate(cfg);
  if (batch.empty()) throw EmptyBatchError("grpo_step: empty batch");

  // Rollouts come from the policy as it stands at step entry.
  const PolicyParams snapshot = policy;

  std::vector<RolloutGroup> groups;
  groups.reserve(batch.size());
  double sum_total = 0.0, sum_format = 0.0, sum_acc = 0.0, sum_evi = 0.0;
  for (size_t si = 0; si < batch.size(); ++si) {
    const CompiledEntry& ce = batch[si];
    RolloutGroup group;
    group.sample_id = ce.entry->sample.sample_id;
    group.context = ce.context;
    group.psf = cfg.psf;
    group.ref_dist = distribution(reference, *ce.context, cfg.psf);

    Rng rng(hash_mix({cfg.seed, kRolloutSalt, global_step, si}));
    Eigen::VectorXd rewards(cfg.group_size);
    for (int g = 0; g < cfg.group_size; ++g) {
      SampleDraw draw = sample_response(snapshot, *ce.context, cfg.psf, rng);
      RolloutResponse resp;
      resp.raw = std::move(draw.raw);
      resp.outcome = std::move(draw.outcome);
      resp.logp_old = draw.logp;
      resp.logp_ref = outcome_log_prob(group.ref_dist, resp.outcome);
      resp.reward = total_reward(resp.raw, ce.entry->sample, cfg.psf, cfg.anls);
      rewards[g] = resp.reward.total;
      sum_total += resp.reward.total;
      sum_format += resp.reward.format;
      sum_acc += resp.reward.accuracy;
      sum_evi += resp.reward.evidence;
      group.responses.push_back(std::move(resp));
    }
    group.advantages = group_advantages(rewards, cfg.std_epsilon);
    groups.push_back(std::move(group));
  }

  const double denom =
      static_cast<double>(batch.size()) * static_cast<double>(cfg.group_size);
  StepRecord rec;
  rec.step = global_step;
  rec.mean_total = sum_total / denom;
  rec.mean_format = sum_format / denom;
  rec.mean_accuracy = sum_acc / denom;
  rec.mean_evidence = sum_evi / denom;

  const ObjectiveConfig ocfg{cfg.clip_epsilon, cfg.kl_weight, cfg.kl_mode};
  for (int u = 0; u < cfg.updates_per_batch; ++u) {
    ObjectiveResult res = objective(groups, policy, ocfg);
    if (u == 0) {
      rec.loss = res.loss;
      rec.mean_kl = res.mean_kl;
      rec.grad_norm = res.gradient.norm();
    }
    policy.flat() -= cfg.learning_rate * res.gradient;
  }
  return rec;
}

TrainTrace run_stage(PolicyParams& policy, const PolicyParams& reference,
                     const Corpus& corpus, const TrainConfig& cfg, int num_steps,
                     const std::string& stage_label, uint64_t step_offset,
                     uint64_t stage_salt) {
  validate(cfg);
  if (corpus.empty()) throw EmptyCorpusError("run_stage: empty corpus");
  if (num_steps < 0) throw std::invalid_argument("run_stage: negative step count");

  std::vector<CompiledEntry> order = compile(corpus);
  const int n = static_cast<int>(order.size());
  const int bs = effective_batch(cfg, n);

  TrainTrace trace;
  trace.reserve(num_steps);
  uint64_t epoch = 0;
  int pos = n;  // force a shuffle before the first batch
  for (int step = 0; step < num_steps; ++step) {
    if (pos + bs > n) {
      Rng rng(hash_mix({cfg.seed, kShuffleSalt, stage_salt, epoch}));
      for (int i = n - 1; i > 0; --i)
        std::swap(order[i], order[rng.uniform_int(0, i)]);
      pos = 0;
      ++epoch;
    }
    StepRecord rec =
        grpo_step(policy, reference,
                  std::span<const CompiledEntry>(order.data() + pos, bs), cfg,
                  step_offset + static_cast<uint64_t>(step));
    rec.stage = stage_label;
    trace.push_back(std::move(rec));
    pos += bs;
  }
  return trace;
}

TrainResult train_steps(const TrainConfig& cfg, const Corpus& corpus, int num_steps,
                        const std::string& stage_label) {
  validate(cfg);
  if (corpus.empty()) throw EmptyCorpusError("train_steps: empty corpus");
  TrainResult out;
  randomize(out.policy, cfg.seed, cfg.init_scale);
  const PolicyParams reference = out.policy;
  out.trace = run_stage(out.policy, reference, corpus, cfg, num_steps, stage_label);
  return out;
}

TrainResult run_curriculum(const TrainConfig& cfg, const Corpus& single_stage,
                           const Corpus& multi_stage) {
  validate(cfg);
  if (single_stage.empty() || multi_stage.empty())
    throw EmptyCorpusError("run_curriculum: empty stage corpus");

  TrainResult out;
  randomize(out.policy, cfg.seed, cfg.init_scale);
  PolicyParams reference = out.policy;

  const int steps1 =
      cfg.epochs_per_stage * steps_per_epoch(cfg, static_cast<int>(single_stage.size()));
  const int steps2 =
      cfg.epochs_per_stage * steps_per_epoch(cfg, static_cast<int>(multi_stage.size()));

  out.trace = run_stage(out.policy, reference, single_stage, cfg, steps1, "single",
                        /*step_offset=*/0, /*stage_salt=*/1);
  if (cfg.ref_refresh == RefRefresh::PerStage) reference = out.policy;
  TrainTrace tail = run_stage(out.policy, reference, multi_stage, cfg, steps2, "multi",
                              /*step_offset=*/static_cast<uint64_t>(steps1),
                              /*stage_salt=*/2);
  out.trace.insert(out.trace.end(), tail.begin(), tail.end());
  return out;
}

const char* data_strategy_name(DataStrategy s) {
  switch (s) {
    case DataStrategy::Curriculum: return "curriculum";
    case DataStrategy::Mixed: return "mixed";
    case DataStrategy::SingleOnly: return "single_only";
    case DataStrategy::MultiOnly: return "multi_only";
  }
  return "unknown";
}

TrainResult train_with_strategy(const TrainConfig& cfg, const Corpus& single_stage,
                                const Corpus& multi_stage, DataStrategy strategy) {
  validate(cfg);
  if (single_stage.empty() || multi_stage.empty())
    throw EmptyCorpusError("train_with_strategy: empty stage corpus");

  // Every strategy gets the curriculum's total step budget.
  const int total_steps =
      cfg.epochs_per_stage *
      (steps_per_epoch(cfg, static_cast<int>(single_stage.size())) +
       steps_per_epoch(cfg, static_cast<int>(multi_stage.size())));

  switch (strategy) {
    case DataStrategy::Curriculum:
      return run_curriculum(cfg, single_stage, multi_stage);
    case DataStrategy::Mixed: {
      Corpus combined = single_stage;
      combined.insert(combined.end(), multi_stage.begin(), multi_stage.end());
      return train_steps(cfg, combined, total_steps, "mixed");
    }
    case DataStrategy::SingleOnly:
      return train_steps(cfg, single_stage, total_steps, "single_only");
    case DataStrategy::MultiOnly:
      return train_steps(cfg, multi_stage, total_steps, "multi_only");
  }
  throw std::invalid_argument("train_with_strategy: unknown strategy");
}

std::vector<AblationVariant> default_ablation_variants() {
  return {
      {"psf3_curriculum", PsfKind::JudgmentsInferCount, DataStrategy::Curriculum},
      {"psf2_curriculum", PsfKind::JudgmentsWithCount, DataStrategy::Curriculum},
      {"psf1_curriculum", PsfKind::IndicesList, DataStrategy::Curriculum},
      {"no_evidence", PsfKind::NoEvidence, DataStrategy::Curriculum},
      {"psf3_mixed", PsfKind::JudgmentsInferCount, DataStrategy::Mixed},
      {"psf3_single_only", PsfKind::JudgmentsInferCount, DataStrategy::SingleOnly},
      {"psf3_multi_only", PsfKind::JudgmentsInferCount, DataStrategy::MultiOnly},
  };
}

AblationReport run_ablation(const std::vector<AblationVariant>& variants,
                            const Corpus& single_stage, const Corpus& multi_stage,
                            const Corpus& heldout, const TrainConfig& base) {
  AblationReport report;
  for (const AblationVariant& variant : variants) {
    TrainConfig cfg = base;
    cfg.psf = variant.psf;
    TrainResult trained =
        train_with_strategy(cfg, single_stage, multi_stage, variant.strategy);
    EvalRow row =
        evaluate(trained.policy, heldout, variant.psf, base.anls, variant.name);
    AblationRow out;
    out.name = variant.name;
    out.psf = variant.psf;
    out.strategy = variant.strategy;
    out.mean_anls = row.mean_anls;
    out.evidence_recall = row.evidence_recall;
    out.format_rate = row.format_rate;
    report.rows.push_back(std::move(out));
  }
  return report;
}

namespace {

std::string fixed(double value, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, value);
  return buf;
}

}  // namespace

std::string ablation_to_json(const AblationReport& report) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const AblationRow& row : report.rows) {
    nlohmann::ordered_json r;
    r["name"] = row.name;
    r["format"] = psf_name(row.psf);
    r["data"] = data_strategy_name(row.strategy);
    r["mean_anls_x100"] = 100.0 * row.mean_anls;
    if (row.evidence_recall.has_value())
      r["evidence_recall_x100"] = 100.0 * *row.evidence_recall;
    else
      r["evidence_recall_x100"] = nullptr;
    r["format_rate"] = row.format_rate;
    rows.push_back(std::move(r));
  }
  nlohmann::ordered_json out;
  out["variants"] = std::move(rows);
  return out.dump(2) + "\n";
}

std::string ablation_to_markdown(const AblationReport& report) {
  std::string md =
      "| variant | format | data | ANLS x100 | evidence recall x100 | format rate "
      "|\n|---|---|---|---|---|---|\n";
  for (const AblationRow& row : report.rows) {
    md += "| " + row.name + " | " + psf_name(row.psf) + " | " +
          data_strategy_name(row.strategy) + " | " + fixed(100.0 * row.mean_anls, 2) +
          " | " +
          (row.evidence_recall.has_value() ? fixed(100.0 * *row.evidence_recall, 2)
                                           : std::string("n/a")) +
          " | " + fixed(row.format_rate, 3) + " |\n";
  }
  return md;
}

}  // namespace evigrpo
