#pragma once

// Training loop: per step, snapshot the policy, roll out G responses per
// sample, score them, standardize rewards within each group, and take one
// (by default) gradient step on the clipped objective. The curriculum runs a
// single-page stage then a multi-page stage, refreshing the reference policy
// in between.

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "evigrpo/grpo.hpp"
#include "evigrpo/policy.hpp"
#include "evigrpo/reward.hpp"
#include "evigrpo/synth.hpp"
#include "evigrpo/types.hpp"

namespace evigrpo {

enum class RefRefresh { PerStage, Never };

struct TrainConfig {
  int group_size = 8;           // rollouts per sample (G)
  int batch_size = 16;          // samples per step
  double kl_weight = 0.04;      // beta
  double clip_epsilon = 0.2;
  double learning_rate = 0.05;  // plain gradient descent
  int epochs_per_stage = 1;
  double std_epsilon = 1e-8;
  uint64_t seed = 0;
  PsfKind psf = PsfKind::JudgmentsInferCount;
  RefRefresh ref_refresh = RefRefresh::PerStage;
  KlMode kl_mode = KlMode::ExactFactored;
  int updates_per_batch = 1;    // >1 reuses a rollout batch (ratios drift from 1)
  double init_scale = 0.1;
  AnlsConfig anls;
};

void validate(const TrainConfig& cfg);

struct EmptyCorpusError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct StepRecord {
  uint64_t step = 0;
  std::string stage;
  double mean_total = 0.0;
  double mean_format = 0.0;
  double mean_accuracy = 0.0;
  double mean_evidence = 0.0;
  double loss = 0.0;      // evaluated before the update (ratio = 1 territory)
  double mean_kl = 0.0;
  double grad_norm = 0.0;
};

using TrainTrace = std::vector<StepRecord>;

void save_trace(const TrainTrace& trace, const std::string& path);

struct CompiledEntry {
  const CorpusEntry* entry = nullptr;
  std::shared_ptr<const SampleContext> context;
};

std::vector<CompiledEntry> compile(const Corpus& corpus);

// One rollout-and-update step over a batch. Deterministic in
// (cfg.seed, global_step, position in batch).
StepRecord grpo_step(PolicyParams& policy, const PolicyParams& reference,
                     std::span<const CompiledEntry> batch, const TrainConfig& cfg,
                     uint64_t global_step);

// num_steps steps over the corpus, reshuffling each epoch.
TrainTrace run_stage(PolicyParams& policy, const PolicyParams& reference,
                     const Corpus& corpus, const TrainConfig& cfg, int num_steps,
                     const std::string& stage_label, uint64_t step_offset = 0,
                     uint64_t stage_salt = 0);

struct TrainResult {
  PolicyParams policy;
  TrainTrace trace;
};

// Fresh seeded policy trained for a fixed number of steps on one corpus,
// reference frozen at init.
TrainResult train_steps(const TrainConfig& cfg, const Corpus& corpus,
                        int num_steps, const std::string& stage_label = "train");

// Two-stage curriculum: single-page stage, reference refresh per config,
// then multi-page stage.
TrainResult run_curriculum(const TrainConfig& cfg, const Corpus& single_stage,
                           const Corpus& multi_stage);

enum class DataStrategy { Curriculum, Mixed, SingleOnly, MultiOnly };
const char* data_strategy_name(DataStrategy s);

TrainResult train_with_strategy(const TrainConfig& cfg, const Corpus& single_stage,
                                const Corpus& multi_stage, DataStrategy strategy);

struct AblationVariant {
  std::string name;
  PsfKind psf = PsfKind::JudgmentsInferCount;
  DataStrategy strategy = DataStrategy::Curriculum;
};

// Baseline-vs-evidence, the three evidence formats, and the data strategies.
std::vector<AblationVariant> default_ablation_variants();

struct AblationRow {
  std::string name;
  PsfKind psf = PsfKind::JudgmentsInferCount;
  DataStrategy strategy = DataStrategy::Curriculum;
  double mean_anls = 0.0;                 // x100 in reports
  std::optional<double> evidence_recall;  // absent when the format has none
  double format_rate = 0.0;
};

struct AblationReport {
  std::vector<AblationRow> rows;
};

// Trains every variant from the same seed and scores it on the held-out set.
AblationReport run_ablation(const std::vector<AblationVariant>& variants,
                            const Corpus& single_stage, const Corpus& multi_stage,
                            const Corpus& heldout, const TrainConfig& base);

std::string ablation_to_json(const AblationReport& report);
std::string ablation_to_markdown(const AblationReport& report);

}  // namespace evigrpo
