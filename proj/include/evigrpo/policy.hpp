#pragma once

// Differentiable toy policy over structured responses, with exact log-probs
// and analytic gradients. The output distribution factorizes into
//
//   per-page Bernoulli:  p_j = sigmoid(<page_weights, f_j> / T)
//   answer categorical:  q_k = softmax_k(<answer_weights, Psi_k>_F / T)
//
// where f_j are per-page features and Psi_k are per-candidate feature
// matrices over (answer slot, page feature). Candidate answers are all fact
// values on the document plus "yes"/"no". The think block is a constant
// template and contributes no probability. Logits and scores are clamped to
// [-30, 30]; clamped coordinates get zero gradient.
//
// How the format shapes the distribution:
//   judgment formats  - judgments are free Bernoullis, one per page
//   indices list      - judgments conditioned on "at least one true"
//                       (an empty page list is unrenderable)
//   no evidence       - the answer factor alone is the output distribution

#include <Eigen/Dense>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "evigrpo/common.hpp"
#include "evigrpo/psf.hpp"
#include "evigrpo/types.hpp"

namespace evigrpo {

inline constexpr int kPageFeatureDim = 4;  // overlap, length, position, bias
inline constexpr int kAnswerSlots = 3;     // occurrence, lookup match, comparison polarity
inline constexpr double kLogitClamp = 30.0;
inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Flat parameter vector with aliasing views: [page_weights; vec(answer_weights)].
class PolicyParams {
 public:
  PolicyParams(int page_dim = kPageFeatureDim, int answer_slots = kAnswerSlots,
               double temperature = 1.0);

  int page_dim() const { return page_dim_; }
  int answer_slots() const { return answer_slots_; }
  int size() const { return static_cast<int>(theta_.size()); }
  double temperature() const { return temperature_; }
  void set_temperature(double t);

  Eigen::VectorXd& flat() { return theta_; }
  const Eigen::VectorXd& flat() const { return theta_; }

  Eigen::Map<Eigen::VectorXd> page_weights();
  Eigen::Map<const Eigen::VectorXd> page_weights() const;
  // answer_slots x page_dim, column-major over the tail of the flat vector.
  Eigen::Map<Eigen::MatrixXd> answer_weights();
  Eigen::Map<const Eigen::MatrixXd> answer_weights() const;

 private:
  int page_dim_;
  int answer_slots_;
  double temperature_;
  Eigen::VectorXd theta_;
};

// Small seeded Gaussian init (exact zeros would pin every page prob at 0.5).
void randomize(PolicyParams& params, uint64_t seed, double scale = 0.1);

// checkpoint.bin (raw doubles) + checkpoint.json (dims, temperature, seed).
void save_checkpoint(const PolicyParams& params, const std::string& dir,
                     uint64_t seed = 0);
PolicyParams load_checkpoint(const std::string& dir);

// Precompiled per-sample quantities; build once, reuse across rollouts.
struct SampleContext {
  int page_count = 0;
  Eigen::MatrixXd page_features;                  // N x page_dim
  std::vector<std::string> candidates;            // unique values + yes/no
  std::vector<Eigen::MatrixXd> answer_features;   // per candidate: slots x page_dim
  std::unordered_map<std::string, int> candidate_index;
  int gold_candidate = -1;  // convenience; not used by any probability
};

// Per-page features: [question-key overlap count, fact count / 4, (j+1)/N, 1].
Eigen::MatrixXd page_features(const QASample& sample, const SyntheticDocument& doc);

SampleContext make_context(const QASample& sample, const SyntheticDocument& doc);

enum class JudgmentSupport {
  Free,      // independent Bernoullis
  NonEmpty,  // Bernoullis conditioned on at least one true (indices list)
  None,      // page factors not expressed (no-evidence format)
};

JudgmentSupport support_for(PsfKind psf);

struct FactoredDist {
  // Always populated for introspection (latent evidence decode); part of the
  // output distribution only when support != None.
  Eigen::VectorXd page_probs;
  Eigen::VectorXd answer_probs;  // sums to 1
  JudgmentSupport support = JudgmentSupport::Free;
};

// A point in the outcome space: judgments (empty under None) + answer index.
struct FactoredOutcome {
  std::vector<bool> judgments;
  int answer_index = -1;
};

FactoredDist distribution(const PolicyParams& params, const SampleContext& ctx,
                          PsfKind psf = PsfKind::JudgmentsInferCount);

// log pi(outcome) under the factored distribution; -inf when the outcome is
// outside the support (wrong judgment count, all-false under NonEmpty, ...).
double outcome_log_prob(const FactoredDist& dist, const FactoredOutcome& outcome);

// Maps a parsed response onto the outcome space; nullopt when unsupported
// (judgment count != N, unknown answer, pages out of range, shape mismatch).
std::optional<FactoredOutcome> response_outcome(const SampleContext& ctx,
                                                const StructuredResponse& resp,
                                                PsfKind psf);

struct SampleDraw {
  std::string raw;          // rendered text, always parses under its format
  double logp = 0.0;
  FactoredOutcome outcome;
};

SampleDraw sample_response(const PolicyParams& params, const SampleContext& ctx,
                           PsfKind psf, Rng& rng);

// log-prob of an arbitrary parsed response; kNegInf sentinel when unsupported.
double log_prob(const PolicyParams& params, const SampleContext& ctx,
                const StructuredResponse& resp, PsfKind psf);

// Linearized forward pass: the distribution plus d(logit)/d(theta) rows,
// already temperature-scaled and masked where the clamp is active. Everything
// downstream (score gradients, KL gradients) chains through these rows.
struct PolicyForward {
  FactoredDist dist;
  Eigen::VectorXd page_logits;         // clamped
  Eigen::MatrixXd page_logit_grads;    // N x params
  Eigen::MatrixXd answer_score_grads;  // K x params
};

PolicyForward forward(const PolicyParams& params, const SampleContext& ctx,
                      PsfKind psf = PsfKind::JudgmentsInferCount);

// d log pi(outcome) / d theta; zero vector when the outcome is unsupported.
Eigen::VectorXd outcome_grad_log_prob(const PolicyForward& fwd,
                                      const FactoredOutcome& outcome);
Eigen::VectorXd grad_log_prob(const PolicyParams& params, const SampleContext& ctx,
                              const FactoredOutcome& outcome, PsfKind psf);

// Convenience overloads that compile the context on the fly.
FactoredDist distribution(const PolicyParams& params, const QASample& sample,
                          const SyntheticDocument& doc,
                          PsfKind psf = PsfKind::JudgmentsInferCount);
double log_prob(const PolicyParams& params, const QASample& sample,
                const SyntheticDocument& doc, const StructuredResponse& resp,
                PsfKind psf = PsfKind::JudgmentsInferCount);

// Greedy decode: judgment true iff p_j >= 0.5, answer = argmax. Under the
// indices list an empty decode falls back to the single most likely page so
// the rendered text stays well-formed.
SampleDraw greedy_response(const PolicyParams& params, const SampleContext& ctx,
                           PsfKind psf);

}  // namespace evigrpo
