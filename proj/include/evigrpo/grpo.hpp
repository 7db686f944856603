#pragma once

// Group-relative policy optimization pieces:
//
//   advantages   A_i = (r_i - mean(r)) / std(r)        (population std, guarded)
//   surrogate    min(ratio * A, clip(ratio, 1-e, 1+e) * A)
//   KL penalty   exact factored closed form, or the k3 estimator
//                exp(d) - d - 1 with d = logp_ref - logp_theta
//   objective    maximize mean(surrogate) - beta * mean(KL); exposed as a
//                loss (negated) with its exact analytic gradient
//
// The clip is a stop-gradient boundary: where the clipped branch is active
// and selected by the min, the response contributes zero surrogate gradient.

#include <Eigen/Dense>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "evigrpo/policy.hpp"
#include "evigrpo/psf.hpp"
#include "evigrpo/reward.hpp"

namespace evigrpo {

struct GroupTooSmallError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct NonFiniteLogProbError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct ShapeMismatchError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct EmptyBatchError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Standardized advantages over one rollout group. All-equal rewards (std
// below std_epsilon) yield all-zero advantages rather than a blowup.
Eigen::VectorXd group_advantages(const Eigen::VectorXd& rewards,
                                 double std_epsilon = 1e-8);

double surrogate_term(double logp_new, double logp_old, double advantage,
                      double clip_epsilon);

enum class KlMode { ExactFactored, K3Estimator };

// KL(policy || ref). K3Estimator needs the sampled outcome. Closed forms per
// factor: Bernoulli/categorical sums, with the nonempty-truncated product
// handled via its marginals m_j = p_j / (1 - prod(1 - p_i)).
double kl_term(const FactoredDist& policy_dist, const FactoredDist& ref_dist,
               KlMode mode,
               const std::optional<FactoredOutcome>& sampled = std::nullopt);

// d KL(policy || ref) / d theta for the exact factored mode.
Eigen::VectorXd kl_grad_exact(const PolicyForward& fwd, const FactoredDist& ref_dist);

struct RolloutResponse {
  std::string raw;
  FactoredOutcome outcome;
  bool supported = true;  // finite log-prob under the sampling policy
  double logp_old = 0.0;  // under the snapshot that produced the rollout
  double logp_ref = 0.0;  // under the reference policy
  RewardBreakdown reward;
};

struct RolloutGroup {
  std::string sample_id;
  std::shared_ptr<const SampleContext> context;
  PsfKind psf = PsfKind::JudgmentsInferCount;
  FactoredDist ref_dist;  // reference distribution for this sample
  std::vector<RolloutResponse> responses;
  Eigen::VectorXd advantages;
};

struct ObjectiveConfig {
  double clip_epsilon = 0.2;
  double kl_weight = 0.04;
  KlMode kl_mode = KlMode::ExactFactored;
};

struct ObjectiveResult {
  double loss = 0.0;           // -mean(surrogate) + kl_weight * mean(KL)
  Eigen::VectorXd gradient;    // d loss / d theta
  double mean_surrogate = 0.0;
  double mean_kl = 0.0;
  int considered = 0;          // responses with finite log-prob
};

// Evaluates the loss and its exact gradient at `params` for rollouts sampled
// under the snapshots recorded in the groups. Responses with non-finite
// log-prob are excluded from both averages (their reward already reflects
// the failure). Throws EmptyBatchError on an empty group list.
ObjectiveResult objective(const std::vector<RolloutGroup>& groups,
                          const PolicyParams& params, const ObjectiveConfig& cfg);

}  // namespace evigrpo
