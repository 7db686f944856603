#include "evigrpo/grpo.hpp"

#include <cmath>

namespace evigrpo {

namespace {

double log_q_all_false(const Eigen::VectorXd& p) {
  double acc = 0.0;
  for (int j = 0; j < p.size(); ++j) acc += std::log1p(-p[j]);
  return acc;
}

void check_shapes(const FactoredDist& a, const FactoredDist& b) {
  if (a.support != b.support)
    throw ShapeMismatchError("kl_term: support mismatch");
  if (a.answer_probs.size() != b.answer_probs.size())
    throw ShapeMismatchError("kl_term: answer dimension mismatch");
  if (a.support != JudgmentSupport::None &&
      a.page_probs.size() != b.page_probs.size())
    throw ShapeMismatchError("kl_term: page dimension mismatch");
}

double categorical_kl(const Eigen::VectorXd& q, const Eigen::VectorXd& q_ref) {
  double kl = 0.0;
  for (int k = 0; k < q.size(); ++k)
    kl += q[k] * (std::log(q[k]) - std::log(q_ref[k]));
  return kl;
}

double bernoulli_kl(double p, double r) {
  return p * (std::log(p) - std::log(r)) +
         (1.0 - p) * (std::log1p(-p) - std::log1p(-r));
}

// KL between nonempty-truncated Bernoulli products, via the truncated
// marginals m_j = p_j / t with t = 1 - prod(1 - p).
double truncated_kl(const Eigen::VectorXd& p, const Eigen::VectorXd& r) {
  const double t = -std::expm1(log_q_all_false(p));
  const double u = -std::expm1(log_q_all_false(r));
  double kl = std::log(u) - std::log(t);
  for (int j = 0; j < p.size(); ++j) {
    const double m = p[j] / t;
    kl += m * (std::log(p[j]) - std::log(r[j])) +
          (1.0 - m) * (std::log1p(-p[j]) - std::log1p(-r[j]));
  }
  return kl;
}

}  // namespace

Eigen::VectorXd group_advantages(const Eigen::VectorXd& rewards, double std_epsilon) {
  const int g = static_cast<int>(rewards.size());
  if (g < 2) throw GroupTooSmallError("group_advantages: need at least 2 rewards");
  const double mean = rewards.mean();
  const double var = (rewards.array() - mean).square().sum() / g;
  const double std = std::sqrt(var);
  if (std < std_epsilon) return Eigen::VectorXd::Zero(g);
  return (rewards.array() - mean) / std;
}

double surrogate_term(double logp_new, double logp_old, double advantage,
                      double clip_epsilon) {
  if (!(clip_epsilon > 0.0 && clip_epsilon < 1.0))
    throw std::invalid_argument("surrogate_term: clip_epsilon outside (0, 1)");
  if (!std::isfinite(logp_new) || !std::isfinite(logp_old))
    throw NonFiniteLogProbError("surrogate_term: non-finite log-prob");
  const double ratio = std::exp(logp_new - logp_old);
  const double clipped = std::clamp(ratio, 1.0 - clip_epsilon, 1.0 + clip_epsilon);
  return std::min(ratio * advantage, clipped * advantage);
}

double kl_term(const FactoredDist& policy_dist, const FactoredDist& ref_dist,
               KlMode mode, const std::optional<FactoredOutcome>& sampled) {
  check_shapes(policy_dist, ref_dist);

  if (mode == KlMode::K3Estimator) {
    if (!sampled.has_value())
      throw std::invalid_argument("kl_term: K3Estimator needs a sampled outcome");
    const double logp = outcome_log_prob(policy_dist, *sampled);
    const double logp_ref = outcome_log_prob(ref_dist, *sampled);
    if (!std::isfinite(logp) || !std::isfinite(logp_ref))
      throw NonFiniteLogProbError("kl_term: sampled outcome outside support");
    const double delta = logp_ref - logp;
    return std::max(0.0, std::expm1(delta) - delta);
  }

  double kl = categorical_kl(policy_dist.answer_probs, ref_dist.answer_probs);
  switch (policy_dist.support) {
    case JudgmentSupport::None:
      break;
    case JudgmentSupport::Free:
      for (int j = 0; j < policy_dist.page_probs.size(); ++j)
        kl += bernoulli_kl(policy_dist.page_probs[j], ref_dist.page_probs[j]);
      break;
    case JudgmentSupport::NonEmpty:
      kl += truncated_kl(policy_dist.page_probs, ref_dist.page_probs);
      break;
  }
  return std::max(0.0, kl);  // absorb roundoff at identical distributions
}

Eigen::VectorXd kl_grad_exact(const PolicyForward& fwd, const FactoredDist& ref_dist) {
  check_shapes(fwd.dist, ref_dist);
  const Eigen::VectorXd& q = fwd.dist.answer_probs;
  const Eigen::VectorXd& q_ref = ref_dist.answer_probs;

  // Categorical: dKL/ds_k = q_k (log(q_k / qref_k) - KL)
  const double kl_cat = categorical_kl(q, q_ref);
  Eigen::VectorXd coeff(q.size());
  for (int k = 0; k < q.size(); ++k)
    coeff[k] = q[k] * (std::log(q[k]) - std::log(q_ref[k]) - kl_cat);
  Eigen::VectorXd grad = fwd.answer_score_grads.transpose() * coeff;

  if (fwd.dist.support == JudgmentSupport::None) return grad;

  const Eigen::VectorXd& p = fwd.dist.page_probs;
  const Eigen::VectorXd& r = ref_dist.page_probs;
  const int n = static_cast<int>(p.size());

  if (fwd.dist.support == JudgmentSupport::Free) {
    // dKL/dz_j = (logit(p_j) - logit(r_j)) p_j (1 - p_j)
    Eigen::VectorXd page_coeff(n);
    for (int j = 0; j < n; ++j) {
      const double logit_gap = std::log(p[j]) - std::log1p(-p[j]) -
                               (std::log(r[j]) - std::log1p(-r[j]));
      page_coeff[j] = logit_gap * p[j] * (1.0 - p[j]);
    }
    grad += fwd.page_logit_grads.transpose() * page_coeff;
    return grad;
  }

  // NonEmpty: differentiate the truncated form. With a = log(p/r),
  // b = log((1-p)/(1-r)), t = 1-Q, m = p/t, S1 = sum p_j (a_j - b_j):
  //   dKL/dp_k = (a_k - b_k + 1)/t - (1-m_k)/(1-p_k)
  //              - Q S1 / ((1-p_k) t^2) - Q / ((1-p_k) t)
  const double log_q = log_q_all_false(p);
  const double big_q = std::exp(log_q);
  const double t = -std::expm1(log_q);
  Eigen::VectorXd a(n), b(n);
  double s1 = 0.0;
  for (int j = 0; j < n; ++j) {
    a[j] = std::log(p[j]) - std::log(r[j]);
    b[j] = std::log1p(-p[j]) - std::log1p(-r[j]);
    s1 += p[j] * (a[j] - b[j]);
  }
  Eigen::VectorXd page_coeff(n);
  for (int k = 0; k < n; ++k) {
    const double one_m = 1.0 - p[k];
    const double m_k = p[k] / t;
    const double dkl_dp = (a[k] - b[k] + 1.0) / t - (1.0 - m_k) / one_m -
                          big_q * s1 / (one_m * t * t) - big_q / (one_m * t);
    page_coeff[k] = dkl_dp * p[k] * (1.0 - p[k]);
  }
  grad += fwd.page_logit_grads.transpose() * page_coeff;
  return grad;
}

ObjectiveResult objective(const std::vector<RolloutGroup>& groups,
                          const PolicyParams& params, const ObjectiveConfig& cfg) {
  if (groups.empty()) throw EmptyBatchError("objective: no rollout groups");

  ObjectiveResult out;
  out.gradient = Eigen::VectorXd::Zero(params.size());
  double surrogate_sum = 0.0;
  double kl_sum = 0.0;
  int included = 0;

  for (const RolloutGroup& group : groups) {
    if (group.responses.size() != static_cast<size_t>(group.advantages.size()))
      throw ShapeMismatchError("objective: responses/advantages size mismatch");
    const PolicyForward fwd = forward(params, *group.context, group.psf);

    // Exact KL is a per-sample quantity; share it across the group.
    double kl_group = 0.0;
    Eigen::VectorXd kl_group_grad;
    if (cfg.kl_mode == KlMode::ExactFactored) {
      kl_group = kl_term(fwd.dist, group.ref_dist, KlMode::ExactFactored);
      kl_group_grad = kl_grad_exact(fwd, group.ref_dist);
    }

    for (size_t i = 0; i < group.responses.size(); ++i) {
      const RolloutResponse& resp = group.responses[i];
      if (!resp.supported) continue;
      const double logp_new = outcome_log_prob(fwd.dist, resp.outcome);
      if (!std::isfinite(logp_new) || !std::isfinite(resp.logp_old)) continue;

      const double advantage = group.advantages[static_cast<int>(i)];
      const double ratio = std::exp(logp_new - resp.logp_old);
      const double clipped =
          std::clamp(ratio, 1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon);
      const double unclipped_term = ratio * advantage;
      const double clipped_term = clipped * advantage;
      surrogate_sum += std::min(unclipped_term, clipped_term);

      Eigen::VectorXd grad_logp = outcome_grad_log_prob(fwd, resp.outcome);
      // Stop-gradient at the clip boundary: a strictly smaller clipped branch
      // means the ratio sits outside the band, so the term is constant.
      if (unclipped_term <= clipped_term)
        out.gradient -= unclipped_term * grad_logp;

      if (cfg.kl_mode == KlMode::ExactFactored) {
        kl_sum += kl_group;
        out.gradient += cfg.kl_weight * kl_group_grad;
      } else {
        const double delta = resp.logp_ref - logp_new;
        kl_sum += std::max(0.0, std::expm1(delta) - delta);
        out.gradient += cfg.kl_weight * (1.0 - std::exp(delta)) * grad_logp;
      }
      ++included;
    }
  }

  out.considered = included;
  if (included == 0) return out;  // nothing to score; zero loss and gradient
  out.mean_surrogate = surrogate_sum / included;
  out.mean_kl = kl_sum / included;
  out.loss = -out.mean_surrogate + cfg.kl_weight * out.mean_kl;
  out.gradient /= included;
  return out;
}

}  // namespace evigrpo
