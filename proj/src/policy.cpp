#include "evigrpo/policy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "evigrpo/synth.hpp"

namespace evigrpo {

namespace {

constexpr const char* kThinkTemplate =
    "I scan each page for the keys named in the question, mark the pages that "
    "contain them, and answer from those facts.";

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double clamp_logit(double z) { return std::clamp(z, -kLogitClamp, kLogitClamp); }

Eigen::VectorXd softmax(const Eigen::VectorXd& scores) {
  Eigen::VectorXd out = (scores.array() - scores.maxCoeff()).exp();
  return out / out.sum();
}

// log prod_j (1 - p_j) computed in log space.
double log_q_all_false(const Eigen::VectorXd& page_probs) {
  double acc = 0.0;
  for (int j = 0; j < page_probs.size(); ++j) acc += std::log1p(-page_probs[j]);
  return acc;
}

}  // namespace

PolicyParams::PolicyParams(int page_dim, int answer_slots, double temperature)
    : page_dim_(page_dim), answer_slots_(answer_slots), temperature_(temperature) {
  if (page_dim < 1 || answer_slots < 1)
    throw std::invalid_argument("PolicyParams: non-positive dimensions");
  set_temperature(temperature);
  theta_ = Eigen::VectorXd::Zero(page_dim_ + answer_slots_ * page_dim_);
}

void PolicyParams::set_temperature(double t) {
  if (!(t > 0)) throw std::invalid_argument("PolicyParams: temperature must be positive");
  temperature_ = t;
}

Eigen::Map<Eigen::VectorXd> PolicyParams::page_weights() {
  return {theta_.data(), page_dim_};
}
Eigen::Map<const Eigen::VectorXd> PolicyParams::page_weights() const {
  return {theta_.data(), page_dim_};
}
Eigen::Map<Eigen::MatrixXd> PolicyParams::answer_weights() {
  return {theta_.data() + page_dim_, answer_slots_, page_dim_};
}
Eigen::Map<const Eigen::MatrixXd> PolicyParams::answer_weights() const {
  return {theta_.data() + page_dim_, answer_slots_, page_dim_};
}

void randomize(PolicyParams& params, uint64_t seed, double scale) {
  Rng rng(hash_mix({seed, 0x117175ull}));
  for (int i = 0; i < params.size(); ++i) params.flat()[i] = scale * rng.normal();
}

Eigen::MatrixXd page_features(const QASample& sample, const SyntheticDocument& doc) {
  const int n = doc.page_count();
  Eigen::MatrixXd f = Eigen::MatrixXd::Zero(n, kPageFeatureDim);
  std::vector<std::string> keys;
  if (auto q = parse_question(sample.question)) keys = q->keys;
  for (int j = 0; j < n; ++j) {
    int overlap = 0;
    for (const Fact& fact : doc.pages[j])
      overlap += static_cast<int>(std::count(keys.begin(), keys.end(), fact.key));
    f(j, 0) = overlap;
    f(j, 1) = static_cast<double>(doc.pages[j].size()) / 4.0;
    f(j, 2) = static_cast<double>(j + 1) / static_cast<double>(n);
    f(j, 3) = 1.0;
  }
  return f;
}

SampleContext make_context(const QASample& sample, const SyntheticDocument& doc) {
  SampleContext ctx;
  ctx.page_count = doc.page_count();
  ctx.page_features = page_features(sample, doc);

  // Candidate answers: unique fact values in first-occurrence order, then yes/no.
  for (const auto& page : doc.pages)
    for (const Fact& fact : page)
      if (ctx.candidate_index.emplace(fact.value, ctx.candidates.size()).second)
        ctx.candidates.push_back(fact.value);
  for (const char* word : {"yes", "no"})
    if (ctx.candidate_index.emplace(word, ctx.candidates.size()).second)
      ctx.candidates.push_back(word);

  const int k_count = static_cast<int>(ctx.candidates.size());
  ctx.answer_features.assign(
      k_count, Eigen::MatrixXd::Zero(kAnswerSlots, kPageFeatureDim));

  // Slot 0: page features aggregated over occurrences of the candidate value.
  for (int j = 0; j < ctx.page_count; ++j)
    for (const Fact& fact : doc.pages[j])
      ctx.answer_features[ctx.candidate_index[fact.value]].row(0) +=
          ctx.page_features.row(j);

  const auto parsed = parse_question(sample.question);
  auto locate = [&](const std::string& key) -> std::pair<int, const Fact*> {
    for (int j = 0; j < ctx.page_count; ++j)
      for (const Fact& fact : doc.pages[j])
        if (fact.key == key) return {j, &fact};
    return {-1, nullptr};
  };

  if (parsed && parsed->type == ParsedQuestion::Type::Lookup) {
    // Slot 1: features of the page whose queried key carries this value.
    auto [j, fact] = locate(parsed->keys[0]);
    if (fact != nullptr)
      ctx.answer_features[ctx.candidate_index[fact->value]].row(1) +=
          ctx.page_features.row(j);
  } else if (parsed && parsed->type == ParsedQuestion::Type::Comparison) {
    // Slot 2: +mean page features on the equality-consistent yes/no, - on the other.
    auto [j1, f1] = locate(parsed->keys[0]);
    auto [j2, f2] = locate(parsed->keys[1]);
    if (f1 != nullptr && f2 != nullptr) {
      Eigen::RowVectorXd mean = ctx.page_features.colwise().mean();
      const bool equal = f1->value == f2->value;
      ctx.answer_features[ctx.candidate_index[equal ? "yes" : "no"]].row(2) += mean;
      ctx.answer_features[ctx.candidate_index[equal ? "no" : "yes"]].row(2) -= mean;
    }
  }

  if (!sample.gold_answers.empty()) {
    auto it = ctx.candidate_index.find(sample.gold_answers[0]);
    if (it != ctx.candidate_index.end()) ctx.gold_candidate = it->second;
  }
  return ctx;
}

JudgmentSupport support_for(PsfKind psf) {
  switch (psf) {
    case PsfKind::IndicesList: return JudgmentSupport::NonEmpty;
    case PsfKind::JudgmentsWithCount:
    case PsfKind::JudgmentsInferCount: return JudgmentSupport::Free;
    case PsfKind::NoEvidence: return JudgmentSupport::None;
  }
  return JudgmentSupport::Free;
}

namespace {

struct RawScores {
  Eigen::VectorXd page_raw;    // pre-clamp page logits
  Eigen::VectorXd page_z;      // clamped
  Eigen::VectorXd answer_raw;  // pre-clamp answer scores
  Eigen::VectorXd answer_s;    // clamped
};

RawScores compute_scores(const PolicyParams& params, const SampleContext& ctx) {
  if (ctx.page_features.cols() != params.page_dim())
    throw std::invalid_argument("policy: feature dim mismatch");
  RawScores out;
  const double t = params.temperature();
  out.page_raw = ctx.page_features * params.page_weights() / t;
  out.page_z = out.page_raw.unaryExpr(&clamp_logit);
  const int k_count = static_cast<int>(ctx.candidates.size());
  out.answer_raw.resize(k_count);
  for (int k = 0; k < k_count; ++k)
    out.answer_raw[k] =
        params.answer_weights().cwiseProduct(ctx.answer_features[k]).sum() / t;
  out.answer_s = out.answer_raw.unaryExpr(&clamp_logit);
  return out;
}

}  // namespace

FactoredDist distribution(const PolicyParams& params, const SampleContext& ctx,
                          PsfKind psf) {
  RawScores scores = compute_scores(params, ctx);
  FactoredDist dist;
  dist.page_probs = scores.page_z.unaryExpr([](double z) { return sigmoid(z); });
  dist.answer_probs = softmax(scores.answer_s);
  dist.support = support_for(psf);
  return dist;
}

FactoredDist distribution(const PolicyParams& params, const QASample& sample,
                          const SyntheticDocument& doc, PsfKind psf) {
  return distribution(params, make_context(sample, doc), psf);
}

double outcome_log_prob(const FactoredDist& dist, const FactoredOutcome& outcome) {
  const int k_count = static_cast<int>(dist.answer_probs.size());
  if (outcome.answer_index < 0 || outcome.answer_index >= k_count) return kNegInf;

  double logp = std::log(dist.answer_probs[outcome.answer_index]);
  if (dist.support == JudgmentSupport::None)
    return outcome.judgments.empty() ? logp : kNegInf;

  if (static_cast<int>(outcome.judgments.size()) != dist.page_probs.size())
    return kNegInf;
  bool any_true = false;
  for (size_t j = 0; j < outcome.judgments.size(); ++j) {
    const double p = dist.page_probs[static_cast<int>(j)];
    logp += outcome.judgments[j] ? std::log(p) : std::log1p(-p);
    any_true = any_true || outcome.judgments[j];
  }
  if (dist.support == JudgmentSupport::NonEmpty) {
    if (!any_true) return kNegInf;
    // minus log(1 - prod(1-p_j)), computed as -log(-expm1(sum log1p(-p)))
    logp -= std::log(-std::expm1(log_q_all_false(dist.page_probs)));
  }
  return logp;
}

std::optional<FactoredOutcome> response_outcome(const SampleContext& ctx,
                                                const StructuredResponse& resp,
                                                PsfKind psf) {
  FactoredOutcome out;
  auto it = ctx.candidate_index.find(resp.answer);
  if (it == ctx.candidate_index.end()) return std::nullopt;
  out.answer_index = it->second;

  if (psf == PsfKind::NoEvidence) {
    if (resp.evidence.has_value()) return std::nullopt;
    return out;
  }
  if (!resp.evidence.has_value()) return std::nullopt;
  const EvidenceJudgment& ev = *resp.evidence;

  if (psf == PsfKind::IndicesList) {
    if (!ev.is_indices_list() || ev.predicted_set.empty()) return std::nullopt;
    out.judgments.assign(ctx.page_count, false);
    for (int page : ev.predicted_set) {
      if (page < 1 || page > ctx.page_count) return std::nullopt;
      out.judgments[page - 1] = true;
    }
    return out;
  }

  if (ev.is_indices_list()) return std::nullopt;
  if (static_cast<int>(ev.judgments.size()) != ctx.page_count) return std::nullopt;
  out.judgments = ev.judgments;
  return out;
}

namespace {

StructuredResponse response_from_outcome(const SampleContext& ctx,
                                         const FactoredOutcome& outcome,
                                         PsfKind psf) {
  StructuredResponse resp;
  resp.think = kThinkTemplate;
  resp.answer = ctx.candidates[outcome.answer_index];
  if (psf == PsfKind::NoEvidence) return resp;

  EvidenceJudgment ev;
  if (psf == PsfKind::IndicesList) {
    for (size_t j = 0; j < outcome.judgments.size(); ++j)
      if (outcome.judgments[j]) ev.predicted_set.insert(static_cast<int>(j) + 1);
  } else {
    ev.judgments = outcome.judgments;
    ev.predicted_count = static_cast<int>(outcome.judgments.size());
    for (size_t j = 0; j < outcome.judgments.size(); ++j)
      if (outcome.judgments[j]) ev.predicted_set.insert(static_cast<int>(j) + 1);
  }
  resp.evidence = std::move(ev);
  return resp;
}

}  // namespace

SampleDraw sample_response(const PolicyParams& params, const SampleContext& ctx,
                           PsfKind psf, Rng& rng) {
  FactoredDist dist = distribution(params, ctx, psf);
  FactoredOutcome outcome;

  if (dist.support != JudgmentSupport::None) {
    const int n = static_cast<int>(dist.page_probs.size());
    outcome.judgments.assign(n, false);
    if (dist.support == JudgmentSupport::Free) {
      for (int j = 0; j < n; ++j) outcome.judgments[j] = rng.bernoulli(dist.page_probs[j]);
    } else {
      // Exact sequential draw from the product conditioned on >= one true:
      // while the prefix is all false, P(y_j=1 | nonempty) = p_j / (1 - suffixQ_j).
      std::vector<double> suffix_q(n + 1, 1.0);
      for (int j = n - 1; j >= 0; --j)
        suffix_q[j] = suffix_q[j + 1] * (1.0 - dist.page_probs[j]);
      bool any_true = false;
      for (int j = 0; j < n; ++j) {
        const double p = dist.page_probs[j];
        if (any_true)
          outcome.judgments[j] = rng.bernoulli(p);
        else
          outcome.judgments[j] = rng.uniform() < p / (1.0 - suffix_q[j]);
        any_true = any_true || outcome.judgments[j];
      }
    }
  }

  // Inverse-CDF categorical draw.
  const double x = rng.uniform();
  double acc = 0.0;
  outcome.answer_index = static_cast<int>(dist.answer_probs.size()) - 1;
  for (int k = 0; k < dist.answer_probs.size(); ++k) {
    acc += dist.answer_probs[k];
    if (x < acc) {
      outcome.answer_index = k;
      break;
    }
  }

  SampleDraw draw;
  draw.outcome = outcome;
  draw.logp = outcome_log_prob(dist, outcome);
  draw.raw = render_response(response_from_outcome(ctx, outcome, psf), psf);
  return draw;
}

double log_prob(const PolicyParams& params, const SampleContext& ctx,
                const StructuredResponse& resp, PsfKind psf) {
  std::optional<FactoredOutcome> outcome = response_outcome(ctx, resp, psf);
  if (!outcome.has_value()) return kNegInf;
  return outcome_log_prob(distribution(params, ctx, psf), *outcome);
}

double log_prob(const PolicyParams& params, const QASample& sample,
                const SyntheticDocument& doc, const StructuredResponse& resp,
                PsfKind psf) {
  return log_prob(params, make_context(sample, doc), resp, psf);
}

PolicyForward forward(const PolicyParams& params, const SampleContext& ctx,
                      PsfKind psf) {
  RawScores scores = compute_scores(params, ctx);
  const int n = static_cast<int>(scores.page_z.size());
  const int k_count = static_cast<int>(scores.answer_s.size());
  const int p_total = params.size();
  const int page_dim = params.page_dim();
  const double t = params.temperature();

  PolicyForward fwd;
  fwd.dist.page_probs = scores.page_z.unaryExpr([](double z) { return sigmoid(z); });
  fwd.dist.answer_probs = softmax(scores.answer_s);
  fwd.dist.support = support_for(psf);
  fwd.page_logits = scores.page_z;

  fwd.page_logit_grads = Eigen::MatrixXd::Zero(n, p_total);
  for (int j = 0; j < n; ++j)
    if (std::abs(scores.page_raw[j]) <= kLogitClamp)
      fwd.page_logit_grads.row(j).head(page_dim) = ctx.page_features.row(j) / t;

  fwd.answer_score_grads = Eigen::MatrixXd::Zero(k_count, p_total);
  const int tail = params.answer_slots() * page_dim;
  for (int k = 0; k < k_count; ++k)
    if (std::abs(scores.answer_raw[k]) <= kLogitClamp)
      fwd.answer_score_grads.row(k).tail(tail) =
          Eigen::Map<const Eigen::VectorXd>(ctx.answer_features[k].data(), tail) / t;

  return fwd;
}

Eigen::VectorXd outcome_grad_log_prob(const PolicyForward& fwd,
                                      const FactoredOutcome& outcome) {
  const int p_total = static_cast<int>(fwd.page_logit_grads.cols());
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(p_total);
  if (!std::isfinite(outcome_log_prob(fwd.dist, outcome))) return grad;

  // d log softmax_k / d theta = row_k - E_q[row]
  grad += fwd.answer_score_grads.row(outcome.answer_index).transpose();
  grad -= fwd.answer_score_grads.transpose() * fwd.dist.answer_probs;

  if (fwd.dist.support == JudgmentSupport::None) return grad;

  const int n = static_cast<int>(fwd.dist.page_probs.size());
  Eigen::VectorXd residual(n);
  for (int j = 0; j < n; ++j)
    residual[j] = (outcome.judgments[j] ? 1.0 : 0.0) - fwd.dist.page_probs[j];
  grad += fwd.page_logit_grads.transpose() * residual;

  if (fwd.dist.support == JudgmentSupport::NonEmpty) {
    // d(-log(1-Q))/dz_j = -p_j Q / (1-Q),  Q = prod(1-p)
    const double log_q = log_q_all_false(fwd.dist.page_probs);
    const double q_over_t = std::exp(log_q) / (-std::expm1(log_q));
    grad -= q_over_t * (fwd.page_logit_grads.transpose() * fwd.dist.page_probs);
  }
  return grad;
}

Eigen::VectorXd grad_log_prob(const PolicyParams& params, const SampleContext& ctx,
                              const FactoredOutcome& outcome, PsfKind psf) {
  return outcome_grad_log_prob(forward(params, ctx, psf), outcome);
}

SampleDraw greedy_response(const PolicyParams& params, const SampleContext& ctx,
                           PsfKind psf) {
  FactoredDist dist = distribution(params, ctx, psf);
  FactoredOutcome outcome;
  if (dist.support != JudgmentSupport::None) {
    const int n = static_cast<int>(dist.page_probs.size());
    outcome.judgments.assign(n, false);
    for (int j = 0; j < n; ++j) outcome.judgments[j] = dist.page_probs[j] >= 0.5;
    if (dist.support == JudgmentSupport::NonEmpty &&
        std::none_of(outcome.judgments.begin(), outcome.judgments.end(),
                     [](bool b) { return b; })) {
      int best = 0;
      for (int j = 1; j < n; ++j)
        if (dist.page_probs[j] > dist.page_probs[best]) best = j;
      outcome.judgments[best] = true;
    }
  }
  int best_k = 0;
  for (int k = 1; k < dist.answer_probs.size(); ++k)
    if (dist.answer_probs[k] > dist.answer_probs[best_k]) best_k = k;
  outcome.answer_index = best_k;

  SampleDraw draw;
  draw.outcome = outcome;
  draw.logp = outcome_log_prob(dist, outcome);
  draw.raw = render_response(response_from_outcome(ctx, outcome, psf), psf);
  return draw;
}

void save_checkpoint(const PolicyParams& params, const std::string& dir,
                     uint64_t seed) {
  nlohmann::ordered_json header;
  header["page_dim"] = params.page_dim();
  header["answer_slots"] = params.answer_slots();
  header["temperature"] = params.temperature();
  header["seed"] = seed;
  header["param_count"] = params.size();
  std::ofstream js(dir + "/checkpoint.json", std::ios::binary);
  if (!js) throw std::runtime_error("save_checkpoint: cannot write to " + dir);
  js << header.dump(2) << "\n";

  std::ofstream bin(dir + "/checkpoint.bin", std::ios::binary);
  bin.write(reinterpret_cast<const char*>(params.flat().data()),
            static_cast<std::streamsize>(sizeof(double) * params.size()));
}

PolicyParams load_checkpoint(const std::string& dir) {
  std::ifstream js(dir + "/checkpoint.json", std::ios::binary);
  if (!js) throw std::runtime_error("load_checkpoint: missing checkpoint.json in " + dir);
  nlohmann::json header = nlohmann::json::parse(js);
  PolicyParams params(header.at("page_dim").get<int>(),
                      header.at("answer_slots").get<int>(),
                      header.at("temperature").get<double>());
  const int count = header.at("param_count").get<int>();
  if (count != params.size())
    throw std::runtime_error("load_checkpoint: inconsistent param_count");
  std::ifstream bin(dir + "/checkpoint.bin", std::ios::binary);
  if (!bin) throw std::runtime_error("load_checkpoint: missing checkpoint.bin in " + dir);
  bin.read(reinterpret_cast<char*>(params.flat().data()),
           static_cast<std::streamsize>(sizeof(double) * params.size()));
  if (bin.gcount() != static_cast<std::streamsize>(sizeof(double) * params.size()))
    throw std::runtime_error("load_checkpoint: truncated checkpoint.bin");
  return params;
}

}  // namespace evigrpo
