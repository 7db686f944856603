#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "evigrpo/policy.hpp"
#include "evigrpo/psf.hpp"

using namespace evigrpo;

namespace {

// Two pages, two distinct values; candidates come out as
// [val001, val002, yes, no] so the uniform answer prob is exactly 1/4.
CorpusEntry lookup_entry() {
  CorpusEntry e;
  e.doc.doc_id = "d0";
  e.doc.pages = {{{"alpha", "val001"}, {"beta", "val002"}},
                 {{"gamma", "val001"}}};
  e.sample.sample_id = "s0";
  e.sample.question = "What is the value of alpha?";
  e.sample.page_count = 2;
  e.sample.gold_answers = {"val001"};
  e.sample.gold_evidence = {1};
  e.sample.hops = 1;
  e.sample.category = "factual";
  return e;
}

CorpusEntry comparison_entry() {
  CorpusEntry e = lookup_entry();
  e.sample.question = "Do alpha and gamma have equal values?";
  e.sample.gold_answers = {"yes"};
  e.sample.gold_evidence = {1, 2};
  e.sample.hops = 2;
  e.sample.category = "comparison";
  return e;
}

std::filesystem::path fresh_dir(const char* name) {
  auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("parameter vector layout and views") {
  PolicyParams params;
  CHECK(params.page_dim() == kPageFeatureDim);
  CHECK(params.answer_slots() == kAnswerSlots);
  CHECK(params.size() == kPageFeatureDim + kAnswerSlots * kPageFeatureDim);
  CHECK(params.temperature() == 1.0);

  for (int i = 0; i < params.size(); ++i) params.flat()[i] = i;
  CHECK(params.page_weights()[0] == 0.0);
  CHECK(params.page_weights()[3] == 3.0);
  // answer_weights is column-major over the tail: (slot, feature).
  CHECK(params.answer_weights()(0, 0) == 4.0);
  CHECK(params.answer_weights()(2, 0) == 6.0);
  CHECK(params.answer_weights()(0, 1) == 7.0);
  CHECK(params.answer_weights()(2, 3) == 15.0);

  params.page_weights()[1] = -5.0;
  CHECK(params.flat()[1] == -5.0);

  CHECK_THROWS_AS(PolicyParams(0, 3), std::invalid_argument);
  CHECK_THROWS_AS(PolicyParams(4, 0), std::invalid_argument);
  CHECK_THROWS_AS(PolicyParams(4, 3, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(params.set_temperature(-1.0), std::invalid_argument);
}

TEST_CASE("randomize is seeded and scale-linear") {
  PolicyParams a, b, c, zero;
  randomize(a, 7, 0.1);
  randomize(b, 7, 0.1);
  randomize(c, 8, 0.1);
  randomize(zero, 7, 0.0);
  CHECK(a.flat() == b.flat());
  CHECK(a.flat() != c.flat());
  CHECK(zero.flat().isZero(0.0));
  PolicyParams doubled;
  randomize(doubled, 7, 0.2);
  CHECK((doubled.flat() - 2.0 * a.flat()).lpNorm<Eigen::Infinity>() < 1e-15);
}

TEST_CASE("checkpoint round trip is bit-exact") {
  auto dir = fresh_dir("evigrpo_ckpt_test");
  PolicyParams params(4, 3, 1.5);
  randomize(params, 99, 0.4);
  save_checkpoint(params, dir.string(), 99);

  PolicyParams back = load_checkpoint(dir.string());
  CHECK(back.page_dim() == 4);
  CHECK(back.answer_slots() == 3);
  CHECK(back.temperature() == 1.5);
  CHECK(back.flat() == params.flat());

  SUBCASE("truncated weights are rejected") {
    std::filesystem::resize_file(dir / "checkpoint.bin", 8);
    CHECK_THROWS_AS(load_checkpoint(dir.string()), std::runtime_error);
  }
  SUBCASE("missing header is rejected") {
    std::filesystem::remove(dir / "checkpoint.json");
    CHECK_THROWS_AS(load_checkpoint(dir.string()), std::runtime_error);
  }
  SUBCASE("inconsistent param_count is rejected") {
    std::ofstream js(dir / "checkpoint.json");
    js << R"({"page_dim":4,"answer_slots":3,"temperature":1.5,"seed":99,"param_count":5})";
    js.close();
    CHECK_THROWS_AS(load_checkpoint(dir.string()), std::runtime_error);
  }
}

TEST_CASE("page features: overlap, density, position, bias") {
  CorpusEntry e = lookup_entry();
  Eigen::MatrixXd f = page_features(e.sample, e.doc);
  REQUIRE(f.rows() == 2);
  REQUIRE(f.cols() == kPageFeatureDim);
  CHECK(f(0, 0) == 1.0);   // "alpha" lives on page 1
  CHECK(f(1, 0) == 0.0);
  CHECK(f(0, 1) == 0.5);   // two facts / 4
  CHECK(f(1, 1) == 0.25);
  CHECK(f(0, 2) == 0.5);   // position 1/2
  CHECK(f(1, 2) == 1.0);
  CHECK(f(0, 3) == 1.0);
  CHECK(f(1, 3) == 1.0);

  // Both queried keys light up for the comparison question.
  CorpusEntry c = comparison_entry();
  Eigen::MatrixXd g = page_features(c.sample, c.doc);
  CHECK(g(0, 0) == 1.0);
  CHECK(g(1, 0) == 1.0);
}

TEST_CASE("context: candidate list, gold index, answer features") {
  CorpusEntry e = lookup_entry();
  SampleContext ctx = make_context(e.sample, e.doc);
  REQUIRE(ctx.candidates.size() == 4);
  CHECK(ctx.candidates[0] == "val001");
  CHECK(ctx.candidates[1] == "val002");
  CHECK(ctx.candidates[2] == "yes");
  CHECK(ctx.candidates[3] == "no");
  CHECK(ctx.gold_candidate == 0);
  CHECK(ctx.page_count == 2);

  // Slot 0 aggregates the pages carrying each value; slot 1 marks the value
  // held by the queried key; slot 2 stays zero for lookups.
  Eigen::MatrixXd f = page_features(e.sample, e.doc);
  CHECK((ctx.answer_features[0].row(0) - (f.row(0) + f.row(1))).isZero(0.0));
  CHECK((ctx.answer_features[1].row(0) - f.row(0)).isZero(0.0));
  CHECK(ctx.answer_features[2].row(0).isZero(0.0));
  CHECK((ctx.answer_features[0].row(1) - f.row(0)).isZero(0.0));
  CHECK(ctx.answer_features[1].row(1).isZero(0.0));
  for (const auto& af : ctx.answer_features) CHECK(af.row(2).isZero(0.0));
}

TEST_CASE("context: comparison polarity pushes yes/no apart") {
  CorpusEntry e = comparison_entry();  // alpha == gamma == val001
  SampleContext ctx = make_context(e.sample, e.doc);
  CHECK(ctx.gold_candidate == 2);  // "yes"
  Eigen::RowVectorXd mean = ctx.page_features.colwise().mean();
  CHECK((ctx.answer_features[2].row(2) - mean).isZero(0.0));
  CHECK((ctx.answer_features[3].row(2) + mean).isZero(0.0));
  CHECK(ctx.answer_features[0].row(2).isZero(0.0));
}

TEST_CASE("zero parameters give the uniform factored distribution") {
  CorpusEntry e = lookup_entry();
  SampleContext ctx = make_context(e.sample, e.doc);
  PolicyParams params;  // zeros

  FactoredDist dist = distribution(params, ctx, PsfKind::JudgmentsInferCount);
  REQUIRE(dist.page_probs.size() == 2);
  CHECK(dist.page_probs[0] == 0.5);
  CHECK(dist.page_probs[1] == 0.5);
  REQUIRE(dist.answer_probs.size() == 4);
  for (int k = 0; k < 4; ++k) CHECK(dist.answer_probs[k] == doctest::Approx(0.25).epsilon(1e-15));

  FactoredOutcome outcome;
  outcome.judgments = {true, false};
  outcome.answer_index = 0;
  // ln(1/4) + 2 ln(1/2)
  CHECK(outcome_log_prob(dist, outcome) ==
        doctest::Approx(-2.772588722239781).epsilon(1e-14));
}

TEST_CASE("outcome_log_prob support boundaries") {
  CorpusEntry e = lookup_entry();
  SampleContext ctx = make_context(e.sample, e.doc);
  PolicyParams params;
  randomize(params, 3, 0.3);

  FactoredOutcome outcome;
  outcome.judgments = {true, false};
  outcome.answer_index = 1;

  SUBCASE("judgment count must match the page count") {
    FactoredDist dist = distribution(params, ctx, PsfKind::JudgmentsInferCount);
    FactoredOutcome bad = outcome;
    bad.judgments = {true};
    CHECK(outcome_log_prob(dist, bad) == kNegInf);
  }
  SUBCASE("answer index must be in range") {
    FactoredDist dist = distribution(params, ctx, PsfKind::JudgmentsInferCount);
    FactoredOutcome bad = outcome;
    bad.answer_index = 4;
    CHECK(outcome_log_prob(dist, bad) == kNegInf);
    bad.answer_index = -1;
    CHECK(outcome_log_prob(dist, bad) == kNegInf);
  }
  SUBCASE("no-evidence support wants empty judgments") {
    FactoredDist dist = distribution(params, ctx, PsfKind::NoEvidence);
    CHECK(outcome_log_prob(dist, outcome) == kNegInf);
    FactoredOutcome ok;
    ok.answer_index = 1;
    CHECK(std::isfinite(outcome_log_prob(dist, ok)));
  }
  SUBCASE("nonempty support renormalizes by 1 - prod(1-p)") {
    FactoredDist free_dist = distribution(params, ctx, PsfKind::JudgmentsInferCount);
    FactoredDist trunc = distribution(params, ctx, PsfKind::IndicesList);
    FactoredOutcome none = outcome;
    none.judgments = {false, false};
    CHECK(outcome_log_prob(trunc, none) == kNegInf);
    double q = (1.0 - free_dist.page_probs[0]) * (1.0 - free_dist.page_probs[1]);
    CHECK(outcome_log_prob(trunc, outcome) ==
          doctest::Approx(outcome_log_prob(free_dist, outcome) - std::log1p(-q))
              .epsilon(1e-12));
  }
}

TEST_CASE("response_outcome maps text space onto the outcome space") {
  CorpusEntry e = lookup_entry();
  SampleContext ctx = make_context(e.sample, e.doc);

  StructuredResponse resp;
  resp.think = "t";
  resp.answer = "val002";
  EvidenceJudgment ev;
  ev.judgments = {false, true};
  ev.predicted_count = 2;
  ev.predicted_set = {2};
  resp.evidence = ev;

  auto mapped = response_outcome(ctx, resp, PsfKind::JudgmentsInferCount);
  REQUIRE(mapped.has_value());
  CHECK(mapped->answer_index == 1);
  CHECK(mapped->judgments == std::vector<bool>{false, true});

  SUBCASE("unknown answer text") {
    resp.answer = "val999";
    CHECK_FALSE(response_outcome(ctx, resp, PsfKind::JudgmentsInferCount).has_value());
  }
  SUBCASE("judgment count mismatch") {
    resp.evidence->judgments = {true};
    CHECK_FALSE(response_outcome(ctx, resp, PsfKind::JudgmentsInferCount).has_value());
  }
  SUBCASE("indices list variant") {
    EvidenceJudgment idx;
    idx.predicted_set = {1, 2};
    resp.evidence = idx;
    auto got = response_outcome(ctx, resp, PsfKind::IndicesList);
    REQUIRE(got.has_value());
    CHECK(got->judgments == std::vector<bool>{true, true});
    // judgments payload is not an indices list
    CHECK_FALSE(response_outcome(ctx, resp, PsfKind::JudgmentsInferCount).has_value());
  }
  SUBCASE("indices out of range") {
    EvidenceJudgment idx;
    idx.predicted_set = {3};
    resp.evidence = idx;
    CHECK_FALSE(response_outcome(ctx, resp, PsfKind::IndicesList).has_value());
  }
  SUBCASE("empty indices list") {
    EvidenceJudgment idx;
    resp.evidence = idx;
    CHECK_FALSE(response_outcome(ctx, resp, PsfKind::IndicesList).has_value());
  }
  SUBCASE("no-evidence format rejects evidence and vice versa") {
    CHECK_FALSE(response_outcome(ctx, resp, PsfKind::NoEvidence).has_value());
    StructuredResponse bare;
    bare.think = "t";
    bare.answer = "yes";
    auto got = response_outcome(ctx, bare, PsfKind::NoEvidence);
    REQUIRE(got.has_value());
    CHECK(got->judgments.empty());
    CHECK(got->answer_index == 2);
    CHECK_FALSE(response_outcome(ctx, bare, PsfKind::JudgmentsInferCount).has_value());
  }
}

TEST_CASE("sampled responses parse and report their own log-prob") {
  CorpusEntry e = comparison_entry();
  SampleContext ctx = make_context(e.sample, e.doc);
  PolicyParams params;
  randomize(params, 11, 0.5);

  for (PsfKind psf : {PsfKind::IndicesList, PsfKind::JudgmentsWithCount,
                      PsfKind::JudgmentsInferCount, PsfKind::NoEvidence}) {
    CAPTURE(psf_name(psf));
    Rng rng(hash_mix({42, static_cast<uint64_t>(psf)}));
    for (int i = 0; i < 50; ++i) {
      SampleDraw draw = sample_response(params, ctx, psf, rng);
      ParseResult parsed = parse_response(draw.raw, psf);
      REQUIRE(parsed.ok());
      CHECK(std::isfinite(draw.logp));
      CHECK(log_prob(params, ctx, parsed.response, psf) ==
            doctest::Approx(draw.logp).epsilon(1e-12));
    }
    Rng replay(hash_mix({42, static_cast<uint64_t>(psf)}));
    CHECK(sample_response(params, ctx, psf, replay).raw ==
          [&] {
            Rng again(hash_mix({42, static_cast<uint64_t>(psf)}));
            return sample_response(params, ctx, psf, again).raw;
          }());
  }
}

TEST_CASE("truncated sampling matches the nonempty-product marginals") {
  CorpusEntry e = lookup_entry();
  SampleContext ctx = make_context(e.sample, e.doc);
  PolicyParams params;
  randomize(params, 5, 0.6);
  FactoredDist dist = distribution(params, ctx, PsfKind::IndicesList);

  const int draws = 20000;
  Rng rng(123);
  Eigen::Vector2d freq = Eigen::Vector2d::Zero();
  for (int i = 0; i < draws; ++i) {
    SampleDraw d = sample_response(params, ctx, PsfKind::IndicesList, rng);
    bool any = false;
    for (size_t j = 0; j < d.outcome.judgments.size(); ++j) {
      if (d.outcome.judgments[j]) freq[static_cast<int>(j)] += 1.0;
      any = any || d.outcome.judgments[j];
    }
    REQUIRE(any);  // all-false is outside the support
  }
  freq /= draws;
  double t = 1.0 - (1.0 - dist.page_probs[0]) * (1.0 - dist.page_probs[1]);
  for (int j = 0; j < 2; ++j)
    CHECK(freq[j] == doctest::Approx(dist.page_probs[j] / t).epsilon(0.03));
}

TEST_CASE("grad_log_prob matches central finite differences") {
  CorpusEntry entries[2] = {lookup_entry(), comparison_entry()};
  const double h = 1e-6;
  for (PsfKind psf : {PsfKind::IndicesList, PsfKind::JudgmentsWithCount,
                      PsfKind::JudgmentsInferCount, PsfKind::NoEvidence}) {
    for (int trial = 0; trial < 6; ++trial) {
      CAPTURE(psf_name(psf));
      CAPTURE(trial);
      const CorpusEntry& e = entries[trial % 2];
      SampleContext ctx = make_context(e.sample, e.doc);
      PolicyParams params;
      randomize(params, 100 + trial, 0.4);
      Rng rng(hash_mix({7, static_cast<uint64_t>(trial), static_cast<uint64_t>(psf)}));
      FactoredOutcome outcome = sample_response(params, ctx, psf, rng).outcome;

      Eigen::VectorXd analytic = grad_log_prob(params, ctx, outcome, psf);
      for (int i = 0; i < params.size(); ++i) {
        PolicyParams plus = params, minus = params;
        plus.flat()[i] += h;
        minus.flat()[i] -= h;
        double fd = (outcome_log_prob(distribution(plus, ctx, psf), outcome) -
                     outcome_log_prob(distribution(minus, ctx, psf), outcome)) /
                    (2 * h);
        CHECK(analytic[i] == doctest::Approx(fd).epsilon(1e-5));
      }
    }
  }
}

TEST_CASE("clamped logits freeze their gradient block") {
  CorpusEntry e = lookup_entry();
  SampleContext ctx = make_context(e.sample, e.doc);
  PolicyParams params;
  params.page_weights()[3] = 100.0;  // bias feature is 1 -> raw logit 100 > clamp

  FactoredDist dist = distribution(params, ctx, PsfKind::JudgmentsInferCount);
  CHECK(dist.page_probs[0] == doctest::Approx(1.0 / (1.0 + std::exp(-30.0))).epsilon(1e-15));

  Rng rng(9);
  FactoredOutcome outcome = sample_response(params, ctx, PsfKind::JudgmentsInferCount, rng).outcome;
  Eigen::VectorXd grad = grad_log_prob(params, ctx, outcome, PsfKind::JudgmentsInferCount);
  CHECK(grad.head(kPageFeatureDim).isZero(0.0));
}

TEST_CASE("grad_log_prob is zero outside the support") {
  CorpusEntry e = lookup_entry();
  SampleContext ctx = make_context(e.sample, e.doc);
  PolicyParams params;
  randomize(params, 13, 0.3);
  FactoredOutcome none;
  none.judgments = {false, false};
  none.answer_index = 0;
  CHECK(grad_log_prob(params, ctx, none, PsfKind::IndicesList).isZero(0.0));
}

TEST_CASE("greedy decode thresholds pages and argmaxes the answer") {
  CorpusEntry e = lookup_entry();
  SampleContext ctx = make_context(e.sample, e.doc);

  SUBCASE("zero params: probs sit exactly on the 0.5 threshold") {
    PolicyParams params;
    SampleDraw draw = greedy_response(params, ctx, PsfKind::JudgmentsInferCount);
    CHECK(draw.outcome.judgments == std::vector<bool>{true, true});
    CHECK(draw.outcome.answer_index == 0);  // ties break to the first candidate
    CHECK(parse_response(draw.raw, PsfKind::JudgmentsInferCount).ok());
  }
  SUBCASE("all-below-threshold under the indices format keeps the best page") {
    PolicyParams params;
    params.page_weights()[3] = -2.0;   // both logits negative
    params.page_weights()[0] = 1.0;    // page 1 (overlap 1) is less negative
    SampleDraw draw = greedy_response(params, ctx, PsfKind::IndicesList);
    CHECK(draw.outcome.judgments == std::vector<bool>{true, false});
    SampleDraw free_draw = greedy_response(params, ctx, PsfKind::JudgmentsInferCount);
    CHECK(free_draw.outcome.judgments == std::vector<bool>{false, false});
  }
  SUBCASE("no-evidence greedy emits answer only") {
    PolicyParams params;
    randomize(params, 21, 0.3);
    SampleDraw draw = greedy_response(params, ctx, PsfKind::NoEvidence);
    CHECK(draw.outcome.judgments.empty());
    ParseResult parsed = parse_response(draw.raw, PsfKind::NoEvidence);
    REQUIRE(parsed.ok());
    CHECK_FALSE(parsed.response.evidence.has_value());
  }
}

TEST_CASE("no-evidence gradients never touch the page block") {
  CorpusEntry e = comparison_entry();
  SampleContext ctx = make_context(e.sample, e.doc);
  PolicyParams params;
  randomize(params, 17, 0.4);
  Rng rng(31);
  FactoredOutcome outcome = sample_response(params, ctx, PsfKind::NoEvidence, rng).outcome;
  Eigen::VectorXd grad = grad_log_prob(params, ctx, outcome, PsfKind::NoEvidence);
  CHECK(grad.head(kPageFeatureDim).isZero(0.0));
  CHECK(grad.tail(kAnswerSlots * kPageFeatureDim).norm() > 0.0);
}

TEST_CASE("support mapping per format") {
  CHECK(support_for(PsfKind::IndicesList) == JudgmentSupport::NonEmpty);
  CHECK(support_for(PsfKind::JudgmentsWithCount) == JudgmentSupport::Free);
  CHECK(support_for(PsfKind::JudgmentsInferCount) == JudgmentSupport::Free);
  CHECK(support_for(PsfKind::NoEvidence) == JudgmentSupport::None);
}
