#include <doctest.h>

#include <cmath>

#include "evigrpo/reward.hpp"

using namespace evigrpo;

TEST_CASE("levenshtein ground truths") {
  CHECK(levenshtein("kitten", "sitting") == 3);
  CHECK(levenshtein("", "abc") == 3);
  CHECK(levenshtein("abc", "") == 3);
  CHECK(levenshtein("", "") == 0);
  CHECK(levenshtein("abc", "abc") == 0);
  CHECK(levenshtein("flaw", "lawn") == 2);
}

TEST_CASE("answer normalization") {
  CHECK(normalize_answer("  Foo\t BAR  ") == "foo bar");
  CHECK(normalize_answer("a  b\n c") == "a b c");
  CHECK(normalize_answer("   ") == "");
  AnlsConfig keep_case;
  keep_case.lowercase = false;
  CHECK(normalize_answer("Foo Bar", keep_case) == "Foo Bar");
  AnlsConfig keep_ws;
  keep_ws.collapse_whitespace = false;
  keep_ws.trim = false;
  CHECK(normalize_answer(" a  b ", keep_ws) == " a  b ");
}

TEST_CASE("anls frozen values") {
  CHECK(anls("val1234", {"val1234"}) == 1.0);
  CHECK(anls("VAL1234", {"val1234"}) == 1.0);  // case folded
  CHECK(anls("", {""}) == 1.0);                // both empty
  CHECK(anls("x", {""}) == 0.0);               // one empty
  CHECK(anls("", {"x"}) == 0.0);
  // lev 3 over max length 7 -> 4/7, above the 0.5 keep line
  CHECK(anls("val1xxx", {"val1234"}) == doctest::Approx(4.0 / 7.0).epsilon(1e-12));
  // lev 4 over 7 -> 3/7, zeroed by the threshold
  CHECK(anls("valxxxx", {"val1234"}) == 0.0);
  // max over golds
  CHECK(anls("val1xxx", {"zzz", "val1234"}) ==
        doctest::Approx(4.0 / 7.0).epsilon(1e-12));
  CHECK(anls("val1234", {"nope", "val1234"}) == 1.0);
}

TEST_CASE("anls threshold boundary is kept") {
  // lev 3 over 6: similarity exactly 0.5 stays (filter is strict less-than)
  CHECK(anls("abcxyz", {"abcdef"}) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("anls requires at least one gold") {
  CHECK_THROWS_AS(anls("x", {}), EmptyGoldListError);
}

TEST_CASE("evidence f1 frozen values") {
  const std::set<int> p{1, 3};
  const std::set<int> g{1, 3, 5};
  SUBCASE("gate satisfied") {
    CHECK(evidence_f1(p, g, 5, 5, true) == doctest::Approx(0.8).epsilon(1e-15));
  }
  SUBCASE("gate violated zeroes the reward") {
    CHECK(evidence_f1(p, g, 5, 4, true) == 0.0);
    CHECK(evidence_f1(p, g, 5, 6, true) == 0.0);
  }
  SUBCASE("indices scoring has no gate") {
    CHECK(evidence_f1(p, g, 5, std::nullopt, false) ==
          doctest::Approx(0.8).epsilon(1e-15));
  }
  SUBCASE("degenerate sets") {
    CHECK(evidence_f1({}, {}, 3, 3, true) == 0.0);
    CHECK(evidence_f1({}, {1}, 3, 3, true) == 0.0);
    CHECK(evidence_f1({1}, {}, 3, 3, true) == 0.0);
    CHECK(evidence_f1({1, 2}, {1, 2}, 2, 2, true) == 1.0);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(evidence_f1({7}, g, 5, 5, true), PageOutOfRangeError);
    CHECK_THROWS_AS(evidence_f1(p, {0}, 5, 5, true), PageOutOfRangeError);
    CHECK_THROWS_AS(evidence_f1(p, g, 5, std::nullopt, true),
                    std::invalid_argument);
    CHECK_THROWS_AS(evidence_f1(p, g, 0, 0, true), std::invalid_argument);
  }
}

namespace {

QASample make_sample() {
  QASample s;
  s.sample_id = "t0";
  s.question = "What is the value of key001?";
  s.page_count = 3;
  s.gold_answers = {"val042"};
  s.gold_evidence = {2};
  return s;
}

}  // namespace

TEST_CASE("total reward composes the three components") {
  const QASample sample = make_sample();
  const PsfKind psf = PsfKind::JudgmentsInferCount;

  SUBCASE("perfect response") {
    RewardBreakdown r = total_reward(
        "<think>x</think><evidence_page>F, T, F</evidence_page>"
        "<answer>val042</answer>",
        sample, psf);
    CHECK(r.format == 1);
    CHECK(r.accuracy == 1.0);
    CHECK(r.evidence == 1.0);
    CHECK(r.total == 3.0);
  }
  SUBCASE("count gate zeroes evidence but not accuracy") {
    RewardBreakdown r = total_reward(
        "<think>x</think><evidence_page>F, T</evidence_page>"
        "<answer>val042</answer>",
        sample, psf);
    CHECK(r.format == 1);
    CHECK(r.accuracy == 1.0);
    CHECK(r.evidence == 0.0);
    CHECK(r.total == 2.0);
  }
  SUBCASE("parse failure zeroes everything") {
    RewardBreakdown r = total_reward("<answer>val042</answer>", sample, psf);
    CHECK(r.format == 0);
    CHECK(r.accuracy == 0.0);
    CHECK(r.evidence == 0.0);
    CHECK(r.total == 0.0);
  }
  SUBCASE("near-miss answer earns partial accuracy") {
    RewardBreakdown r = total_reward(
        "<think>x</think><evidence_page>F, T, F</evidence_page>"
        "<answer>val049</answer>",
        sample, psf);
    CHECK(r.accuracy == doctest::Approx(5.0 / 6.0).epsilon(1e-12));
    CHECK(r.total == doctest::Approx(1.0 + 5.0 / 6.0 + 1.0).epsilon(1e-12));
  }
  SUBCASE("indices out of range score zero evidence without throwing") {
    RewardBreakdown r = total_reward(
        "<think>x</think><evidence_page>2, 9</evidence_page>"
        "<answer>val042</answer>",
        sample, PsfKind::IndicesList);
    CHECK(r.format == 1);
    CHECK(r.accuracy == 1.0);
    CHECK(r.evidence == 0.0);
  }
  SUBCASE("indices scoring is gateless plain f1") {
    RewardBreakdown r = total_reward(
        "<think>x</think><evidence_page>2, 3</evidence_page>"
        "<answer>val042</answer>",
        sample, PsfKind::IndicesList);
    CHECK(r.evidence == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  }
  SUBCASE("no-evidence format never earns evidence reward") {
    RewardBreakdown r = total_reward("<think>x</think><answer>val042</answer>",
                                     sample, PsfKind::NoEvidence);
    CHECK(r.format == 1);
    CHECK(r.accuracy == 1.0);
    CHECK(r.evidence == 0.0);
    CHECK(r.total == 2.0);
  }
}

TEST_CASE("format reward is the parse bit") {
  CHECK(format_reward("<think>x</think><answer>y</answer>", PsfKind::NoEvidence) ==
        1);
  CHECK(format_reward("<think>x</think><answer>y</answer>",
                      PsfKind::JudgmentsInferCount) == 0);
  CHECK(format_reward("", PsfKind::NoEvidence) == 0);
}
