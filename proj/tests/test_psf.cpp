#include <doctest.h>

#include "evigrpo/psf.hpp"

using namespace evigrpo;

namespace {

const std::string kValid3 =
    "<think> the key sits on page two </think>\n"
    "<evidence_page>T, F, T</evidence_page>\n"
    "<answer>val042</answer>";

}  // namespace

TEST_CASE("psf names round trip") {
  for (PsfKind psf : {PsfKind::IndicesList, PsfKind::JudgmentsWithCount,
                      PsfKind::JudgmentsInferCount, PsfKind::NoEvidence}) {
    CHECK(psf_from_name(psf_name(psf)) == psf);
  }
  CHECK(!psf_from_name("psf4").has_value());
  CHECK(!psf_from_name("").has_value());
  CHECK(!psf_from_name("PSF1").has_value());
}

TEST_CASE("judgment parse extracts every field") {
  ParseResult r = parse_response(kValid3, PsfKind::JudgmentsInferCount);
  REQUIRE(r.ok());
  CHECK(r.response.think == "the key sits on page two");
  CHECK(r.response.answer == "val042");
  CHECK(r.response.raw == kValid3);
  REQUIRE(r.response.evidence.has_value());
  const EvidenceJudgment& ev = *r.response.evidence;
  CHECK(ev.judgments == std::vector<bool>{true, false, true});
  CHECK(ev.predicted_count == 3);
  CHECK(ev.predicted_set == std::set<int>{1, 3});
  CHECK(!ev.is_indices_list());
}

TEST_CASE("indices parse keeps the listed pages without a declared count") {
  ParseResult r = parse_response(
      "<think>x</think><evidence_page>1, 3, 5</evidence_page><answer>y</answer>",
      PsfKind::IndicesList);
  REQUIRE(r.ok());
  const EvidenceJudgment& ev = *r.response.evidence;
  CHECK(ev.predicted_set == std::set<int>{1, 3, 5});
  CHECK(!ev.predicted_count.has_value());
  CHECK(ev.is_indices_list());
  CHECK(ev.judgments.empty());
}

TEST_CASE("no-evidence parse has no evidence block") {
  ParseResult r = parse_response("<think>x</think><answer>y</answer>",
                                 PsfKind::NoEvidence);
  REQUIRE(r.ok());
  CHECK(!r.response.evidence.has_value());
  CHECK(r.response.answer == "y");
}

TEST_CASE("an evidence block under the no-evidence format is interstitial text") {
  ParseResult r = parse_response(
      "<think>x</think><evidence_page>T</evidence_page><answer>y</answer>",
      PsfKind::NoEvidence);
  CHECK(r.error == FormatError::WrongOrder);
}

TEST_CASE("error classes by construction") {
  const PsfKind psf = PsfKind::JudgmentsInferCount;
  CHECK(parse_response("<think>x</think><evidence_page>T</evidence_page>"
                       "<answer>y",
                       psf)
            .error == FormatError::MissingTag);
  CHECK(parse_response("<think>x</think><think>z</think>"
                       "<evidence_page>T</evidence_page><answer>y</answer>",
                       psf)
            .error == FormatError::DuplicateTag);
  CHECK(parse_response("<evidence_page>T</evidence_page>"
                       "<think>x</think><answer>y</answer>",
                       psf)
            .error == FormatError::WrongOrder);
  CHECK(parse_response("<think>x</think>stray"
                       "<evidence_page>T</evidence_page><answer>y</answer>",
                       psf)
            .error == FormatError::WrongOrder);
  CHECK(parse_response("intro <think>x</think>"
                       "<evidence_page>T</evidence_page><answer>y</answer>",
                       psf)
            .error == FormatError::WrongOrder);
  CHECK(parse_response(kValid3 + " trailing", psf).error ==
        FormatError::TrailingGarbage);
  CHECK(parse_response("<think>x</think><evidence_page>T, X</evidence_page>"
                       "<answer>y</answer>",
                       psf)
            .error == FormatError::BadJudgmentToken);
  CHECK(parse_response("<think>x</think><evidence_page>t, f</evidence_page>"
                       "<answer>y</answer>",
                       psf)
            .error == FormatError::BadJudgmentToken);
  CHECK(parse_response("<think>x</think><evidence_page>  </evidence_page>"
                       "<answer>y</answer>",
                       psf)
            .error == FormatError::EmptyEvidence);
  CHECK(parse_response("<think>x</think><evidence_page>T</evidence_page>"
                       "<answer>  </answer>",
                       psf)
            .error == FormatError::EmptyAnswer);
}

TEST_CASE("indices error classes") {
  auto err = [](const std::string& payload) {
    return parse_response("<think>x</think><evidence_page>" + payload +
                              "</evidence_page><answer>y</answer>",
                          PsfKind::IndicesList)
        .error;
  };
  CHECK(err("1, two") == FormatError::BadJudgmentToken);
  CHECK(err("1, 1") == FormatError::BadJudgmentToken);
  CHECK(err("0") == FormatError::BadJudgmentToken);
  CHECK(err("-2") == FormatError::BadJudgmentToken);
  CHECK(err("3.5") == FormatError::BadJudgmentToken);
  CHECK(err("1234567890") == FormatError::BadJudgmentToken);  // over 9 digits
  CHECK(err("12") == FormatError::None);  // range is the reward's concern
}

TEST_CASE("precedence: counts beat order beat payloads") {
  // duplicate think AND trailing garbage -> the count violation wins
  CHECK(parse_response("<think>a</think><think>b</think>"
                       "<evidence_page>T</evidence_page><answer>y</answer> junk",
                       PsfKind::JudgmentsInferCount)
            .error == FormatError::DuplicateTag);
  // swapped blocks AND bad token -> order wins
  CHECK(parse_response("<evidence_page>X</evidence_page><think>a</think>"
                       "<answer>y</answer>",
                       PsfKind::JudgmentsInferCount)
            .error == FormatError::WrongOrder);
  // interstitial text AND empty answer -> interstitial wins
  CHECK(parse_response("<think>a</think>mid<evidence_page>T</evidence_page>"
                       "<answer></answer>",
                       PsfKind::JudgmentsInferCount)
            .error == FormatError::WrongOrder);
}

TEST_CASE("render round trips through parse for every format") {
  StructuredResponse resp;
  resp.think = "reasoning goes here";
  resp.answer = "val007";

  SUBCASE("judgments") {
    EvidenceJudgment ev;
    ev.judgments = {false, true, true, false};
    ev.predicted_count = 4;
    ev.predicted_set = {2, 3};
    resp.evidence = ev;
    for (PsfKind psf :
         {PsfKind::JudgmentsInferCount, PsfKind::JudgmentsWithCount}) {
      const std::string raw = render_response(resp, psf);
      CHECK(raw ==
            "<think>reasoning goes here</think>\n"
            "<evidence_page>F, T, T, F</evidence_page>\n"
            "<answer>val007</answer>");
      ParseResult back = parse_response(raw, psf);
      REQUIRE(back.ok());
      CHECK(back.response.evidence->judgments == ev.judgments);
      CHECK(back.response.answer == resp.answer);
    }
  }
  SUBCASE("indices") {
    EvidenceJudgment ev;
    ev.predicted_set = {1, 3, 5};
    resp.evidence = ev;
    const std::string raw = render_response(resp, PsfKind::IndicesList);
    CHECK(raw ==
          "<think>reasoning goes here</think>\n"
          "<evidence_page>1, 3, 5</evidence_page>\n"
          "<answer>val007</answer>");
    ParseResult back = parse_response(raw, PsfKind::IndicesList);
    REQUIRE(back.ok());
    CHECK(back.response.evidence->predicted_set == ev.predicted_set);
  }
  SUBCASE("no evidence") {
    const std::string raw = render_response(resp, PsfKind::NoEvidence);
    CHECK(raw == "<think>reasoning goes here</think>\n<answer>val007</answer>");
    CHECK(parse_response(raw, PsfKind::NoEvidence).ok());
  }
}

TEST_CASE("renderer rejects inexpressible responses") {
  StructuredResponse resp;
  resp.think = "t";
  resp.answer = "a";

  SUBCASE("missing evidence under an evidence format") {
    CHECK_THROWS_AS(render_response(resp, PsfKind::JudgmentsInferCount),
                    InvalidForPsfError);
  }
  SUBCASE("evidence under the no-evidence format") {
    EvidenceJudgment ev;
    ev.judgments = {true};
    ev.predicted_count = 1;
    ev.predicted_set = {1};
    resp.evidence = ev;
    CHECK_THROWS_AS(render_response(resp, PsfKind::NoEvidence), InvalidForPsfError);
  }
  SUBCASE("empty page list under the indices format") {
    resp.evidence = EvidenceJudgment{};
    CHECK_THROWS_AS(render_response(resp, PsfKind::IndicesList), InvalidForPsfError);
  }
  SUBCASE("judgment and set out of sync") {
    EvidenceJudgment ev;
    ev.judgments = {true, false};
    ev.predicted_count = 2;
    ev.predicted_set = {2};  // should be {1}
    resp.evidence = ev;
    CHECK_THROWS_AS(render_response(resp, PsfKind::JudgmentsInferCount),
                    InvalidForPsfError);
  }
  SUBCASE("tag literal inside think") {
    resp.think = "nested <answer> tag";
    resp.evidence = EvidenceJudgment{{true}, 1, {1}};
    CHECK_THROWS_AS(render_response(resp, PsfKind::JudgmentsInferCount),
                    InvalidForPsfError);
  }
  SUBCASE("empty answer") {
    resp.answer = "  ";
    resp.evidence = EvidenceJudgment{{true}, 1, {1}};
    CHECK_THROWS_AS(render_response(resp, PsfKind::JudgmentsInferCount),
                    InvalidForPsfError);
  }
}

TEST_CASE("prompts carry the frame, the question, and the count when required") {
  const std::string q = "What is the value of key001?";
  for (PsfKind psf : {PsfKind::IndicesList, PsfKind::JudgmentsInferCount,
                      PsfKind::NoEvidence}) {
    const std::string prompt = render_prompt(psf, q);
    CHECK(prompt.rfind("System: ", 0) == 0);
    CHECK(prompt.find("User: " + q + ". Assistant:") != std::string::npos);
  }
  const std::string with_count =
      render_prompt(PsfKind::JudgmentsWithCount, q, 7);
  CHECK(with_count.find("You will be given 7 images") != std::string::npos);
  CHECK(render_prompt(PsfKind::JudgmentsInferCount, q)
            .find("identify how many pages") != std::string::npos);
  CHECK(render_prompt(PsfKind::IndicesList, q).find("list their page numbers") !=
        std::string::npos);
  CHECK(render_prompt(PsfKind::NoEvidence, q).find("evidence_page") ==
        std::string::npos);
  CHECK_THROWS_AS(render_prompt(PsfKind::JudgmentsWithCount, q), MissingCountError);
  CHECK_THROWS_AS(render_prompt(PsfKind::JudgmentsWithCount, q, 0),
                  MissingCountError);
}
