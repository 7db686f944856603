#include "evigrpo/psf.hpp"

#include <algorithm>
#include <array>

#include "evigrpo/common.hpp"

namespace evigrpo {

namespace {

constexpr const char* kThinkOpen = "<think>";
constexpr const char* kThinkClose = "</think>";
constexpr const char* kEvidenceOpen = "<evidence_page>";
constexpr const char* kEvidenceClose = "</evidence_page>";
constexpr const char* kAnswerOpen = "<answer>";
constexpr const char* kAnswerClose = "</answer>";

std::vector<size_t> find_all(const std::string& raw, const std::string& tag) {
  std::vector<size_t> out;
  size_t pos = raw.find(tag);
  while (pos != std::string::npos) {
    out.push_back(pos);
    pos = raw.find(tag, pos + 1);
  }
  return out;
}

ParseResult fail(FormatError e, std::string detail, const std::string& raw) {
  ParseResult r;
  r.error = e;
  r.detail = std::move(detail);
  r.response.raw = raw;
  return r;
}

bool contains_any_tag(const std::string& s) {
  for (const char* tag : {kThinkOpen, kThinkClose, kEvidenceOpen, kEvidenceClose,
                          kAnswerOpen, kAnswerClose})
    if (s.find(tag) != std::string::npos) return true;
  return false;
}

}  // namespace

const char* psf_name(PsfKind psf) {
  switch (psf) {
    case PsfKind::IndicesList: return "psf1";
    case PsfKind::JudgmentsWithCount: return "psf2";
    case PsfKind::JudgmentsInferCount: return "psf3";
    case PsfKind::NoEvidence: return "none";
  }
  return "?";
}

std::optional<PsfKind> psf_from_name(const std::string& name) {
  if (name == "psf1") return PsfKind::IndicesList;
  if (name == "psf2") return PsfKind::JudgmentsWithCount;
  if (name == "psf3") return PsfKind::JudgmentsInferCount;
  if (name == "none") return PsfKind::NoEvidence;
  return std::nullopt;
}

const char* format_error_name(FormatError e) {
  switch (e) {
    case FormatError::None: return "None";
    case FormatError::MissingTag: return "MissingTag";
    case FormatError::DuplicateTag: return "DuplicateTag";
    case FormatError::WrongOrder: return "WrongOrder";
    case FormatError::BadJudgmentToken: return "BadJudgmentToken";
    case FormatError::EmptyEvidence: return "EmptyEvidence";
    case FormatError::EmptyAnswer: return "EmptyAnswer";
    case FormatError::TrailingGarbage: return "TrailingGarbage";
  }
  return "?";
}

ParseResult parse_response(const std::string& raw, PsfKind psf) {
  const bool with_evidence = psf != PsfKind::NoEvidence;

  struct TagSpec {
    const char* text;
    size_t pos = 0;
  };
  std::vector<TagSpec> tags;
  tags.push_back({kThinkOpen});
  tags.push_back({kThinkClose});
  if (with_evidence) {
    tags.push_back({kEvidenceOpen});
    tags.push_back({kEvidenceClose});
  }
  tags.push_back({kAnswerOpen});
  tags.push_back({kAnswerClose});

  // 1. occurrence counts
  for (auto& tag : tags) {
    std::vector<size_t> hits = find_all(raw, tag.text);
    if (hits.empty()) return fail(FormatError::MissingTag, tag.text, raw);
    if (hits.size() > 1) return fail(FormatError::DuplicateTag, tag.text, raw);
    tag.pos = hits[0];
  }

  // 2. order
  for (size_t i = 1; i < tags.size(); ++i)
    if (tags[i - 1].pos + std::string(tags[i - 1].text).size() > tags[i].pos)
      return fail(FormatError::WrongOrder, tags[i].text, raw);

  // 3./4. nothing but whitespace outside the blocks
  auto between = [&](size_t from, size_t to) { return raw.substr(from, to - from); };
  size_t cursor = 0;
  for (size_t i = 0; i < tags.size(); i += 2) {
    if (!is_whitespace_only(between(cursor, tags[i].pos)))
      return fail(FormatError::WrongOrder, "text outside tag blocks", raw);
    cursor = tags[i + 1].pos + std::string(tags[i + 1].text).size();
  }
  if (!is_whitespace_only(between(cursor, raw.size())))
    return fail(FormatError::TrailingGarbage, "text after </answer>", raw);

  auto content = [&](const TagSpec& open, const TagSpec& close) {
    size_t begin = open.pos + std::string(open.text).size();
    return raw.substr(begin, close.pos - begin);
  };

  StructuredResponse resp;
  resp.raw = raw;
  resp.think = trim(content(tags[0], tags[1]));

  // 5. evidence payload
  if (with_evidence) {
    const std::string payload = content(tags[2], tags[3]);
    if (is_whitespace_only(payload))
      return fail(FormatError::EmptyEvidence, "", raw);

    EvidenceJudgment ev;
    std::vector<std::string> tokens = split(payload, ',');
    if (psf == PsfKind::IndicesList) {
      for (const std::string& t : tokens) {
        const std::string tok = trim(t);
        if (tok.empty() || tok.size() > 9 ||
            !std::all_of(tok.begin(), tok.end(), [](char c) { return c >= '0' && c <= '9'; }))
          return fail(FormatError::BadJudgmentToken, tok, raw);
        int page = std::stoi(tok);
        if (page < 1) return fail(FormatError::BadJudgmentToken, tok, raw);
        if (!ev.predicted_set.insert(page).second)
          return fail(FormatError::BadJudgmentToken, "duplicate page " + tok, raw);
      }
    } else {
      for (const std::string& t : tokens) {
        const std::string tok = trim(t);
        if (tok == "T")
          ev.judgments.push_back(true);
        else if (tok == "F")
          ev.judgments.push_back(false);
        else
          return fail(FormatError::BadJudgmentToken, tok, raw);
      }
      ev.predicted_count = static_cast<int>(ev.judgments.size());
      for (size_t j = 0; j < ev.judgments.size(); ++j)
        if (ev.judgments[j]) ev.predicted_set.insert(static_cast<int>(j) + 1);
    }
    resp.evidence = std::move(ev);
  }

  // 6. answer payload
  resp.answer = trim(content(tags[tags.size() - 2], tags[tags.size() - 1]));
  if (resp.answer.empty()) return fail(FormatError::EmptyAnswer, "", raw);

  ParseResult out;
  out.response = std::move(resp);
  return out;
}

std::string render_response(const StructuredResponse& resp, PsfKind psf) {
  if (contains_any_tag(resp.think) || contains_any_tag(resp.answer))
    throw InvalidForPsfError("render_response: tag literal inside think/answer");
  if (trim(resp.answer).empty())
    throw InvalidForPsfError("render_response: empty answer");

  std::string out = std::string(kThinkOpen) + resp.think + kThinkClose + "\n";

  if (psf == PsfKind::NoEvidence) {
    if (resp.evidence.has_value())
      throw InvalidForPsfError("render_response: evidence block under NoEvidence");
  } else {
    if (!resp.evidence.has_value())
      throw InvalidForPsfError("render_response: missing evidence block");
    const EvidenceJudgment& ev = *resp.evidence;
    std::string payload;
    if (psf == PsfKind::IndicesList) {
      if (!ev.is_indices_list())
        throw InvalidForPsfError("render_response: judgment-style evidence under IndicesList");
      if (ev.predicted_set.empty())
        throw InvalidForPsfError("render_response: empty page list under IndicesList");
      for (int page : ev.predicted_set) {
        if (page < 1) throw InvalidForPsfError("render_response: page < 1");
        if (!payload.empty()) payload += ", ";
        payload += std::to_string(page);
      }
    } else {
      if (ev.is_indices_list() || ev.judgments.empty())
        throw InvalidForPsfError("render_response: judgment list required");
      if (static_cast<size_t>(*ev.predicted_count) != ev.judgments.size())
        throw InvalidForPsfError("render_response: predicted_count mismatch");
      std::set<int> derived;
      for (size_t j = 0; j < ev.judgments.size(); ++j)
        if (ev.judgments[j]) derived.insert(static_cast<int>(j) + 1);
      if (derived != ev.predicted_set)
        throw InvalidForPsfError("render_response: predicted_set inconsistent with judgments");
      for (size_t j = 0; j < ev.judgments.size(); ++j) {
        if (j > 0) payload += ", ";
        payload += ev.judgments[j] ? "T" : "F";
      }
    }
    out += std::string(kEvidenceOpen) + payload + kEvidenceClose + "\n";
  }

  out += std::string(kAnswerOpen) + resp.answer + kAnswerClose;
  return out;
}

namespace {

// Instruction texts per format. The default (count-inferred) wording asks the
// model to first identify how many pages there are; the with-count variant
// states the count up front; the indices variant asks for page numbers; the
// no-evidence variant drops the evidence instruction entirely.
const char* kPromptInferCount =
    "You will be given one or more images along with a question. Your task is to "
    "understand the visual content and answer the question. First, think carefully "
    "about the question and present your reasoning in <think> and </think>. Next, "
    "identify how many pages (images) are provided, and for each page, determine "
    "whether it contains relevant evidence to answer the question. List your "
    "judgments in <evidence_page> and </evidence_page> using a comma-separated "
    "sequence of T (True) or F (False), one for each page, in order (e.g., T, F, T, "
    "F). Finally, provide your answer in <answer> and </answer>. The answer should "
    "be one or more words or phrases.";

const char* kPromptIndices =
    "You will be given one or more images along with a question. Your task is to "
    "understand the visual content and answer the question. First, think carefully "
    "about the question and present your reasoning in <think> and </think>. Next, "
    "identify all images that contain the necessary evidence to support your "
    "answer, and list their page numbers in <evidence_page> and </evidence_page>, "
    "using integers separated by commas (e.g., 2 or 1, 3, 5). Finally, provide "
    "your answer in <answer> and </answer>. The answer should be one or more words "
    "or phrases.";

// {CNT} below is spliced with the page count.
const char* kPromptWithCountHead = "You will be given ";
const char* kPromptWithCountTail =
    " images and a question. Your task is to understand the visual content and "
    "answer the question. First, think carefully about the question and present "
    "your reasoning in <think> and </think>. Next, determine whether each page "
    "contains relevant evidence to answer the question. Provide your judgment in "
    "<evidence_page> and </evidence_page> using a comma-separated sequence of T "
    "(True) or F (False), one for each page, in order (e.g., T, F, T, F). Finally, "
    "provide your answer in <answer> and </answer>. The answer should be one or "
    "more words or phrases.";

const char* kPromptNoEvidence =
    "You will be given one or more images along with a question. Your task is to "
    "understand the visual content and answer the question. First, think carefully "
    "about the question and present your reasoning in <think> and </think>. Next, "
    "provide your answer in <answer> and </answer>. The answer should be one or "
    "more words or phrases.";

}  // namespace

std::string render_prompt(PsfKind psf, const std::string& question,
                          std::optional<int> page_count) {
  std::string system;
  switch (psf) {
    case PsfKind::IndicesList:
      system = kPromptIndices;
      break;
    case PsfKind::JudgmentsWithCount:
      if (!page_count.has_value() || *page_count < 1)
        throw MissingCountError("render_prompt: JudgmentsWithCount needs page_count >= 1");
      system = kPromptWithCountHead + std::to_string(*page_count) + kPromptWithCountTail;
      break;
    case PsfKind::JudgmentsInferCount:
      system = kPromptInferCount;
      break;
    case PsfKind::NoEvidence:
      system = kPromptNoEvidence;
      break;
  }
  return "System: " + system + "\nUser: " + question + ". Assistant:";
}

}  // namespace evigrpo
