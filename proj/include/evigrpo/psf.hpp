#pragma once

// Page selection formats (PSFs): the structured output grammar
//
//   <think> ... </think> <evidence_page> ... </evidence_page> <answer> ... </answer>
//
// with the evidence block omitted under NoEvidence. Tags are exact lowercase
// literals. The grammar is strict: exactly one of each required tag, blocks in
// order, nothing but whitespace outside the blocks. The evidence payload is
// either a comma-separated T/F judgment sequence (one token per page, count
// inferred or given in the prompt) or a comma-separated list of distinct
// 1-based page numbers.
//
// Parse error precedence, first violation wins:
//   1. tag occurrence counts      -> MissingTag / DuplicateTag
//   2. tag order                  -> WrongOrder
//   3. non-ws text before/between -> WrongOrder
//   4. non-ws text after </answer> -> TrailingGarbage
//   5. evidence payload           -> EmptyEvidence / BadJudgmentToken
//   6. answer payload             -> EmptyAnswer

#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace evigrpo {

enum class PsfKind {
  IndicesList,         // PSF-1: evidence as page numbers, e.g. "2" or "1, 3, 5"
  JudgmentsWithCount,  // PSF-2: T/F per page, page count stated in the prompt
  JudgmentsInferCount, // PSF-3: T/F per page, count inferred by the model (default)
  NoEvidence,          // plain think/answer baseline, no evidence block
};

const char* psf_name(PsfKind psf);
// Parses "psf1" | "psf2" | "psf3" | "none"; returns nullopt on anything else.
std::optional<PsfKind> psf_from_name(const std::string& name);

enum class FormatError {
  None,
  MissingTag,
  DuplicateTag,
  WrongOrder,
  BadJudgmentToken,
  EmptyEvidence,
  EmptyAnswer,
  TrailingGarbage,
};

const char* format_error_name(FormatError e);

struct EvidenceJudgment {
  // Per-page flags for judgment formats; empty for IndicesList.
  std::vector<bool> judgments;
  // Declared page count N' (= judgments.size()); nullopt for IndicesList.
  std::optional<int> predicted_count;
  // Predicted evidence pages P, 1-based. Derived from judgments or listed directly.
  std::set<int> predicted_set;

  bool is_indices_list() const { return !predicted_count.has_value(); }
};

struct StructuredResponse {
  std::string think;
  std::optional<EvidenceJudgment> evidence;  // absent under NoEvidence
  std::string answer;
  std::string raw;
};

struct ParseResult {
  StructuredResponse response;
  FormatError error = FormatError::None;
  std::string detail;  // human-readable specifics for diagnostics

  bool ok() const { return error == FormatError::None; }
};

// Strict parse of raw model output under the given format.
ParseResult parse_response(const std::string& raw, PsfKind psf);

// Thrown by renderers when the response shape cannot be expressed in the
// requested format (e.g. evidence block under NoEvidence, empty page list
// under IndicesList).
struct InvalidForPsfError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Thrown by render_prompt when JudgmentsWithCount is requested without a count.
struct MissingCountError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Canonical text for a structured response: single spaces after commas,
// blocks separated by newlines. Output of this function always re-parses.
std::string render_response(const StructuredResponse& resp, PsfKind psf);

// Instruction prompt for the given format. page_count is required for
// JudgmentsWithCount and ignored otherwise.
std::string render_prompt(PsfKind psf, const std::string& question,
                          std::optional<int> page_count = std::nullopt);

}  // namespace evigrpo
