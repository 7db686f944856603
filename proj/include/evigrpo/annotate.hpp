#pragma once

// Two-stage generate-then-verify annotation. Stage 1 asks a backend for a
// structured annotation and keeps it only if the answer matches ground truth;
// stage 2 re-asks with the stage-1 draft attached and retains the record only
// on a second match. Any transport failure or malformed candidate rejects the
// record and the pipeline moves on; it never aborts on a single sample.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "evigrpo/psf.hpp"
#include "evigrpo/reward.hpp"
#include "evigrpo/types.hpp"

namespace evigrpo {

struct AnnotateRequest {
  std::string sample_id;
  std::string prompt;   // instruction + question
  std::string content;  // rendered document; stage 2 appends the draft
  int stage = 1;        // 1 = generate, 2 = verify
};

struct TransportFailure {
  std::string message;
};

// Raw structured text on success, a typed failure otherwise. No partial
// results: a reply is one or the other.
using BackendReply = std::variant<std::string, TransportFailure>;

class AnnotatorBackend {
 public:
  virtual ~AnnotatorBackend() = default;
  virtual BackendReply annotate(const AnnotateRequest& request) = 0;
};

// Per-call corruption rates for the simulated backend, drawn independently
// per (sample, stage) so retention statistics are clean Bernoulli products.
struct OracleNoise {
  double answer_corruption = 0.0;  // emit a wrong answer
  double format_corruption = 0.0;  // emit text that fails the grammar
  double transport_failure = 0.0;  // simulate an outage
};

// Derives annotations from the documents themselves (independently at each
// stage), optionally noise-injected. Deterministic in (corpus, noise, seed).
class OracleBackend : public AnnotatorBackend {
 public:
  OracleBackend(const Corpus& corpus, OracleNoise noise = {}, uint64_t seed = 0);
  BackendReply annotate(const AnnotateRequest& request) override;

 private:
  std::map<std::string, const CorpusEntry*> by_id_;
  OracleNoise noise_;
  uint64_t seed_;
};

struct RemoteConfig {
  std::string url;                            // http://host[:port]/path
  std::string token_env = "ANNOTATOR_TOKEN";  // bearer token source, optional
  int timeout_seconds = 30;
  int max_attempts = 3;       // with exponential backoff between attempts
  int backoff_base_ms = 250;  // doubles per retry; 0 disables sleeping
};

// POSTs {"prompt", "content"} as JSON and expects {"text"} back. Network or
// schema trouble after the retry budget becomes a TransportFailure.
class RemoteBackend : public AnnotatorBackend {
 public:
  explicit RemoteBackend(RemoteConfig cfg);
  BackendReply annotate(const AnnotateRequest& request) override;

 private:
  RemoteConfig cfg_;
};

struct MatchConfig {
  double threshold = 0.9;  // min ANLS against the gold answers
  AnlsConfig anls;
};

// True iff anls(candidate, golds) clears the threshold. Golds must be
// nonempty (anls throws otherwise).
bool match_answers(const std::string& candidate,
                   const std::vector<std::string>& golds, const MatchConfig& cfg);

struct AnnotationCandidate {
  std::string think;
  std::vector<bool> judgments;  // one per page
  std::string answer;
  std::string raw;
};

enum class RejectionReason { Stage1Mismatch, Stage2Mismatch, TransportError, FormatError };
const char* rejection_reason_name(RejectionReason r);

struct AnnotationRecord {
  std::string sample_id;
  std::optional<AnnotationCandidate> stage1;  // absent on stage-1 transport/format failure
  bool stage1_match = false;
  std::optional<AnnotationCandidate> stage2;
  std::optional<bool> stage2_match;
  bool retained = false;  // == stage1_match && stage2_match
  std::optional<RejectionReason> rejection;
};

struct PipelineSummary {
  int total = 0;
  int retained = 0;
  double retention_rate = 0.0;
  std::map<std::string, int> rejections;       // reason name -> count
  std::map<std::string, int> category_totals;  // retained count per category
};

struct PipelineResult {
  std::vector<AnnotationRecord> records;  // input order
  PipelineSummary summary;
};

// Document as plain text for backend prompts: one "Page j:" header per page,
// one "key: value" line per fact.
std::string render_document(const SyntheticDocument& doc);

PipelineResult run_pipeline(const Corpus& samples, AnnotatorBackend& backend,
                            const MatchConfig& cfg = {});

// Retained records re-exported in the corpus JSONL schema plus "think" and
// "evidence_judgments" (array of booleans). Loadable by the eval harness,
// which ignores the extra fields.
void export_evibench(const PipelineResult& result, const Corpus& samples,
                     const std::string& path);

}  // namespace evigrpo
