#pragma once

// Greedy evaluation over a dataset: format rate, mean ANLS (reported x100),
// and evidence-page recall |P∩G|/|G| macro-averaged over samples with a
// nonempty gold set. Reports render as JSON and Markdown with a stable field
// order so identical inputs produce identical bytes.

#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "evigrpo/policy.hpp"
#include "evigrpo/reward.hpp"
#include "evigrpo/types.hpp"

namespace evigrpo {

// Schema violations carry the offending 1-based line number in the message.
struct SchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Strict JSONL loader for the corpus schema written by save_corpus. Unknown
// fields are ignored; an empty file is a valid empty dataset.
Corpus load_dataset(const std::string& path);

struct PredictionRecord {
  std::string id;
  std::string response;
};

// JSONL, one {"id", "response"} object per line.
std::vector<PredictionRecord> load_predictions(const std::string& path);

struct MissingPredictionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// |P∩G|/|G|; 0 when G is empty (callers exclude those samples from means).
double evidence_recall(const std::set<int>& predicted, const std::set<int>& gold);

struct EvalRow {
  std::string dataset;
  int n_samples = 0;
  double mean_pages = 0.0;
  double mean_anls = 0.0;                 // [0,1]; reports show x100
  std::optional<double> evidence_recall;  // absent under the no-evidence format
  double format_rate = 0.0;
};

struct EvalReport {
  double anls_threshold = 0.5;
  std::vector<EvalRow> rows;
};

// Greedy decode (judgment true iff p >= 0.5, argmax answer), then text-level
// scoring of the rendered responses.
EvalRow evaluate(const PolicyParams& params, const Corpus& corpus, PsfKind psf,
                 const AnlsConfig& cfg, const std::string& dataset_name);

// Scores prediction files; every sample id must be covered.
EvalRow evaluate(const std::vector<PredictionRecord>& predictions,
                 const Corpus& corpus, PsfKind psf, const AnlsConfig& cfg,
                 const std::string& dataset_name);

// Recall of the thresholded page probabilities themselves (p >= 0.5),
// independent of what the output format can express. This is how a policy
// without an evidence block is scored in mechanism comparisons.
double latent_evidence_recall(const PolicyParams& params, const Corpus& corpus);

enum class ReportFormat { Json, Markdown };
std::string emit_report(const EvalReport& report, ReportFormat format);

// Writes report.json and report.md under dir.
void write_reports(const EvalReport& report, const std::string& dir);

}  // namespace evigrpo
