#pragma once

// Scalar reward components and their sum:
//
//   total = format + accuracy + evidence
//
// format:   1 iff the raw text parses under the configured format, else 0
//           (and then the other components are forced to 0).
// accuracy: thresholded ANLS of the answer against the gold answers.
// evidence: count-gated F1 between predicted and gold evidence pages. The
//           gate zeroes the component when the declared page count N' differs
//           from the true N; the indices-list format has no count to declare
//           and is scored as plain F1.

#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "evigrpo/psf.hpp"
#include "evigrpo/types.hpp"

namespace evigrpo {

struct AnlsConfig {
  double threshold = 0.5;          // similarity below 1 - threshold scores 0
  bool lowercase = true;
  bool trim = true;
  bool collapse_whitespace = true;
};

struct RewardBreakdown {
  int format = 0;        // 0 or 1
  double accuracy = 0.0; // [0, 1]
  double evidence = 0.0; // [0, 1]
  double total = 0.0;    // sum of the three
};

// Unit-cost edit distance.
size_t levenshtein(const std::string& a, const std::string& b);

// Lowercase, trim, collapse internal whitespace (per config).
std::string normalize_answer(const std::string& s, const AnlsConfig& cfg = {});

struct EmptyGoldListError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Max over golds of the thresholded normalized similarity
//   s = 1 - lev(np, ng) / max(|np|, |ng|)
// kept iff s >= 1 - threshold. Both strings empty after normalization
// compare as 1; exactly one empty as 0.
double anls(const std::string& prediction, const std::vector<std::string>& golds,
            const AnlsConfig& cfg = {});

struct PageOutOfRangeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Eq-style evidence reward: 2|P∩G| / (|P|+|G|), zero when both sets are empty
// or when the count gate is armed and predicted_count != page_count.
double evidence_f1(const std::set<int>& predicted, const std::set<int>& gold,
                   int page_count, std::optional<int> predicted_count,
                   bool count_gate);

// 1 iff raw parses under psf.
int format_reward(const std::string& raw, PsfKind psf);

// Full per-response reward. Never throws on malformed model output; a parse
// failure yields an all-zero breakdown. Out-of-range pages in an indices-list
// response score the evidence component 0 (they assert evidence on pages that
// do not exist).
RewardBreakdown total_reward(const std::string& raw, const QASample& sample,
                             PsfKind psf, const AnlsConfig& cfg = {});

}  // namespace evigrpo
