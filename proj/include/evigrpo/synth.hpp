#pragma once

// Synthetic multi-page document generator. Each document is a list of pages,
// each page a list of (key, value) fact pairs with keys globally unique
// within the document. Every document carries one templated QA sample:
//
//   1-hop: "What is the value of <key>?"            -> the value
//   2-hop: "Do <k1> and <k2> have equal values?"    -> yes / no
//
// Gold evidence = the pages holding the queried keys. Values are drawn from a
// compact "valNNN" vocabulary so wrong answers are often near-misses under
// edit distance (exercises partial ANLS credit).

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "evigrpo/types.hpp"

namespace evigrpo {

struct CorpusConfig {
  uint64_t seed = 0;
  int num_documents = 100;
  int min_pages = 1;
  int max_pages = 1;
  int min_facts_per_page = 2;
  int max_facts_per_page = 4;
  // (hops, weight) pairs; hops is the number of distinct evidence pages.
  std::vector<std::pair<int, double>> hop_distribution = {{1, 1.0}};
  int vocabulary_size = 200;
  std::string id_prefix = "s";
};

struct InfeasibleConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Throws InfeasibleConfigError on bad ranges, hops above the minimum page
// count, or a vocabulary too small for distinct keys.
void validate(const CorpusConfig& cfg);

// Deterministic in cfg (including seed); per-document streams are derived by
// hashing, so generation order does not matter.
Corpus generate_corpus(const CorpusConfig& cfg);

// Question-template parser shared by the oracle and the policy featurizer.
struct ParsedQuestion {
  enum class Type { Lookup, Comparison };
  Type type = Type::Lookup;
  std::vector<std::string> keys;  // 1 key for lookup, 2 for comparison
};
std::optional<ParsedQuestion> parse_question(const std::string& question);

struct KeyNotFoundError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Recomputes the gold answer and minimal evidence set from the raw facts,
// independent of the stored gold fields. Throws KeyNotFoundError if a queried
// key is absent and std::invalid_argument on an unrecognized template.
struct OracleResult {
  std::vector<std::string> answers;
  std::set<int> evidence;  // 1-based
};
OracleResult answer_oracle(const QASample& sample, const SyntheticDocument& doc);

// One JSON object per line:
//   {"id","question","pages","answers","evidence_pages","hops","category"}
void save_corpus(const Corpus& corpus, const std::string& path);

}  // namespace evigrpo
