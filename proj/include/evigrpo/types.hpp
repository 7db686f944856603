#pragma once

// Shared domain types: synthetic multi-page documents and the QA samples
// asked over them. Page numbers are 1-based everywhere outside internal loops.

#include <set>
#include <string>
#include <utility>
#include <vector>

namespace evigrpo {

struct Fact {
  std::string key;
  std::string value;
};

struct SyntheticDocument {
  std::string doc_id;
  std::vector<std::vector<Fact>> pages;  // pages[j] = facts on page j+1

  int page_count() const { return static_cast<int>(pages.size()); }
};

struct QASample {
  std::string sample_id;
  std::string question;
  int page_count = 0;
  std::vector<std::string> gold_answers;  // nonempty
  std::set<int> gold_evidence;            // 1-based, subset of [1, page_count]
  int hops = 1;                           // |gold_evidence| by construction
  std::string category;                   // optional tag ("factual", "comparison", ...)
};

struct CorpusEntry {
  QASample sample;
  SyntheticDocument doc;
};

using Corpus = std::vector<CorpusEntry>;

}  // namespace evigrpo
