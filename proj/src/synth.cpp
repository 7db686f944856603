#include "evigrpo/synth.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "evigrpo/common.hpp"

namespace evigrpo {

namespace {

constexpr const char* kLookupPrefix = "What is the value of ";
constexpr const char* kComparisonPrefix = "Do ";
constexpr const char* kComparisonMid = " and ";
constexpr const char* kComparisonSuffix = " have equal values?";

std::string padded(int value, int width) {
  std::string s = std::to_string(value);
  while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
  return s;
}

int vocab_width(int vocabulary_size) {
  int width = 1, limit = 10;
  while (vocabulary_size > limit) {
    ++width;
    limit *= 10;
  }
  return std::max(width, 3);
}

int max_hop(const CorpusConfig& cfg) {
  int h = 0;
  for (const auto& [hops, weight] : cfg.hop_distribution)
    if (weight > 0) h = std::max(h, hops);
  return h;
}

}  // namespace

void validate(const CorpusConfig& cfg) {
  auto bad = [](const std::string& msg) { throw InfeasibleConfigError(msg); };
  if (cfg.num_documents < 0) bad("num_documents < 0");
  if (cfg.min_pages < 1 || cfg.max_pages < cfg.min_pages) bad("bad page range");
  if (cfg.min_facts_per_page < 1 || cfg.max_facts_per_page < cfg.min_facts_per_page)
    bad("bad facts-per-page range");
  if (cfg.hop_distribution.empty()) bad("empty hop distribution");
  double total_weight = 0;
  for (const auto& [hops, weight] : cfg.hop_distribution) {
    if (hops < 1) bad("hops < 1");
    if (weight < 0) bad("negative hop weight");
    total_weight += weight;
  }
  if (total_weight <= 0) bad("zero hop distribution weight");
  if (max_hop(cfg) > 2) bad("hops > 2 not supported by the question templates");
  if (max_hop(cfg) > cfg.min_pages) bad("hops > min page count");
  if (cfg.vocabulary_size < 2) bad("vocabulary_size < 2");
  if (cfg.vocabulary_size < cfg.max_pages * cfg.max_facts_per_page)
    bad("vocabulary too small for globally unique keys");
}

Corpus generate_corpus(const CorpusConfig& cfg) {
  validate(cfg);
  const int width = vocab_width(cfg.vocabulary_size);
  std::vector<double> hop_weights;
  std::vector<int> hop_values;
  for (const auto& [hops, weight] : cfg.hop_distribution) {
    hop_values.push_back(hops);
    hop_weights.push_back(weight);
  }

  Corpus corpus;
  corpus.reserve(cfg.num_documents);
  for (int i = 0; i < cfg.num_documents; ++i) {
    Rng rng(hash_mix({cfg.seed, 0xD0C5EEDull, static_cast<uint64_t>(i)}));

    SyntheticDocument doc;
    doc.doc_id = "doc-" + padded(i, 6);
    const int n_pages = rng.uniform_int(cfg.min_pages, cfg.max_pages);

    // Distinct key ids for the whole document via partial Fisher-Yates.
    std::vector<int> per_page_facts(n_pages);
    int total_facts = 0;
    for (int j = 0; j < n_pages; ++j) {
      per_page_facts[j] = rng.uniform_int(cfg.min_facts_per_page, cfg.max_facts_per_page);
      total_facts += per_page_facts[j];
    }
    std::vector<int> key_ids(cfg.vocabulary_size);
    for (int k = 0; k < cfg.vocabulary_size; ++k) key_ids[k] = k;
    for (int k = 0; k < total_facts; ++k)
      std::swap(key_ids[k], key_ids[rng.uniform_int(k, cfg.vocabulary_size - 1)]);

    int next_key = 0;
    doc.pages.resize(n_pages);
    for (int j = 0; j < n_pages; ++j) {
      for (int f = 0; f < per_page_facts[j]; ++f) {
        Fact fact;
        fact.key = "key" + padded(key_ids[next_key++], width);
        fact.value = "val" + padded(rng.uniform_int(0, cfg.vocabulary_size - 1), width);
        doc.pages[j].push_back(std::move(fact));
      }
    }

    QASample sample;
    sample.sample_id = cfg.id_prefix + "-" + padded(i, 6);
    sample.page_count = n_pages;

    const int hop = hop_values[rng.weighted_pick(hop_weights)];
    if (hop == 1) {
      const int page = rng.uniform_int(1, n_pages);
      const Fact& fact = doc.pages[page - 1][rng.uniform_int(0, per_page_facts[page - 1] - 1)];
      sample.question = kLookupPrefix + fact.key + "?";
      sample.gold_answers = {fact.value};
      sample.gold_evidence = {page};
      sample.hops = 1;
      sample.category = "factual";
    } else {
      const int g1 = rng.uniform_int(1, n_pages);
      int g2 = rng.uniform_int(1, n_pages - 1);
      if (g2 >= g1) ++g2;
      Fact& f1 = doc.pages[g1 - 1][rng.uniform_int(0, per_page_facts[g1 - 1] - 1)];
      Fact& f2 = doc.pages[g2 - 1][rng.uniform_int(0, per_page_facts[g2 - 1] - 1)];
      if (rng.bernoulli(0.5)) {
        f2.value = f1.value;  // plant an equal pair
      } else {
        while (f2.value == f1.value)
          f2.value = "val" + padded(rng.uniform_int(0, cfg.vocabulary_size - 1), width);
      }
      sample.question =
          kComparisonPrefix + f1.key + kComparisonMid + f2.key + kComparisonSuffix;
      sample.gold_answers = {f1.value == f2.value ? "yes" : "no"};
      sample.gold_evidence = {g1, g2};
      sample.hops = 2;
      sample.category = "comparison";
    }

    // Evidence sparsity: |G|/N stays <= 0.5 once documents have >= 4 pages.
    if (n_pages >= 4 &&
        2 * static_cast<int>(sample.gold_evidence.size()) > n_pages)
      throw std::logic_error("generate_corpus: sparsity invariant violated");

    corpus.push_back({std::move(sample), std::move(doc)});
  }
  return corpus;
}

std::optional<ParsedQuestion> parse_question(const std::string& question) {
  ParsedQuestion out;
  if (question.rfind(kLookupPrefix, 0) == 0 && question.size() > strlen(kLookupPrefix) &&
      question.back() == '?') {
    std::string key =
        question.substr(strlen(kLookupPrefix),
                        question.size() - strlen(kLookupPrefix) - 1);
    if (key.empty() || key.find(' ') != std::string::npos) return std::nullopt;
    out.type = ParsedQuestion::Type::Lookup;
    out.keys = {std::move(key)};
    return out;
  }
  if (question.rfind(kComparisonPrefix, 0) == 0 &&
      question.size() > strlen(kComparisonPrefix) + strlen(kComparisonSuffix) &&
      question.compare(question.size() - strlen(kComparisonSuffix),
                       strlen(kComparisonSuffix), kComparisonSuffix) == 0) {
    std::string middle =
        question.substr(strlen(kComparisonPrefix),
                        question.size() - strlen(kComparisonPrefix) -
                            strlen(kComparisonSuffix));
    size_t sep = middle.find(kComparisonMid);
    if (sep == std::string::npos) return std::nullopt;
    std::string k1 = middle.substr(0, sep);
    std::string k2 = middle.substr(sep + strlen(kComparisonMid));
    if (k1.empty() || k2.empty() || k1.find(' ') != std::string::npos ||
        k2.find(' ') != std::string::npos)
      return std::nullopt;
    out.type = ParsedQuestion::Type::Comparison;
    out.keys = {std::move(k1), std::move(k2)};
    return out;
  }
  return std::nullopt;
}

OracleResult answer_oracle(const QASample& sample, const SyntheticDocument& doc) {
  std::optional<ParsedQuestion> q = parse_question(sample.question);
  if (!q.has_value())
    throw std::invalid_argument("answer_oracle: unrecognized question template: " +
                                sample.question);

  auto locate = [&](const std::string& key) -> std::pair<int, const Fact*> {
    for (int j = 0; j < doc.page_count(); ++j)
      for (const Fact& f : doc.pages[j])
        if (f.key == key) return {j + 1, &f};
    throw KeyNotFoundError("answer_oracle: key not in document: " + key);
  };

  OracleResult out;
  if (q->type == ParsedQuestion::Type::Lookup) {
    auto [page, fact] = locate(q->keys[0]);
    out.answers = {fact->value};
    out.evidence = {page};
  } else {
    auto [p1, f1] = locate(q->keys[0]);
    auto [p2, f2] = locate(q->keys[1]);
    out.answers = {f1->value == f2->value ? "yes" : "no"};
    out.evidence = {p1, p2};
  }
  return out;
}

void save_corpus(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_corpus: cannot open " + path);
  for (const CorpusEntry& entry : corpus) {
    nlohmann::ordered_json obj;
    obj["id"] = entry.sample.sample_id;
    obj["question"] = entry.sample.question;
    nlohmann::ordered_json pages = nlohmann::ordered_json::array();
    for (const auto& page : entry.doc.pages) {
      nlohmann::ordered_json facts = nlohmann::ordered_json::array();
      for (const Fact& f : page)
        facts.push_back(nlohmann::ordered_json::array({f.key, f.value}));
      pages.push_back(std::move(facts));
    }
    obj["pages"] = std::move(pages);
    obj["answers"] = entry.sample.gold_answers;
    obj["evidence_pages"] = std::vector<int>(entry.sample.gold_evidence.begin(),
                                             entry.sample.gold_evidence.end());
    obj["hops"] = entry.sample.hops;
    obj["category"] = entry.sample.category;
    out << obj.dump() << "\n";
  }
}

}  // namespace evigrpo
