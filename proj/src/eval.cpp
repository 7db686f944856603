#include "evigrpo/eval.hpp"

#include <cstdio>
#include <fstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

namespace evigrpo {

namespace {

[[noreturn]] void schema_fail(int line, const std::string& msg) {
  throw SchemaError("line " + std::to_string(line) + ": " + msg);
}

CorpusEntry parse_record(const nlohmann::json& obj, int line) {
  if (!obj.is_object()) schema_fail(line, "record is not a JSON object");
  for (const char* field : {"id", "question", "pages", "answers", "evidence_pages"})
    if (!obj.contains(field)) schema_fail(line, std::string("missing field ") + field);

  CorpusEntry entry;
  if (!obj["id"].is_string()) schema_fail(line, "id must be a string");
  entry.sample.sample_id = obj["id"].get<std::string>();
  if (!obj["question"].is_string()) schema_fail(line, "question must be a string");
  entry.sample.question = obj["question"].get<std::string>();

  const auto& pages = obj["pages"];
  if (!pages.is_array() || pages.empty())
    schema_fail(line, "pages must be a nonempty array");
  std::unordered_set<std::string> seen_keys;
  for (const auto& page : pages) {
    if (!page.is_array()) schema_fail(line, "page must be an array of facts");
    std::vector<Fact> facts;
    for (const auto& fact : page) {
      if (!fact.is_array() || fact.size() != 2 || !fact[0].is_string() ||
          !fact[1].is_string())
        schema_fail(line, "fact must be a [key, value] string pair");
      Fact f{fact[0].get<std::string>(), fact[1].get<std::string>()};
      if (!seen_keys.insert(f.key).second)
        schema_fail(line, "duplicate key within document: " + f.key);
      facts.push_back(std::move(f));
    }
    entry.doc.pages.push_back(std::move(facts));
  }
  entry.doc.doc_id = entry.sample.sample_id;
  entry.sample.page_count = entry.doc.page_count();

  const auto& answers = obj["answers"];
  if (!answers.is_array() || answers.empty())
    schema_fail(line, "answers must be a nonempty array");
  for (const auto& a : answers) {
    if (!a.is_string()) schema_fail(line, "answers must be strings");
    entry.sample.gold_answers.push_back(a.get<std::string>());
  }

  const auto& evidence = obj["evidence_pages"];
  if (!evidence.is_array()) schema_fail(line, "evidence_pages must be an array");
  for (const auto& e : evidence) {
    if (!e.is_number_integer()) schema_fail(line, "evidence page must be an integer");
    const int page = e.get<int>();
    if (page < 1 || page > entry.sample.page_count)
      schema_fail(line, "evidence page out of range: " + std::to_string(page));
    if (!entry.sample.gold_evidence.insert(page).second)
      schema_fail(line, "duplicate evidence page: " + std::to_string(page));
  }

  entry.sample.hops = static_cast<int>(entry.sample.gold_evidence.size());
  if (obj.contains("hops")) {
    if (!obj["hops"].is_number_integer() || obj["hops"].get<int>() < 1)
      schema_fail(line, "hops must be a positive integer");
    entry.sample.hops = obj["hops"].get<int>();
  }
  if (obj.contains("category")) {
    if (!obj["category"].is_string()) schema_fail(line, "category must be a string");
    entry.sample.category = obj["category"].get<std::string>();
  }
  return entry;
}

}  // namespace

Corpus load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_dataset: cannot open " + path);
  Corpus corpus;
  std::string raw_line;
  int line = 0;
  std::unordered_set<std::string> seen_ids;
  while (std::getline(in, raw_line)) {
    ++line;
    if (raw_line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json obj = nlohmann::json::parse(raw_line, nullptr, false);
    if (obj.is_discarded()) schema_fail(line, "invalid JSON");
    CorpusEntry entry = parse_record(obj, line);
    if (!seen_ids.insert(entry.sample.sample_id).second)
      schema_fail(line, "duplicate sample id: " + entry.sample.sample_id);
    corpus.push_back(std::move(entry));
  }
  return corpus;
}

std::vector<PredictionRecord> load_predictions(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_predictions: cannot open " + path);
  std::vector<PredictionRecord> out;
  std::string raw_line;
  int line = 0;
  while (std::getline(in, raw_line)) {
    ++line;
    if (raw_line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json obj = nlohmann::json::parse(raw_line, nullptr, false);
    if (obj.is_discarded()) schema_fail(line, "invalid JSON");
    if (!obj.is_object() || !obj.contains("id") || !obj.contains("response") ||
        !obj["id"].is_string() || !obj["response"].is_string())
      schema_fail(line, "prediction record needs string id and response");
    out.push_back({obj["id"].get<std::string>(), obj["response"].get<std::string>()});
  }
  return out;
}

double evidence_recall(const std::set<int>& predicted, const std::set<int>& gold) {
  if (gold.empty()) return 0.0;
  size_t inter = 0;
  for (int g : gold) inter += predicted.count(g);
  return static_cast<double>(inter) / static_cast<double>(gold.size());
}

namespace {

// Common scoring core over one rendered/predicted response per sample.
EvalRow score_responses(const std::vector<std::string>& raws, const Corpus& corpus,
                        PsfKind psf, const AnlsConfig& cfg,
                        const std::string& dataset_name) {
  EvalRow row;
  row.dataset = dataset_name;
  row.n_samples = static_cast<int>(corpus.size());
  if (corpus.empty()) return row;

  double anls_sum = 0.0, pages_sum = 0.0, recall_sum = 0.0;
  int parsed_count = 0, recall_count = 0;
  for (size_t i = 0; i < corpus.size(); ++i) {
    const QASample& sample = corpus[i].sample;
    pages_sum += sample.page_count;
    ParseResult parsed = parse_response(raws[i], psf);
    if (parsed.ok()) {
      ++parsed_count;
      anls_sum += anls(parsed.response.answer, sample.gold_answers, cfg);
    }
    if (psf != PsfKind::NoEvidence && !sample.gold_evidence.empty()) {
      ++recall_count;
      if (parsed.ok())
        recall_sum += evidence_recall(parsed.response.evidence->predicted_set,
                                      sample.gold_evidence);
    }
  }
  row.mean_pages = pages_sum / row.n_samples;
  row.mean_anls = anls_sum / row.n_samples;
  row.format_rate = static_cast<double>(parsed_count) / row.n_samples;
  if (psf != PsfKind::NoEvidence && recall_count > 0)
    row.evidence_recall = recall_sum / recall_count;
  return row;
}

}  // namespace

EvalRow evaluate(const PolicyParams& params, const Corpus& corpus, PsfKind psf,
                 const AnlsConfig& cfg, const std::string& dataset_name) {
  std::vector<std::string> raws;
  raws.reserve(corpus.size());
  for (const CorpusEntry& entry : corpus) {
    SampleContext ctx = make_context(entry.sample, entry.doc);
    raws.push_back(greedy_response(params, ctx, psf).raw);
  }
  return score_responses(raws, corpus, psf, cfg, dataset_name);
}

EvalRow evaluate(const std::vector<PredictionRecord>& predictions,
                 const Corpus& corpus, PsfKind psf, const AnlsConfig& cfg,
                 const std::string& dataset_name) {
  std::unordered_map<std::string, const std::string*> by_id;
  for (const PredictionRecord& p : predictions) by_id[p.id] = &p.response;
  std::vector<std::string> raws;
  raws.reserve(corpus.size());
  for (const CorpusEntry& entry : corpus) {
    auto it = by_id.find(entry.sample.sample_id);
    if (it == by_id.end())
      throw MissingPredictionError("no prediction for sample " + entry.sample.sample_id);
    raws.push_back(*it->second);
  }
  return score_responses(raws, corpus, psf, cfg, dataset_name);
}

double latent_evidence_recall(const PolicyParams& params, const Corpus& corpus) {
  double recall_sum = 0.0;
  int count = 0;
  for (const CorpusEntry& entry : corpus) {
    if (entry.sample.gold_evidence.empty()) continue;
    FactoredDist dist = distribution(params, make_context(entry.sample, entry.doc));
    std::set<int> decoded;
    for (int j = 0; j < dist.page_probs.size(); ++j)
      if (dist.page_probs[j] >= 0.5) decoded.insert(j + 1);
    recall_sum += evidence_recall(decoded, entry.sample.gold_evidence);
    ++count;
  }
  return count == 0 ? 0.0 : recall_sum / count;
}

namespace {

std::string fixed(double value, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, value);
  return buf;
}

}  // namespace

std::string emit_report(const EvalReport& report, ReportFormat format) {
  if (format == ReportFormat::Json) {
    nlohmann::ordered_json out;
    out["metadata"] = {
        {"anls_threshold", report.anls_threshold},
        {"anls_scale", "x100"},
        {"recall_aggregation", "macro_excluding_empty_gold"},
    };
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const EvalRow& row : report.rows) {
      nlohmann::ordered_json r;
      r["dataset"] = row.dataset;
      r["n_samples"] = row.n_samples;
      r["mean_pages"] = row.mean_pages;
      r["mean_anls_x100"] = 100.0 * row.mean_anls;
      if (row.evidence_recall.has_value())
        r["evidence_recall_x100"] = 100.0 * *row.evidence_recall;
      else
        r["evidence_recall_x100"] = nullptr;
      r["format_rate"] = row.format_rate;
      rows.push_back(std::move(r));
    }
    out["datasets"] = std::move(rows);
    return out.dump(2) + "\n";
  }

  std::string md =
      "| dataset | samples | mean pages | ANLS x100 | evidence recall x100 | "
      "format rate |\n|---|---|---|---|---|---|\n";
  for (const EvalRow& row : report.rows) {
    md += "| " + row.dataset + " | " + std::to_string(row.n_samples) + " | " +
          fixed(row.mean_pages, 2) + " | " + fixed(100.0 * row.mean_anls, 2) + " | " +
          (row.evidence_recall.has_value() ? fixed(100.0 * *row.evidence_recall, 2)
                                           : std::string("n/a")) +
          " | " + fixed(row.format_rate, 3) + " |\n";
  }
  return md;
}

void write_reports(const EvalReport& report, const std::string& dir) {
  for (auto [name, format] :
       {std::pair{"/report.json", ReportFormat::Json},
        std::pair{"/report.md", ReportFormat::Markdown}}) {
    std::ofstream out(dir + name, std::ios::binary);
    if (!out) throw std::runtime_error("write_reports: cannot write under " + dir);
    out << emit_report(report, format);
  }
}

}  // namespace evigrpo
