#include "evigrpo/annotate.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <stdexcept>
#include <thread>
#include <utility>

#include <httplib.h>
#include <json.hpp>

#include "evigrpo/common.hpp"
#include "evigrpo/synth.hpp"

namespace evigrpo {

namespace {

uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

constexpr uint64_t kAnnotateSalt = 0xA207A7Eull;

}  // namespace

std::string render_document(const SyntheticDocument& doc) {
  std::string out;
  for (size_t j = 0; j < doc.pages.size(); ++j) {
    out += "Page " + std::to_string(j + 1) + ":\n";
    for (const Fact& fact : doc.pages[j]) out += fact.key + ": " + fact.value + "\n";
  }
  return out;
}

OracleBackend::OracleBackend(const Corpus& corpus, OracleNoise noise, uint64_t seed)
    : noise_(noise), seed_(seed) {
  for (const CorpusEntry& entry : corpus) by_id_[entry.sample.sample_id] = &entry;
}

BackendReply OracleBackend::annotate(const AnnotateRequest& request) {
  auto it = by_id_.find(request.sample_id);
  if (it == by_id_.end())
    return TransportFailure{"unknown sample id: " + request.sample_id};
  const CorpusEntry& entry = *it->second;

  // Fresh stream per (sample, stage): calls are idempotent, stages independent.
  Rng rng(hash_mix({seed_, kAnnotateSalt, static_cast<uint64_t>(request.stage),
                    fnv1a64(request.sample_id)}));
  if (rng.bernoulli(noise_.transport_failure))
    return TransportFailure{"simulated outage"};

  // Verification re-derives from the raw facts; the draft in `content` is
  // deliberately ignored here.
  OracleResult oracle = answer_oracle(entry.sample, entry.doc);

  StructuredResponse resp;
  resp.think =
      "Locate the queried keys page by page; the matching facts give the answer.";
  EvidenceJudgment ev;
  ev.predicted_count = entry.sample.page_count;
  ev.judgments.assign(entry.sample.page_count, false);
  for (int page : oracle.evidence) {
    ev.judgments[page - 1] = true;
    ev.predicted_set.insert(page);
  }
  resp.evidence = std::move(ev);
  resp.answer = oracle.answers.front();
  if (rng.bernoulli(noise_.answer_corruption)) resp.answer += "_x";

  std::string text = render_response(resp, PsfKind::JudgmentsInferCount);
  if (rng.bernoulli(noise_.format_corruption)) {
    const std::string closer = "</answer>";
    if (auto pos = text.rfind(closer); pos != std::string::npos)
      text.erase(pos, closer.size());
  }
  return text;
}

RemoteBackend::RemoteBackend(RemoteConfig cfg) : cfg_(std::move(cfg)) {}

BackendReply RemoteBackend::annotate(const AnnotateRequest& request) {
  const auto scheme_pos = cfg_.url.find("://");
  if (scheme_pos == std::string::npos)
    return TransportFailure{"bad url: " + cfg_.url};
  const auto path_pos = cfg_.url.find('/', scheme_pos + 3);
  const std::string base =
      path_pos == std::string::npos ? cfg_.url : cfg_.url.substr(0, path_pos);
  const std::string path =
      path_pos == std::string::npos ? "/" : cfg_.url.substr(path_pos);

  httplib::Client client(base);
  client.set_connection_timeout(cfg_.timeout_seconds, 0);
  client.set_read_timeout(cfg_.timeout_seconds, 0);
  client.set_write_timeout(cfg_.timeout_seconds, 0);

  httplib::Headers headers;
  if (!cfg_.token_env.empty()) {
    if (const char* token = std::getenv(cfg_.token_env.c_str()); token && *token)
      headers.emplace("Authorization", std::string("Bearer ") + token);
  }

  const std::string body =
      nlohmann::json{{"prompt", request.prompt}, {"content", request.content}}.dump();

  std::string last_error = "no attempts made";
  for (int attempt = 0; attempt < cfg_.max_attempts; ++attempt) {
    if (attempt > 0 && cfg_.backoff_base_ms > 0)
      std::this_thread::sleep_for(
          std::chrono::milliseconds(cfg_.backoff_base_ms << (attempt - 1)));
    httplib::Result res = client.Post(path, headers, body, "application/json");
    if (!res) {
      last_error = "connection failed: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status != 200) {
      last_error = "http status " + std::to_string(res->status);
      continue;
    }
    nlohmann::json reply = nlohmann::json::parse(res->body, nullptr, false);
    if (reply.is_discarded() || !reply.is_object() || !reply.contains("text") ||
        !reply["text"].is_string()) {
      last_error = "malformed reply body";
      continue;
    }
    return reply["text"].get<std::string>();
  }
  return TransportFailure{last_error};
}

bool match_answers(const std::string& candidate,
                   const std::vector<std::string>& golds, const MatchConfig& cfg) {
  return anls(candidate, golds, cfg.anls) >= cfg.threshold;
}

const char* rejection_reason_name(RejectionReason r) {
  switch (r) {
    case RejectionReason::Stage1Mismatch: return "stage1_mismatch";
    case RejectionReason::Stage2Mismatch: return "stage2_mismatch";
    case RejectionReason::TransportError: return "transport_error";
    case RejectionReason::FormatError: return "format_error";
  }
  return "unknown";
}

namespace {

struct StageOutcome {
  std::optional<AnnotationCandidate> candidate;
  std::optional<RejectionReason> failure;  // TransportError or FormatError
};

StageOutcome stage_call(AnnotatorBackend& backend, const AnnotateRequest& request) {
  BackendReply reply = backend.annotate(request);
  if (std::holds_alternative<TransportFailure>(reply))
    return {std::nullopt, RejectionReason::TransportError};
  ParseResult parsed =
      parse_response(std::get<std::string>(reply), PsfKind::JudgmentsInferCount);
  if (!parsed.ok()) return {std::nullopt, RejectionReason::FormatError};
  AnnotationCandidate cand;
  cand.think = parsed.response.think;
  cand.judgments = parsed.response.evidence->judgments;
  cand.answer = parsed.response.answer;
  cand.raw = parsed.response.raw;
  return {std::move(cand), std::nullopt};
}

}  // namespace

PipelineResult run_pipeline(const Corpus& samples, AnnotatorBackend& backend,
                            const MatchConfig& cfg) {
  PipelineResult out;
  out.records.reserve(samples.size());
  out.summary.total = static_cast<int>(samples.size());

  for (const CorpusEntry& entry : samples) {
    AnnotationRecord rec;
    rec.sample_id = entry.sample.sample_id;
    const std::string doc_text = render_document(entry.doc);
    const std::string prompt = render_prompt(
        PsfKind::JudgmentsInferCount, entry.sample.question, entry.sample.page_count);

    StageOutcome stage1 = stage_call(backend, {rec.sample_id, prompt, doc_text, 1});
    if (stage1.failure) {
      rec.rejection = stage1.failure;
    } else {
      rec.stage1 = std::move(stage1.candidate);
      rec.stage1_match =
          match_answers(rec.stage1->answer, entry.sample.gold_answers, cfg);
      if (!rec.stage1_match) {
        rec.rejection = RejectionReason::Stage1Mismatch;
      } else {
        const std::string verify_content =
            doc_text + "\nDraft annotation:\n" + rec.stage1->raw + "\n";
        StageOutcome stage2 =
            stage_call(backend, {rec.sample_id, prompt, verify_content, 2});
        if (stage2.failure) {
          rec.rejection = stage2.failure;
        } else {
          rec.stage2 = std::move(stage2.candidate);
          rec.stage2_match =
              match_answers(rec.stage2->answer, entry.sample.gold_answers, cfg);
          if (*rec.stage2_match)
            rec.retained = true;
          else
            rec.rejection = RejectionReason::Stage2Mismatch;
        }
      }
    }

    if (rec.retained)
      ++out.summary.category_totals[entry.sample.category];
    else
      ++out.summary.rejections[rejection_reason_name(*rec.rejection)];
    out.records.push_back(std::move(rec));
  }

  out.summary.retained = 0;
  for (const AnnotationRecord& rec : out.records)
    out.summary.retained += rec.retained ? 1 : 0;
  out.summary.retention_rate =
      out.summary.total == 0
          ? 0.0
          : static_cast<double>(out.summary.retained) / out.summary.total;
  return out;
}

void export_evibench(const PipelineResult& result, const Corpus& samples,
                     const std::string& path) {
  if (result.records.size() != samples.size())
    throw std::invalid_argument("export_evibench: records and samples differ in size");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("export_evibench: cannot open " + path);

  for (size_t i = 0; i < samples.size(); ++i) {
    const AnnotationRecord& rec = result.records[i];
    const CorpusEntry& entry = samples[i];
    if (rec.sample_id != entry.sample.sample_id)
      throw std::invalid_argument("export_evibench: records misaligned with samples");
    if (!rec.retained) continue;

    nlohmann::ordered_json obj;
    obj["id"] = entry.sample.sample_id;
    obj["question"] = entry.sample.question;
    nlohmann::ordered_json pages = nlohmann::ordered_json::array();
    for (const auto& page : entry.doc.pages) {
      nlohmann::ordered_json facts = nlohmann::ordered_json::array();
      for (const Fact& fact : page)
        facts.push_back(nlohmann::ordered_json::array({fact.key, fact.value}));
      pages.push_back(std::move(facts));
    }
    obj["pages"] = std::move(pages);
    obj["answers"] = entry.sample.gold_answers;
    obj["evidence_pages"] =
        std::vector<int>(entry.sample.gold_evidence.begin(),
                         entry.sample.gold_evidence.end());
    obj["hops"] = entry.sample.hops;
    obj["category"] = entry.sample.category;
    obj["think"] = rec.stage2->think;
    obj["evidence_judgments"] = rec.stage2->judgments;
    out << obj.dump() << "\n";
  }
}

}  // namespace evigrpo
