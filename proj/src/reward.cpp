#include "evigrpo/reward.hpp"

#include <algorithm>

#include "evigrpo/common.hpp"

namespace evigrpo {

size_t levenshtein(const std::string& a, const std::string& b) {
  const size_t m = a.size(), n = b.size();
  if (m == 0) return n;
  if (n == 0) return m;
  std::vector<size_t> prev(n + 1), cur(n + 1);
  for (size_t j = 0; j <= n; ++j) prev[j] = j;
  for (size_t i = 1; i <= m; ++i) {
    cur[0] = i;
    for (size_t j = 1; j <= n; ++j) {
      size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[n];
}

std::string normalize_answer(const std::string& s, const AnlsConfig& cfg) {
  std::string out = s;
  if (cfg.lowercase) out = lowercase(out);
  if (cfg.collapse_whitespace)
    out = collapse_whitespace(out);  // also trims
  else if (cfg.trim)
    out = trim(out);
  return out;
}

double anls(const std::string& prediction, const std::vector<std::string>& golds,
            const AnlsConfig& cfg) {
  if (golds.empty()) throw EmptyGoldListError("anls: empty gold list");
  const std::string np = normalize_answer(prediction, cfg);
  double best = 0.0;
  for (const std::string& g : golds) {
    const std::string ng = normalize_answer(g, cfg);
    double s;
    if (np.empty() && ng.empty()) {
      s = 1.0;
    } else {
      const double denom = static_cast<double>(std::max(np.size(), ng.size()));
      s = 1.0 - static_cast<double>(levenshtein(np, ng)) / denom;
    }
    if (s < 1.0 - cfg.threshold) s = 0.0;
    best = std::max(best, s);
  }
  return best;
}

double evidence_f1(const std::set<int>& predicted, const std::set<int>& gold,
                   int page_count, std::optional<int> predicted_count,
                   bool count_gate) {
  if (page_count < 1) throw std::invalid_argument("evidence_f1: page_count < 1");
  for (int p : predicted)
    if (p < 1 || p > page_count)
      throw PageOutOfRangeError("evidence_f1: predicted page " + std::to_string(p));
  for (int g : gold)
    if (g < 1 || g > page_count)
      throw PageOutOfRangeError("evidence_f1: gold page " + std::to_string(g));
  if (count_gate) {
    if (!predicted_count.has_value())
      throw std::invalid_argument("evidence_f1: count gate armed without predicted_count");
    if (*predicted_count != page_count) return 0.0;
  }
  const size_t denom = predicted.size() + gold.size();
  if (denom == 0) return 0.0;
  size_t inter = 0;
  for (int p : predicted) inter += gold.count(p);
  return 2.0 * static_cast<double>(inter) / static_cast<double>(denom);
}

int format_reward(const std::string& raw, PsfKind psf) {
  return parse_response(raw, psf).ok() ? 1 : 0;
}

RewardBreakdown total_reward(const std::string& raw, const QASample& sample,
                             PsfKind psf, const AnlsConfig& cfg) {
  RewardBreakdown out;
  ParseResult parsed = parse_response(raw, psf);
  if (!parsed.ok()) return out;  // all zero

  out.format = 1;
  out.accuracy = anls(parsed.response.answer, sample.gold_answers, cfg);

  if (psf != PsfKind::NoEvidence) {
    const EvidenceJudgment& ev = *parsed.response.evidence;
    const bool gate = !ev.is_indices_list();
    bool in_range = true;
    for (int p : ev.predicted_set)
      if (p < 1 || p > sample.page_count) in_range = false;
    if (gate && ev.predicted_count != sample.page_count) {
      out.evidence = 0.0;  // count gate; also covers any out-of-range judgment pages
    } else if (!in_range) {
      out.evidence = 0.0;  // indices naming nonexistent pages
    } else {
      out.evidence = evidence_f1(ev.predicted_set, sample.gold_evidence,
                                 sample.page_count, ev.predicted_count, gate);
    }
  }

  out.total = out.format + out.accuracy + out.evidence;
  return out;
}

}  // namespace evigrpo
