#pragma once

// Self-contained verification suites with deliberately independent oracle
// implementations of the scoring math (bitmask brute force for the evidence
// reward, full-matrix DP for the edit distance) plus a central finite
// difference check of the objective gradient. The CLI exposes these as the
// check-rewards and grad-check subcommands.

#include <cstdint>
#include <string>
#include <vector>

namespace evigrpo {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;  // worst-case error, counts, timing notes
};

// Every (P, G) pair over N <= 6 pages, compared exactly: the gateless indices
// form, the armed gate with a matching declared count, and the armed gate
// with mismatching counts.
CheckResult check_evidence_reward_oracle();

// anls against an independent normalizer + full-matrix DP on random string
// pairs (lengths <= 30, alphabet exercises case and whitespace collapsing).
CheckResult check_anls_oracle(int pairs = 10000, uint64_t seed = 1);

// Advantage standardization on random groups: |mean| <= 1e-9 and population
// std within 1e-9 of 1 when the guard is untriggered; all-equal groups come
// back all-zero.
CheckResult check_advantages(int groups = 1000, int group_size = 8,
                             uint64_t seed = 2);

std::vector<CheckResult> run_reward_checks();

struct GradCheckConfig {
  int batches = 100;
  uint64_t seed = 3;
  double step = 1e-5;       // central-difference displacement
  double tolerance = 1e-4;  // max relative error per coordinate
};

// Analytic gradient of the clipped-surrogate-plus-KL loss vs central finite
// differences, on random policies, references, and rollout batches across
// all formats and both KL modes. Batches sitting numerically on a clip
// boundary are redrawn (the min is nondifferentiable there by design).
CheckResult check_gradient(const GradCheckConfig& cfg = {});

std::vector<CheckResult> run_grad_checks();

}  // namespace evigrpo
