#pragma once

// Small deterministic utilities shared across the library: a fixed-algorithm
// RNG (so seeded runs are byte-identical regardless of standard library) and
// a handful of string helpers.

#include <cstdint>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

namespace evigrpo {

// splitmix64 step; also used as the hash combiner for seed derivation.
uint64_t splitmix64(uint64_t& state);

// Order-sensitive mix of a seed with salts, for deriving independent streams
// (per document, per step, per rollout, ...).
uint64_t hash_mix(std::initializer_list<uint64_t> parts);

// Deterministic generator with explicitly coded distributions. std::mt19937
// plus std distributions would be implementation-defined; byte-identical
// reruns are a contract here.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() { return splitmix64(state_); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [lo, hi], inclusive.
  int uniform_int(int lo, int hi);

  bool bernoulli(double p) { return uniform() < p; }

  // Standard normal via Box-Muller (no cached spare, keeps streams simple).
  double normal();

  // Index into a nonempty weight vector, proportional to weights.
  int weighted_pick(const std::vector<double>& weights);

 private:
  uint64_t state_;
};

// ---- string helpers ----

std::string trim(std::string_view s);
std::string lowercase(std::string_view s);
// Collapses every run of whitespace to a single space (no leading/trailing).
std::string collapse_whitespace(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);
bool is_whitespace_only(std::string_view s);

}  // namespace evigrpo
