#pragma once

#include <cstdint>
#include <string_view>

namespace irmae {

// Counter-based generator. Every output is a pure function of (key, counter),
// and child streams are keyed by a label hash instead of by draw position, so
// splitting off a child neither consumes draws from the parent nor depends on
// how many siblings were split before it.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  // Independent child stream identified by `label`.
  Rng split(std::string_view label) const;
  Rng split(std::string_view label, std::uint64_t index) const;

  std::uint64_t next_u64();

  // Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi);

  // Uniform integer in [lo, hi], both inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

  // Standard normal via Box-Muller (two draws per sample, no caching).
  double normal();

 private:
  Rng(std::uint64_t key, std::uint64_t counter) : key_(key), counter_(counter) {}

  std::uint64_t key_;
  std::uint64_t counter_;
};

}  // namespace irmae
