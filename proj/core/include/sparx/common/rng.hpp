// Copyright 2026 The sparx Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string_view>

namespace sparx {

/// Counter-based generator: every draw is a pure function of (key, counter).
/// Child streams are derived with split(), so no global state is involved and
/// the draws of one stream never depend on how many draws another made.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : key_(mix(seed ^ 0x5158f1c1a2b3c4d5ULL)) {}

  Rng split(std::string_view label) const;
  Rng split(std::uint64_t index) const;

  std::uint64_t next_u64() { return mix(key_ + mix(++counter_)); }
  /// Uniform in the open interval (0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  /// Normal(0, stddev) resampled until |x| <= bound * stddev.
  double trunc_normal(double stddev, double bound = 2.0);
  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

  static std::uint64_t mix(std::uint64_t z);

 private:
  Rng(std::uint64_t key, int) : key_(key) {}
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace sparx
