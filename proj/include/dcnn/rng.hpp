#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace dcnn {

/// Deterministic xoshiro256++ generator (Blackman & Vigna), state expanded
/// from the seed with splitmix64. The integer stream is identical on every
/// platform for a given seed; the exact algorithm is written out in the
/// README so it can be reimplemented independently.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();

  /// Uniform in [0, 1) with 53 significant bits: (next_u64() >> 11) * 2^-53.
  double next_double();

  /// Standard normal via Box-Muller. Draws are produced in pairs and the
  /// spare is cached, so the stream is reproducible call for call.
  double next_normal();

 private:
  std::array<std::uint64_t, 4> state_{};
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Named sub-seed derivation: seed XOR FNV-1a(tag), mixed through one
/// splitmix64 step. One master seed fans out into independent streams
/// (split, init, shuffle, ...) that stay individually reproducible.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag);

}  // namespace dcnn
