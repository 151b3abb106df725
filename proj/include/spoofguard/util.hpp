#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>

namespace spoofguard {

/// Shortest decimal text that parses back to the same double.
std::string format_double(double value);

/// Parses a finite double occupying the whole of `text` (surrounding blanks allowed).
std::optional<double> parse_double(std::string_view text);

/// 64-bit FNV-1a, used to fingerprint configurations embedded in artifacts.
std::uint64_t fnv1a64(std::string_view bytes);

std::string to_hex(std::uint64_t value);

/// Seeded generator whose draws do not depend on the standard library's distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform in [0, 1) with 53 random bits.
  double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return static_cast<std::uint64_t>(unit() * static_cast<double>(n)); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace spoofguard
