#pragma once

#include <array>
#include <cstdint>

namespace ucim {

// Philox4x32-10 block function (Salmon et al., SC'11).
using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

PhiloxCounter philox4x32_10(PhiloxCounter ctr, PhiloxKey key);

// SplitMix64 finalizer; used to derive keys and job seeds.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

constexpr std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) { return mix64(a ^ mix64(b)); }

// Access index used for one-shot (static) exposures.
inline constexpr std::uint64_t kStaticAccess = ~std::uint64_t{0};

/// Counter-based stream keyed by (master_seed, run). Every draw is a pure
/// function of its coordinates, so evaluation order never changes results.
class RngStream {
 public:
  RngStream(std::uint64_t master_seed, std::uint64_t run);

  // 32 random bits for lane `lane` at (word, access).
  std::uint32_t bits(std::uint32_t word, std::uint64_t access, std::uint32_t lane) const;

  // Lanes 4*group .. 4*group+3 in one block.
  PhiloxCounter block(std::uint32_t word, std::uint64_t access, std::uint32_t group) const;

  // Uniform in (0, 1) at (word, access, lane).
  double uniform(std::uint32_t word, std::uint64_t access, std::uint32_t lane) const;

  // True with probability p at (word, access, lane).
  bool bernoulli(double p, std::uint32_t word, std::uint64_t access, std::uint32_t lane) const;

  // Uniform 64-bit value at an arbitrary counter position; for generators
  // that are not tied to storage cells (dataset, initialization).
  std::uint64_t u64(std::uint64_t index) const;

  // Bernoulli draw from a raw 32-bit lane value; matches bernoulli().
  static bool below(double p, std::uint32_t lane_bits) {
    if (p <= 0.0) return false;
    if (p >= 1.0) return true;
    return (static_cast<double>(lane_bits) + 0.5) * 0x1p-32 < p;
  }

  std::uint64_t master_seed() const { return master_seed_; }
  std::uint64_t run() const { return run_; }

 private:
  std::uint64_t master_seed_;
  std::uint64_t run_;
  PhiloxKey key_;
};

// Sequential standard-normal draws (Box-Muller) from an RngStream.
class GaussianStream {
 public:
  explicit GaussianStream(const RngStream& rng) : rng_(rng) {}
  double next();

 private:
  RngStream rng_;
  std::uint64_t pos_ = 0;
};

}  // namespace ucim
