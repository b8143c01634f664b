#include "ucim/rng.hpp"

#include <cmath>
#include <numbers>

namespace ucim {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53;
constexpr std::uint32_t kMul1 = 0xCD9E8D57;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85;

// Lanes at or above this value are reserved for u64().
constexpr std::uint32_t kAuxLane = 0x80000000u;

}  // namespace

PhiloxCounter philox4x32_10(PhiloxCounter ctr, PhiloxKey key) {
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = std::uint64_t{kMul0} * ctr[0];
    const std::uint64_t p1 = std::uint64_t{kMul1} * ctr[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kWeyl0;
    key[1] += kWeyl1;
  }
  return ctr;
}

RngStream::RngStream(std::uint64_t master_seed, std::uint64_t run)
    : master_seed_(master_seed), run_(run) {
  const std::uint64_t k = hash_combine(master_seed, run);
  key_ = {static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
}

PhiloxCounter RngStream::block(std::uint32_t word, std::uint64_t access, std::uint32_t group) const {
  const PhiloxCounter ctr{word, group, static_cast<std::uint32_t>(access), static_cast<std::uint32_t>(access >> 32)};
  return philox4x32_10(ctr, key_);
}

std::uint32_t RngStream::bits(std::uint32_t word, std::uint64_t access, std::uint32_t lane) const {
  return block(word, access, lane >> 2)[lane & 3];
}

double RngStream::uniform(std::uint32_t word, std::uint64_t access, std::uint32_t lane) const {
  return (static_cast<double>(bits(word, access, lane)) + 0.5) * 0x1p-32;
}

bool RngStream::bernoulli(double p, std::uint32_t word, std::uint64_t access, std::uint32_t lane) const {
  if (p <= 0.0) return false;
  if (p >= 1.0) return true;
  return below(p, bits(word, access, lane));
}

std::uint64_t RngStream::u64(std::uint64_t index) const {
  const PhiloxCounter ctr{static_cast<std::uint32_t>(index), kAuxLane,
                          static_cast<std::uint32_t>(index >> 32), 0};
  const PhiloxCounter out = philox4x32_10(ctr, key_);
  return (std::uint64_t{out[1]} << 32) | out[0];
}

double GaussianStream::next() {
  const double u1 = (static_cast<double>(rng_.u64(pos_++) >> 11) + 0.5) * 0x1p-53;
  const double u2 = (static_cast<double>(rng_.u64(pos_++) >> 11) + 0.5) * 0x1p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace ucim
