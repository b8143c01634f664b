#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ucim/fp16.hpp"
#include "ucim/rng.hpp"

namespace ucim {

enum class FieldMask : std::uint8_t { kSign, kExponent, kMantissa, kFull };

constexpr std::uint16_t mask_bits(FieldMask m) {
  switch (m) {
    case FieldMask::kSign: return 0x8000;
    case FieldMask::kExponent: return 0x7C00;
    case FieldMask::kMantissa: return 0x03FF;
    case FieldMask::kFull: return 0xFFFF;
  }
  return 0;
}

std::string_view to_string(FieldMask m);
std::optional<FieldMask> parse_field_mask(std::string_view s);

enum class InjectionMode : std::uint8_t { kStatic, kDynamic };

std::string_view to_string(InjectionMode m);
std::optional<InjectionMode> parse_injection_mode(std::string_view s);

struct InjectionPlan {
  InjectionMode mode = InjectionMode::kStatic;
  double ber = 0.0;  // per bit, per exposure
  FieldMask mask = FieldMask::kFull;
  std::uint64_t master_seed = 0;

  // Throws std::invalid_argument when ber is outside [0, 1].
  void validate() const;
};

struct FlipEvent {
  std::uint64_t run = 0;
  std::uint32_t word_index = 0;
  std::uint32_t bit_index = 0;
  std::int64_t access_index = -1;  // -1 for static injection

  friend bool operator==(const FlipEvent&, const FlipEvent&) = default;
};

using FlipLog = std::vector<FlipEvent>;

// CSV with header run,word_index,bit_index,access_index.
void write_flip_log_csv(std::ostream& os, const FlipLog& log);

/// XOR pattern for one 16-bit cell: every bit set in `mask` flips
/// independently with probability `ber`.
std::uint16_t flip_pattern(const RngStream& rng, double ber, std::uint32_t word, std::uint64_t access,
                           std::uint16_t mask);

/// Positions (ascending) among `exposed` cells of a wide storage word that
/// flip. `exposed[i]` says whether bit i is subject to injection.
std::vector<std::uint32_t> sample_flips(const RngStream& rng, double ber, std::uint32_t word,
                                        std::uint64_t access, const std::vector<bool>& exposed);

struct StaticInjection {
  std::vector<Half> words;
  FlipLog log;
};

StaticInjection inject_static(std::span<const Half> words, const InjectionPlan& plan, std::uint64_t run = 0);

Half sample_dynamic(Half word, std::uint32_t word_index, std::uint64_t access_index, const InjectionPlan& plan,
                    std::uint64_t run = 0);

constexpr double expected_flips(double ber, double exposed_bits) { return ber * exposed_bits; }

}  // namespace ucim
