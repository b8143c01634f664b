#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace ucim {

// Bit pattern of an IEEE binary16 value. Subnormals are not modelled: an
// exponent field of 0 always decodes as (signed) zero.
struct Half {
  std::uint16_t bits = 0;

  constexpr Half() = default;
  constexpr explicit Half(std::uint16_t b) : bits(b) {}

  constexpr unsigned sign() const { return bits >> 15; }
  constexpr unsigned exponent_field() const { return (bits >> 10) & 0x1F; }
  constexpr unsigned mantissa_field() const { return bits & 0x3FF; }

  constexpr bool is_zero() const { return exponent_field() == 0; }
  constexpr bool is_special() const { return exponent_field() == 31; }
  constexpr bool is_inf() const { return is_special() && mantissa_field() == 0; }
  constexpr bool is_nan() const { return is_special() && mantissa_field() != 0; }

  // Unbiased exponent of a normal value.
  constexpr int exponent() const { return static_cast<int>(exponent_field()) - kBias; }

  static constexpr int kBias = 15;
  static constexpr int kMinExponent = -14;
  static constexpr int kMaxExponent = 15;

  friend constexpr bool operator==(Half, Half) = default;
};

struct HalfFields {
  unsigned sign = 0;
  unsigned exponent = 0;
  unsigned mantissa = 0;

  friend constexpr bool operator==(const HalfFields&, const HalfFields&) = default;
};

constexpr HalfFields decompose(Half h) {
  return {h.sign(), h.exponent_field(), h.mantissa_field()};
}

constexpr Half compose(const HalfFields& f) {
  return Half(static_cast<std::uint16_t>(((f.sign & 1u) << 15) | ((f.exponent & 0x1Fu) << 10) |
                                         (f.mantissa & 0x3FFu)));
}

inline constexpr Half kPosZero{0x0000};
inline constexpr Half kPosInf{0x7C00};
inline constexpr Half kNegInf{0xFC00};
inline constexpr Half kQuietNaN{0x7E00};
inline constexpr Half kOne{0x3C00};

// Round-to-nearest-even encode. Results below the smallest normal flush to
// signed zero; magnitudes that round past 65504 become infinity.
Half from_real(double x);

// Exact decode (subnormal patterns decode to signed zero).
double to_real(Half h);

/// Product of two FP16 values before alignment: exponent sum plus the
/// 22-bit mantissa product (2 integer bits, 20 fraction bits).
struct FpProduct {
  enum class Kind : std::uint8_t { kFinite, kZero, kInf, kNaN };

  Kind kind = Kind::kZero;
  unsigned sign = 0;
  int exp_sum = 0;
  std::uint32_t mant_prod = 0;

  static constexpr int kFractionBits = 20;

  bool is_zero() const { return kind == Kind::kZero; }
  bool is_finite() const { return kind == Kind::kFinite; }
};

FpProduct fp_mul(Half a, Half b);

struct MacConfig {
  // Fraction bits kept by the aligned accumulator.
  int fraction_bits = 14;
};

struct MacFlags {
  bool overflow = false;
  bool nan = false;
  // Normalized result fell below the smallest normal and was flushed.
  bool underflow = false;
};

struct MacResult {
  Half value;
  MacFlags flags;
  // Maximum exponent sum over nonzero finite terms (0 when there are none).
  int e_max = 0;
};

// Shift beyond which an aligned mantissa contributes exactly zero.
constexpr int shift_window(const MacConfig& cfg) { return cfg.fraction_bits + 2; }

/// Aligned accumulation of products. Terms are scaled to the largest
/// exponent sum, truncated to `fraction_bits`, summed left to right and the
/// total is normalized back to FP16 with truncation.
MacResult mac(std::span<const FpProduct> products, const MacConfig& cfg = {});

/// Same as mac() but aligned against an externally supplied maximum
/// exponent (the exponent pipeline's E_max). `e_max` must be at least the
/// exponent sum of every nonzero finite term.
MacResult mac_with_emax(std::span<const FpProduct> products, int e_max, const MacConfig& cfg = {});

// Convenience: value of a single product packed to FP16.
Half pack(const FpProduct& p, const MacConfig& cfg = {});

// Dot product of two equal-length vectors through fp_mul + mac.
MacResult dot(std::span<const Half> a, std::span<const Half> b, const MacConfig& cfg = {});

}  // namespace ucim
