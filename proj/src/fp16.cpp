#include "ucim/fp16.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace ucim {

namespace {

constexpr std::size_t kMaxTerms = std::size_t{1} << 16;
constexpr int kMaxFractionBits = 40;

Half signed_zero(unsigned sign) { return Half(static_cast<std::uint16_t>(sign << 15)); }
Half signed_inf(unsigned sign) { return sign ? kNegInf : kPosInf; }

}  // namespace

Half from_real(double x) {
  if (std::isnan(x)) return kQuietNaN;
  const unsigned sign = std::signbit(x) ? 1u : 0u;
  if (std::isinf(x)) return signed_inf(sign);
  if (x == 0.0) return signed_zero(sign);

  int e2 = 0;
  const double m = std::frexp(std::fabs(x), &e2);  // m in [0.5, 1)
  int exponent = e2 - 1;
  // 11-bit significand rounded to nearest, ties to even.
  auto sig = static_cast<std::int64_t>(std::nearbyint(std::ldexp(m, 11)));
  if (sig == 2048) {
    sig = 1024;
    ++exponent;
  }
  if (exponent < Half::kMinExponent) return signed_zero(sign);
  if (exponent > Half::kMaxExponent) return signed_inf(sign);
  return compose({sign, static_cast<unsigned>(exponent + Half::kBias),
                  static_cast<unsigned>(sig - 1024)});
}

double to_real(Half h) {
  const double s = h.sign() ? -1.0 : 1.0;
  if (h.is_zero()) return s * 0.0;
  if (h.is_inf()) return s * std::numeric_limits<double>::infinity();
  if (h.is_nan()) return std::numeric_limits<double>::quiet_NaN();
  return s * std::ldexp(static_cast<double>(1024 + h.mantissa_field()), h.exponent() - 10);
}

FpProduct fp_mul(Half a, Half b) {
  FpProduct p;
  p.sign = a.sign() ^ b.sign();
  if (a.is_nan() || b.is_nan()) {
    p.kind = FpProduct::Kind::kNaN;
    return p;
  }
  if (a.is_inf() || b.is_inf()) {
    p.kind = (a.is_zero() || b.is_zero()) ? FpProduct::Kind::kNaN : FpProduct::Kind::kInf;
    return p;
  }
  if (a.is_zero() || b.is_zero()) {
    p.kind = FpProduct::Kind::kZero;
    return p;
  }
  p.kind = FpProduct::Kind::kFinite;
  p.exp_sum = a.exponent() + b.exponent();
  p.mant_prod = (1024u + a.mantissa_field()) * (1024u + b.mantissa_field());
  return p;
}

MacResult mac_with_emax(std::span<const FpProduct> products, int e_max, const MacConfig& cfg) {
  if (products.size() > kMaxTerms) throw std::length_error("mac: more than 65536 terms");
  const int frac = cfg.fraction_bits;
  if (frac < 0 || frac > kMaxFractionBits) throw std::invalid_argument("mac: fraction_bits out of range");

  MacResult r;
  r.e_max = e_max;

  bool pos_inf = false;
  bool neg_inf = false;
  std::int64_t acc = 0;
  for (const FpProduct& p : products) {
    switch (p.kind) {
      case FpProduct::Kind::kNaN:
        r.flags.nan = true;
        break;
      case FpProduct::Kind::kInf:
        (p.sign ? neg_inf : pos_inf) = true;
        break;
      case FpProduct::Kind::kZero:
        break;
      case FpProduct::Kind::kFinite: {
        const int shift = e_max - p.exp_sum;
        if (shift < 0) throw std::logic_error("mac: e_max below a term's exponent sum");
        std::uint64_t aligned = 0;
        if (frac >= FpProduct::kFractionBits) {
          const std::uint64_t widened = std::uint64_t{p.mant_prod} << (frac - FpProduct::kFractionBits);
          aligned = shift >= 64 ? 0 : widened >> shift;
        } else {
          const int total = FpProduct::kFractionBits - frac + shift;
          aligned = total >= 64 ? 0 : std::uint64_t{p.mant_prod} >> total;
        }
        const auto term = static_cast<std::int64_t>(aligned);
        acc += p.sign ? -term : term;
        break;
      }
    }
  }

  if (r.flags.nan || (pos_inf && neg_inf)) {
    r.flags.nan = true;
    r.value = kQuietNaN;
    return r;
  }
  if (pos_inf || neg_inf) {
    r.value = pos_inf ? kPosInf : kNegInf;
    return r;
  }
  if (acc == 0) {
    r.value = kPosZero;
    return r;
  }

  const unsigned sign = acc < 0 ? 1u : 0u;
  const std::uint64_t mag = acc < 0 ? static_cast<std::uint64_t>(-acc) : static_cast<std::uint64_t>(acc);
  const int lead = static_cast<int>(std::bit_width(mag)) - 1;
  const int exponent = e_max - frac + lead;
  if (exponent > Half::kMaxExponent) {
    r.flags.overflow = true;
    r.value = signed_inf(sign);
    return r;
  }
  if (exponent < Half::kMinExponent) {
    r.flags.underflow = true;
    r.value = signed_zero(sign);
    return r;
  }
  const std::uint64_t mant = lead >= 10 ? (mag >> (lead - 10)) : (mag << (10 - lead));
  r.value = compose({sign, static_cast<unsigned>(exponent + Half::kBias), static_cast<unsigned>(mant & 0x3FF)});
  return r;
}

MacResult mac(std::span<const FpProduct> products, const MacConfig& cfg) {
  bool any = false;
  int e_max = 0;
  for (const FpProduct& p : products) {
    if (!p.is_finite()) continue;
    e_max = any ? std::max(e_max, p.exp_sum) : p.exp_sum;
    any = true;
  }
  return mac_with_emax(products, e_max, cfg);
}

Half pack(const FpProduct& p, const MacConfig& cfg) { return mac(std::span(&p, 1), cfg).value; }

MacResult dot(std::span<const Half> a, std::span<const Half> b, const MacConfig& cfg) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: length mismatch");
  std::vector<FpProduct> products(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) products[i] = fp_mul(a[i], b[i]);
  return mac(products, cfg);
}

}  // namespace ucim
