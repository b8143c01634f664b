#include <chrono>
#include <cmath>
#include <sstream>

#include "ucim/ecc.hpp"
#include "ucim/rng.hpp"
#include "ucim/sweep.hpp"

namespace ucim {

namespace {

// Truncating product computed from exact real values, independent of the
// integer datapath.
Half truncated_product(Half a, Half b) {
  if (a.is_nan() || b.is_nan()) return kQuietNaN;
  const unsigned sign = a.sign() ^ b.sign();
  if (a.is_inf() || b.is_inf()) {
    if (a.is_zero() || b.is_zero()) return kQuietNaN;
    return sign ? kNegInf : kPosInf;
  }
  const double p = to_real(a) * to_real(b);
  if (p == 0.0) return kPosZero;
  const double m = std::abs(p);
  const int e = std::ilogb(m);
  if (e > Half::kMaxExponent) return sign ? kNegInf : kPosInf;
  if (e < Half::kMinExponent) return Half(static_cast<std::uint16_t>(sign << 15));
  const auto q = static_cast<unsigned>(std::floor(std::ldexp(m, 10 - e)));
  return compose({sign, static_cast<unsigned>(e + Half::kBias), q - 1024u});
}

bool same(Half x, Half y) { return x.bits == y.bits || (x.is_nan() && y.is_nan()); }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

SelftestReport selftest() {
  SelftestReport rep;
  auto line = [&](bool ok, const std::string& what) {
    rep.passed = rep.passed && ok;
    rep.lines.push_back(std::string(ok ? "PASS " : "FAIL ") + what);
  };

  {
    const auto t0 = std::chrono::steady_clock::now();
    constexpr std::size_t k = kMaxRowDataBits;
    const RngStream rng(0x5E1F, 0);
    BitRow data(k);
    for (std::size_t i = 0; i < k; ++i) {
      if (rng.u64(i) & 1u) data.set(i, true);
    }
    const RowCodeword clean = encode_row(data);
    std::size_t singles_ok = 0;
    std::size_t doubles_ok = 0;
    const std::size_t bits = clean.size();
    for (std::size_t i = 0; i < bits; ++i) {
      RowCodeword cw = clean;
      cw.flip(i);
      const DecodeOutcome d = secded_decode(cw.data, cw.parity);
      singles_ok += d.status == DecodeStatus::kCorrectedSingle && d.data == data;
      for (std::size_t j = i + 1; j < bits; ++j) {
        RowCodeword cw2 = cw;
        cw2.flip(j);
        doubles_ok += secded_decode(cw2.data, cw2.parity).status == DecodeStatus::kDetectedDouble;
      }
    }
    const std::size_t pairs = bits * (bits - 1) / 2;
    std::ostringstream os;
    os << "secded k=" << k << ": singles corrected " << singles_ok << "/" << bits << ", doubles detected "
       << doubles_ok << "/" << pairs << " (" << seconds_since(t0) << " s)";
    line(singles_ok == bits && doubles_ok == pairs, os.str());
  }

  {
    const auto t0 = std::chrono::steady_clock::now();
    std::size_t bad = 0;
    for (std::uint32_t v = 0; v <= 0xFFFF; ++v) {
      const Half h(static_cast<std::uint16_t>(v));
      if (compose(decompose(h)).bits != h.bits) ++bad;
      if (!h.is_special() && !h.is_zero() && from_real(to_real(h)).bits != h.bits) ++bad;
    }
    std::ostringstream os;
    os << "fp16 encodings: " << (65536 - bad) << "/65536 round-trip (" << seconds_since(t0) << " s)";
    line(bad == 0, os.str());
  }

  {
    const auto t0 = std::chrono::steady_clock::now();
    // Every encoding against partners covering each exponent field with
    // two mantissas plus signed zero, infinities and NaN.
    std::vector<Half> partners;
    for (unsigned e = 0; e < 32; ++e) {
      for (unsigned m : {0u, 0x2A5u}) partners.push_back(compose({e & 1u, e, m}));
    }
    partners.push_back(kPosZero);
    partners.push_back(Half(0x8000));
    std::size_t checked = 0;
    std::size_t bad = 0;
    for (std::uint32_t v = 0; v <= 0xFFFF; ++v) {
      const Half a(static_cast<std::uint16_t>(v));
      for (Half b : partners) {
        ++checked;
        if (!same(pack(fp_mul(a, b)), truncated_product(a, b))) ++bad;
      }
    }
    std::ostringstream os;
    os << "fp16 products: " << (checked - bad) << "/" << checked << " match the truncating reference ("
       << seconds_since(t0) << " s)";
    line(bad == 0, os.str());
  }
  return rep;
}

}  // namespace ucim
