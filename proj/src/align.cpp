#include "ucim/align.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

namespace ucim {

namespace {

struct Range {
  double lo = 0.0;
  double hi = 0.0;
  bool present = false;

  void add(double m) {
    lo = present ? std::min(lo, m) : m;
    hi = present ? std::max(hi, m) : m;
    present = true;
  }
};

double map_magnitude(double m, const Range& r, const AlignmentSpec& spec) {
  double y = 0.0;
  if (r.hi == r.lo) {
    y = m;
  } else {
    y = (m - r.lo) / (r.hi - r.lo) * (spec.ul - spec.ll) + spec.ll;
  }
  return std::clamp(y, spec.ll, spec.ul);
}

}  // namespace

AlignmentSpec AlignmentSpec::for_exponent(int e_shared, std::size_t index) {
  if (e_shared < Half::kMinExponent || e_shared > Half::kMaxExponent) {
    throw std::out_of_range("AlignmentSpec: exponent outside the FP16 normal range");
  }
  AlignmentSpec s;
  s.index = index;
  s.e_shared = e_shared;
  s.ll = std::ldexp(1.0, e_shared);
  s.ul = std::ldexp(2.0 - 0x1p-10, e_shared);
  return s;
}

int fp16_exponent_of(double v) {
  if (v == 0.0 || !std::isfinite(v)) throw std::invalid_argument("fp16_exponent_of: need a finite nonzero value");
  return std::clamp(std::ilogb(v), Half::kMinExponent, Half::kMaxExponent);
}

std::vector<int> sorted_exponents(std::span<const double> values) {
  std::vector<int> exps;
  for (double v : values) {
    if (v != 0.0) exps.push_back(fp16_exponent_of(v));
  }
  std::sort(exps.begin(), exps.end(), std::greater<>());
  return exps;
}

AlignmentSpec select_exponent(std::span<const double> values, std::size_t index) {
  if (index == 0) throw std::invalid_argument("select_exponent: index is 1-based");
  const std::vector<int> exps = sorted_exponents(values);
  if (exps.empty()) {
    AlignmentSpec s = AlignmentSpec::for_exponent(Half::kMinExponent, index);
    s.degenerate = true;
    return s;
  }
  const std::size_t rank = std::min(index, exps.size());
  return AlignmentSpec::for_exponent(exps[rank - 1], index);
}

std::vector<double> rescale_block_real(std::span<const double> values, const AlignmentSpec& spec, ZeroPolicy zeros) {
  std::vector<double> out(values.begin(), values.end());
  if (spec.degenerate) return out;

  Range pos;
  Range neg;
  for (double v : values) {
    if (v > 0.0) pos.add(v);
    if (v < 0.0) neg.add(-v);
  }
  for (double& v : out) {
    if (v > 0.0) {
      v = map_magnitude(v, pos, spec);
    } else if (v < 0.0) {
      v = -map_magnitude(-v, neg, spec);
    } else {
      v = zeros == ZeroPolicy::kLowerLimit ? spec.ll : 0.0;
    }
  }
  return out;
}

Half quantize_to_exponent(double v, int e_shared) {
  if (v == 0.0) return kPosZero;
  const double scaled = (std::ldexp(std::fabs(v), -e_shared) - 1.0) * 1024.0;
  const double q = std::clamp(std::nearbyint(scaled), 0.0, 1023.0);
  return compose({std::signbit(v) ? 1u : 0u, static_cast<unsigned>(e_shared + Half::kBias),
                  static_cast<unsigned>(q)});
}

std::vector<Half> rescale_block(std::span<const double> values, const AlignmentSpec& spec, ZeroPolicy zeros) {
  std::vector<Half> out;
  out.reserve(values.size());
  if (spec.degenerate) {
    for (double v : values) out.push_back(from_real(v));
    return out;
  }
  for (double y : rescale_block_real(values, spec, zeros)) out.push_back(quantize_to_exponent(y, spec.e_shared));
  return out;
}

AlignedLayer align_layer(const WeightMatrix& w, std::size_t n, std::size_t index, std::uint16_t layer_id,
                         ZeroPolicy zeros) {
  if (n == 0) throw std::invalid_argument("align_layer: n must be positive");
  if (w.values.size() != w.rows * w.cols) throw std::invalid_argument("align_layer: shape mismatch");
  const std::size_t groups = groups_per_row(w.cols, n);
  AlignedLayer out;
  out.weights.resize(w.values.size());
  out.specs.reserve(w.rows * groups);
  for (std::size_t r = 0; r < w.rows; ++r) {
    for (std::size_t g = 0; g < groups; ++g) {
      const std::size_t begin = g * n;
      const std::size_t len = std::min(n, w.cols - begin);
      const std::span<const double> block(w.values.data() + r * w.cols + begin, len);
      const AlignmentSpec spec = select_exponent(block, index);
      const std::vector<Half> aligned = rescale_block(block, spec, zeros);
      std::copy(aligned.begin(), aligned.end(), out.weights.begin() + static_cast<std::ptrdiff_t>(r * w.cols + begin));
      out.specs.push_back({layer_id, static_cast<std::uint32_t>(r * groups + g), spec});
    }
  }
  return out;
}

AlignedModel align_model(std::span<const WeightMatrix> layers, std::size_t n, std::size_t index, ZeroPolicy zeros) {
  AlignedModel m;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    m.layers.push_back(align_layer(layers[i], n, index, static_cast<std::uint16_t>(i), zeros));
  }
  return m;
}

bool is_aligned(std::span<const Half> weights, std::size_t rows, std::size_t cols, std::size_t n,
                std::span<const BlockSpec> specs) {
  if (n == 0 || weights.size() != rows * cols) return false;
  const std::size_t groups = groups_per_row(cols, n);
  if (specs.size() != rows * groups) return false;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const Half h = weights[r * cols + c];
      if (h.is_zero()) continue;
      const AlignmentSpec& spec = specs[r * groups + c / n].spec;
      if (spec.degenerate || h.exponent_field() != spec.exponent_field()) return false;
    }
  }
  return true;
}

double project_to_spec(double v, const AlignmentSpec& spec, ZeroPolicy zeros) {
  if (std::isnan(v)) return v;
  if (spec.degenerate) return 0.0;
  double y = 0.0;
  if (v > 0.0) {
    y = std::clamp(v, spec.ll, spec.ul);
  } else if (v < 0.0) {
    y = -std::clamp(-v, spec.ll, spec.ul);
  } else {
    y = zeros == ZeroPolicy::kLowerLimit ? spec.ll : 0.0;
  }
  return to_real(quantize_to_exponent(y, spec.e_shared));
}

}  // namespace ucim
