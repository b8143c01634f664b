#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ucim/fp16.hpp"

namespace ucim {

// Shared exponent chosen for one block and the magnitude range it covers.
struct AlignmentSpec {
  std::size_t index = 1;  // 1-based rank into the descending exponent list
  int e_shared = 0;       // unbiased
  double ll = 1.0;        // 2^e_shared
  double ul = 2.0 - 0x1p-10;  // 2^e_shared * (2 - 2^-10)
  bool degenerate = false;    // block had no nonzero member

  static AlignmentSpec for_exponent(int e_shared, std::size_t index = 1);
  std::uint8_t exponent_field() const { return static_cast<std::uint8_t>(e_shared + Half::kBias); }
};

// What an exact zero weight becomes after rescaling.
enum class ZeroPolicy : std::uint8_t {
  kLowerLimit,  // +LL: keeps every member on the shared exponent
  kKeepZero,    // stays 0 and is skipped by the exponent check
};

// Unbiased exponent of |v| clamped to the FP16 normal range.
int fp16_exponent_of(double v);

// Descending exponent list of the nonzero members (duplicates kept).
std::vector<int> sorted_exponents(std::span<const double> values);

AlignmentSpec select_exponent(std::span<const double> values, std::size_t index);

/// Affine rescale of each sign class into its shared-exponent range:
/// positives map [min, max] -> [LL, UL], negatives mirror onto [-UL, -LL].
/// A sign class with a single distinct value is clamped into range instead.
std::vector<double> rescale_block_real(std::span<const double> values, const AlignmentSpec& spec,
                                       ZeroPolicy zeros = ZeroPolicy::kLowerLimit);

// Round |v| to the mantissa grid of the fixed exponent (ties to even),
// saturating inside [LL, UL].
Half quantize_to_exponent(double v, int e_shared);

std::vector<Half> rescale_block(std::span<const double> values, const AlignmentSpec& spec,
                                ZeroPolicy zeros = ZeroPolicy::kLowerLimit);

// A weight matrix stored row-major as [rows][cols]; blocks of n run along
// the column (input-channel) axis of each row (output channel).
struct WeightMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  double& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
};

constexpr std::size_t groups_per_row(std::size_t cols, std::size_t n) { return (cols + n - 1) / n; }

struct BlockSpec {
  std::uint16_t layer_id = 0;
  std::uint32_t block_id = 0;  // row * groups_per_row + group
  AlignmentSpec spec;
};

struct AlignedLayer {
  std::vector<Half> weights;  // same [rows][cols] layout
  std::vector<BlockSpec> specs;
};

AlignedLayer align_layer(const WeightMatrix& w, std::size_t n, std::size_t index, std::uint16_t layer_id = 0,
                         ZeroPolicy zeros = ZeroPolicy::kLowerLimit);

struct AlignedModel {
  std::vector<AlignedLayer> layers;
};

AlignedModel align_model(std::span<const WeightMatrix> layers, std::size_t n, std::size_t index,
                         ZeroPolicy zeros = ZeroPolicy::kLowerLimit);

/// Every nonzero weight of every block carries the exponent field stored
/// in `specs` (ordered by block id).
bool is_aligned(std::span<const Half> weights, std::size_t rows, std::size_t cols, std::size_t n,
                std::span<const BlockSpec> specs);

/// Clamp into the block's signed range and quantize; used as the
/// projection step of exponent-frozen training. Zero maps per `zeros`.
double project_to_spec(double v, const AlignmentSpec& spec, ZeroPolicy zeros = ZeroPolicy::kLowerLimit);

}  // namespace ucim
