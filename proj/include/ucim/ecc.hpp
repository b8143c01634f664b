#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ucim {

// Fixed-capacity bit vector for one data row (bit 0 is the first stored bit).
class BitRow {
 public:
  static constexpr std::size_t kCapacity = 128;

  BitRow() = default;
  explicit BitRow(std::size_t size);

  std::size_t size() const { return size_; }
  bool get(std::size_t i) const { return (words_[i >> 6] >> (i & 63)) & 1u; }
  void set(std::size_t i, bool v);
  void flip(std::size_t i) { words_[i >> 6] ^= std::uint64_t{1} << (i & 63); }
  bool any() const { return (words_[0] | words_[1]) != 0; }
  std::size_t popcount() const;

  friend bool operator==(const BitRow&, const BitRow&) = default;

 private:
  std::array<std::uint64_t, 2> words_{};
  std::size_t size_ = 0;
};

// Weights per tile row and exponent field width.
inline constexpr std::size_t kWeightsPerRow = 16;
inline constexpr std::size_t kExponentBits = 5;
// Largest data row the One4N codec emits.
inline constexpr std::size_t kMaxRowDataBits = 104;
// Largest data length 7 Hamming bits can cover (2^7 - 7 - 1).
inline constexpr std::size_t kMaxSecdedDataBits = 120;
inline constexpr std::size_t kParityBits = 8;

// Bits protected per block of n weight rows: 16 shared exponents + 16*n signs.
constexpr std::size_t total_protected_bits(std::size_t n) { return kExponentBits * kWeightsPerRow + n * kWeightsPerRow; }

struct BlockLayout {
  std::size_t n = 8;

  std::size_t exp_bits() const { return kExponentBits; }
  std::size_t sign_bits_per_block() const { return kWeightsPerRow * n; }
  std::size_t data_bits_per_block() const { return total_protected_bits(n); }
  std::size_t row_count() const;
  // Near-equal split of the block's bits; earlier rows take the extra bit.
  std::vector<std::size_t> row_sizes() const;
};

/// Packs one block: exponents first (weight 0..15, 5 bits each, MSB first),
/// then signs row-major (block row r, column c at 80 + 16r + c), split over
/// row_count() rows in stream order.
std::vector<BitRow> pack_block(std::span<const std::uint8_t> shared_exponents, std::span<const std::uint8_t> signs,
                               const BlockLayout& layout);

struct UnpackedBlock {
  std::vector<std::uint8_t> shared_exponents;  // 16 entries, 5 bits each
  std::vector<std::uint8_t> signs;             // 16 * n entries, 0/1
};

UnpackedBlock unpack_block(std::span<const BitRow> rows, const BlockLayout& layout);

// 1-based classical Hamming position of data bit i (non powers of two, ascending).
std::size_t hamming_position(std::size_t data_index);

/// Parity byte for `data`: bits 0..6 are the Hamming checks at positions
/// 1, 2, 4, ..., 64; bit 7 makes the whole codeword even parity.
std::uint8_t secded_encode(const BitRow& data);

enum class DecodeStatus : std::uint8_t { kNoError, kCorrectedSingle, kDetectedDouble };

std::string_view to_string(DecodeStatus s);

struct DecodeOutcome {
  DecodeStatus status = DecodeStatus::kNoError;
  // Hamming position of the corrected bit (0 = overall parity bit).
  std::optional<std::size_t> position;
  std::uint8_t syndrome = 0;
  BitRow data;
};

/// Syndrome r = recomputed checks XOR stored parity. r == 0: clean;
/// r[7] == 1: single error at r[6:0]; otherwise uncorrectable. A single-error
/// syndrome pointing past the codeword (three or more flips) is reported as
/// uncorrectable and the data is returned as stored.
DecodeOutcome secded_decode(const BitRow& data, std::uint8_t parity);

struct RowCodeword {
  BitRow data;
  std::uint8_t parity = 0;

  std::size_t size() const { return data.size() + kParityBits; }
  // Flip bit i of the stored codeword: data bits first, then parity bit
  // (i - data.size()).
  void flip(std::size_t i);
};

RowCodeword encode_row(const BitRow& data);

// Lowercase hex, data bits then parity byte, MSB first. The data field is
// zero padded to a whole number of nibbles.
std::string to_hex(const RowCodeword& cw);
RowCodeword from_hex(std::string_view hex, std::size_t data_bits);

// Check bits of a standard SECDED code over k data bits.
std::size_t secded_parity_bits(std::size_t k);

enum class ProtectionScheme : std::uint8_t { kTraditionalFull, kTraditionalExpSign, kRowBasedFull, kOne4N };

std::string_view to_string(ProtectionScheme s);

struct ArrayGeometry {
  std::size_t rows = 256;
  std::size_t weights_per_row = kWeightsPerRow;
  std::size_t mantissa_bits = 10;

  std::size_t weights() const { return rows * weights_per_row; }
};

struct OverheadReport {
  ProtectionScheme scheme = ProtectionScheme::kOne4N;
  std::size_t redundant_bits = 0;
  std::size_t exponent_sram_cells = 0;
  // One4N only: rows % n != 0, so the last block is partial.
  bool remainder_block = false;
};

OverheadReport overhead_accounting(ProtectionScheme scheme, std::size_t n, const ArrayGeometry& array = {});

}  // namespace ucim
