#include "ucim/ecc.hpp"

#include <bit>
#include <stdexcept>

namespace ucim {

namespace {

constexpr bool is_power_of_two(std::size_t v) { return v != 0 && (v & (v - 1)) == 0; }

constexpr std::array<std::uint8_t, kMaxSecdedDataBits> make_position_table() {
  std::array<std::uint8_t, kMaxSecdedDataBits> table{};
  std::size_t pos = 0;
  for (std::size_t i = 0; i < table.size(); ++i) {
    do {
      ++pos;
    } while (is_power_of_two(pos));
    table[i] = static_cast<std::uint8_t>(pos);
  }
  return table;
}

constexpr auto kPositions = make_position_table();

// Inverse of hamming_position for a non power of two position.
constexpr std::size_t data_index_of(std::size_t pos) {
  std::size_t powers = 0;
  for (std::size_t p = 1; p <= pos; p <<= 1) ++powers;
  return pos - powers - 1;
}

std::uint8_t hamming_checks(const BitRow& data) {
  unsigned h = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.get(i)) h ^= kPositions[i];
  }
  return static_cast<std::uint8_t>(h);
}

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

}  // namespace

BitRow::BitRow(std::size_t size) : size_(size) {
  if (size > kCapacity) throw std::length_error("BitRow: size exceeds capacity");
}

void BitRow::set(std::size_t i, bool v) {
  const std::uint64_t bit = std::uint64_t{1} << (i & 63);
  if (v) {
    words_[i >> 6] |= bit;
  } else {
    words_[i >> 6] &= ~bit;
  }
}

std::size_t BitRow::popcount() const {
  return static_cast<std::size_t>(std::popcount(words_[0]) + std::popcount(words_[1]));
}

std::size_t BlockLayout::row_count() const {
  if (n == 0) throw std::invalid_argument("BlockLayout: n must be positive");
  return (data_bits_per_block() + kMaxRowDataBits - 1) / kMaxRowDataBits;
}

std::vector<std::size_t> BlockLayout::row_sizes() const {
  const std::size_t rows = row_count();
  const std::size_t total = data_bits_per_block();
  std::vector<std::size_t> sizes(rows, total / rows);
  for (std::size_t i = 0; i < total % rows; ++i) ++sizes[i];
  return sizes;
}

std::vector<BitRow> pack_block(std::span<const std::uint8_t> shared_exponents, std::span<const std::uint8_t> signs,
                               const BlockLayout& layout) {
  if (shared_exponents.size() != kWeightsPerRow) throw std::invalid_argument("pack_block: need 16 shared exponents");
  if (signs.size() != layout.sign_bits_per_block()) throw std::invalid_argument("pack_block: sign count mismatch");

  std::vector<BitRow> rows;
  for (std::size_t size : layout.row_sizes()) rows.emplace_back(size);

  std::size_t row = 0;
  std::size_t offset = 0;
  auto put = [&](bool bit) {
    if (offset == rows[row].size()) {
      ++row;
      offset = 0;
    }
    rows[row].set(offset++, bit);
  };
  for (std::uint8_t e : shared_exponents) {
    if (e > 31) throw std::invalid_argument("pack_block: exponent exceeds 5 bits");
    for (int b = static_cast<int>(kExponentBits) - 1; b >= 0; --b) put((e >> b) & 1u);
  }
  for (std::uint8_t s : signs) {
    if (s > 1) throw std::invalid_argument("pack_block: sign must be 0 or 1");
    put(s != 0);
  }
  return rows;
}

UnpackedBlock unpack_block(std::span<const BitRow> rows, const BlockLayout& layout) {
  const auto sizes = layout.row_sizes();
  if (rows.size() != sizes.size()) throw std::invalid_argument("unpack_block: row count mismatch");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != sizes[i]) throw std::invalid_argument("unpack_block: row size mismatch");
  }

  std::size_t row = 0;
  std::size_t offset = 0;
  auto take = [&]() {
    if (offset == rows[row].size()) {
      ++row;
      offset = 0;
    }
    return rows[row].get(offset++);
  };
  UnpackedBlock out;
  out.shared_exponents.resize(kWeightsPerRow);
  for (auto& e : out.shared_exponents) {
    unsigned v = 0;
    for (std::size_t b = 0; b < kExponentBits; ++b) v = (v << 1) | (take() ? 1u : 0u);
    e = static_cast<std::uint8_t>(v);
  }
  out.signs.resize(layout.sign_bits_per_block());
  for (auto& s : out.signs) s = take() ? 1 : 0;
  return out;
}

std::size_t hamming_position(std::size_t data_index) {
  if (data_index >= kMaxSecdedDataBits) throw std::out_of_range("hamming_position: index beyond 120 data bits");
  return kPositions[data_index];
}

std::uint8_t secded_encode(const BitRow& data) {
  if (data.size() > kMaxSecdedDataBits) throw std::length_error("secded_encode: more than 120 data bits");
  const std::uint8_t h = hamming_checks(data);
  const unsigned overall = (data.popcount() + static_cast<std::size_t>(std::popcount(h))) & 1u;
  return static_cast<std::uint8_t>(h | (overall << 7));
}

std::string_view to_string(DecodeStatus s) {
  switch (s) {
    case DecodeStatus::kNoError: return "no_error";
    case DecodeStatus::kCorrectedSingle: return "corrected_single";
    case DecodeStatus::kDetectedDouble: return "detected_double";
  }
  return "?";
}

DecodeOutcome secded_decode(const BitRow& data, std::uint8_t parity) {
  if (data.size() > kMaxSecdedDataBits) throw std::length_error("secded_decode: more than 120 data bits");
  DecodeOutcome out;
  out.data = data;

  const unsigned checks = hamming_checks(data) ^ (parity & 0x7Fu);
  const unsigned overall =
      (data.popcount() + static_cast<std::size_t>(std::popcount(static_cast<unsigned>(parity)))) & 1u;
  out.syndrome = static_cast<std::uint8_t>(checks | (overall << 7));

  if (out.syndrome == 0) return out;
  if (overall == 0) {
    out.status = DecodeStatus::kDetectedDouble;
    return out;
  }
  // Odd overall parity: a single flip at `checks` (0 = the overall bit).
  if (checks == 0 || is_power_of_two(checks)) {
    out.status = DecodeStatus::kCorrectedSingle;
    out.position = checks;
    return out;
  }
  const std::size_t index = data_index_of(checks);
  if (index >= data.size()) {
    out.status = DecodeStatus::kDetectedDouble;
    return out;
  }
  out.data.flip(index);
  out.status = DecodeStatus::kCorrectedSingle;
  out.position = checks;
  return out;
}

void RowCodeword::flip(std::size_t i) {
  if (i < data.size()) {
    data.flip(i);
  } else if (i < size()) {
    parity = static_cast<std::uint8_t>(parity ^ (1u << (i - data.size())));
  } else {
    throw std::out_of_range("RowCodeword::flip: bit beyond codeword");
  }
}

RowCodeword encode_row(const BitRow& data) { return {data, secded_encode(data)}; }

std::string to_hex(const RowCodeword& cw) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  const std::size_t nibbles = (cw.data.size() + 3) / 4;
  for (std::size_t i = 0; i < nibbles; ++i) {
    unsigned v = 0;
    for (std::size_t b = 0; b < 4; ++b) {
      const std::size_t bit = 4 * i + b;
      v = (v << 1) | ((bit < cw.data.size() && cw.data.get(bit)) ? 1u : 0u);
    }
    out.push_back(kDigits[v]);
  }
  out.push_back(kDigits[cw.parity >> 4]);
  out.push_back(kDigits[cw.parity & 0xF]);
  return out;
}

RowCodeword from_hex(std::string_view hex, std::size_t data_bits) {
  const std::size_t nibbles = (data_bits + 3) / 4;
  if (hex.size() != nibbles + 2) throw std::invalid_argument("from_hex: length does not match data width");
  RowCodeword cw;
  cw.data = BitRow(data_bits);
  for (std::size_t i = 0; i < hex.size(); ++i) {
    if (hex_value(hex[i]) < 0) throw std::invalid_argument("from_hex: non-hex character");
  }
  for (std::size_t i = 0; i < nibbles; ++i) {
    const auto v = static_cast<unsigned>(hex_value(hex[i]));
    for (std::size_t b = 0; b < 4; ++b) {
      const std::size_t bit = 4 * i + b;
      const bool set = (v >> (3 - b)) & 1u;
      if (bit < data_bits) {
        cw.data.set(bit, set);
      } else if (set) {
        throw std::invalid_argument("from_hex: nonzero padding bits");
      }
    }
  }
  cw.parity = static_cast<std::uint8_t>((hex_value(hex[nibbles]) << 4) | hex_value(hex[nibbles + 1]));
  return cw;
}

std::size_t secded_parity_bits(std::size_t k) {
  std::size_t p = 0;
  while ((std::size_t{1} << p) < p + k + 1) ++p;
  return p + 1;
}

std::string_view to_string(ProtectionScheme s) {
  switch (s) {
    case ProtectionScheme::kTraditionalFull: return "traditional_full";
    case ProtectionScheme::kTraditionalExpSign: return "traditional_exp_sign";
    case ProtectionScheme::kRowBasedFull: return "row_based_full";
    case ProtectionScheme::kOne4N: return "one4n";
  }
  return "?";
}

OverheadReport overhead_accounting(ProtectionScheme scheme, std::size_t n, const ArrayGeometry& array) {
  if (n == 0) throw std::invalid_argument("overhead_accounting: n must be positive");
  OverheadReport r;
  r.scheme = scheme;
  const std::size_t sign_exp_bits = 1 + kExponentBits;
  const std::size_t per_weight_exponent_cells = array.weights() * kExponentBits;
  switch (scheme) {
    case ProtectionScheme::kTraditionalFull:
      r.redundant_bits =
          array.weights() * (secded_parity_bits(sign_exp_bits) + secded_parity_bits(array.mantissa_bits));
      r.exponent_sram_cells = per_weight_exponent_cells;
      break;
    case ProtectionScheme::kTraditionalExpSign:
      r.redundant_bits = array.weights() * secded_parity_bits(sign_exp_bits);
      r.exponent_sram_cells = per_weight_exponent_cells;
      break;
    case ProtectionScheme::kRowBasedFull:
      r.redundant_bits = array.rows * (secded_parity_bits(array.weights_per_row * sign_exp_bits) +
                                       secded_parity_bits(array.weights_per_row * array.mantissa_bits));
      r.exponent_sram_cells = per_weight_exponent_cells;
      break;
    case ProtectionScheme::kOne4N: {
      const BlockLayout layout{n};
      const std::size_t blocks = (array.rows + n - 1) / n;
      r.remainder_block = array.rows % n != 0;
      r.redundant_bits = blocks * layout.row_count() * kParityBits;
      r.exponent_sram_cells = blocks * array.weights_per_row * kExponentBits;
      break;
    }
  }
  return r;
}

}  // namespace ucim
