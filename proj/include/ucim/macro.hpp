#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ucim/ecc.hpp"
#include "ucim/fault.hpp"
#include "ucim/fp16.hpp"

namespace ucim {

inline constexpr std::size_t kTileRows = 256;
inline constexpr std::size_t kTileCols = kWeightsPerRow;
inline constexpr std::size_t kTileWeights = kTileRows * kTileCols;

enum class StorageLayout : std::uint8_t {
  kPerWeight,  // every weight keeps its own 16-bit word
  kOne4N,      // shared exponent per (block, column) + signs in SECDED rows; mantissas per weight
};

// Which stored cells a fault plan can reach. Intersected with the plan's
// FieldMask; parity cells belong to the exponent/sign rows.
enum class Exposure : std::uint8_t { kAll, kExponentSignRows, kMantissaRows };

struct ReadPathConfig {
  StorageLayout layout = StorageLayout::kPerWeight;
  bool ecc = false;
  std::size_t n = 8;
  std::optional<InjectionPlan> injection;
  Exposure exposure = Exposure::kAll;
  std::uint64_t run = 0;
  MacConfig mac;

  // Throws std::invalid_argument: ecc without One4N, n == 0, bad ber.
  void validate() const;
};

struct ReadStats {
  std::uint64_t flips_injected = 0;
  std::uint64_t corrected_singles = 0;
  std::uint64_t detected_doubles = 0;

  ReadStats& operator+=(const ReadStats& o) {
    flips_injected += o.flips_injected;
    corrected_singles += o.corrected_singles;
    detected_doubles += o.detected_doubles;
    return *this;
  }
};

struct TileLoadOptions {
  StorageLayout layout = StorageLayout::kPerWeight;
  std::size_t n = 8;
  // Occupied region; cells outside it stay zero and are never exposed.
  std::size_t rows_used = kTileRows;
  std::size_t cols_used = kTileCols;
  // Distinguishes tiles of one model in the fault RNG.
  std::uint32_t tile_id = 0;
  // Optional expected exponent fields, [block][column]; checked on load.
  std::vector<std::uint8_t> shared_exponent_fields;
};

struct ExponentRows {
  std::vector<std::uint8_t> shared_exponents;  // 16 fields
  std::vector<std::uint8_t> signs;             // 16 * n, row-major
  std::vector<DecodeOutcome> outcomes;         // one per codeword when ecc is on
};

// Functional model of one 256 x 16-weight array. Immutable once loaded.
class Tile {
 public:
  // `weights` is [256][16] row-major: row = input channel, column = output.
  static Tile load(std::span<const Half> weights, const TileLoadOptions& opts);

  StorageLayout layout() const { return layout_; }
  std::size_t n() const { return n_; }
  std::size_t rows_used() const { return rows_used_; }
  std::size_t cols_used() const { return cols_used_; }
  std::uint32_t tile_id() const { return tile_id_; }

  std::size_t block_count() const;
  std::size_t codeword_count() const { return codewords_.size(); }
  std::size_t stored_parity_bits() const { return codewords_.size() * kParityBits; }
  const std::vector<RowCodeword>& codewords() const { return codewords_; }
  // Raw per-weight storage words (mantissa only in One4N layout).
  const std::vector<std::uint16_t>& words() const { return words_; }

  // Global fault-RNG word index of weight cell (row, col) and of codeword k.
  std::uint32_t weight_cell(std::size_t row, std::size_t col) const;
  std::uint32_t codeword_cell(std::size_t k) const;

  // Stored exponent/sign bits of a block as the datapath receives them on
  // access `access`: dynamic faults (if any) are sampled, then SECDED
  // decoding runs when ecc is on.
  ExponentRows read_exponent_rows(std::size_t block_id, const ReadPathConfig& cfg, std::uint64_t access,
                                  ReadStats* stats = nullptr) const;

  // All 256 x 16 weights as seen by the datapath on access `access`.
  std::vector<Half> read_weights(const ReadPathConfig& cfg, std::uint64_t access, ReadStats* stats = nullptr) const;

  // As read_weights, also returning the decoded shared exponents.
  std::vector<Half> read_weights(const ReadPathConfig& cfg, std::uint64_t access, ReadStats* stats,
                                 std::vector<std::uint8_t>* shared_exponents) const;

  // One-shot corruption of the stored cells; returns the corrupted copy.
  Tile with_static_faults(const InjectionPlan& plan, std::uint64_t run, Exposure exposure, ReadStats* stats = nullptr,
                          FlipLog* log = nullptr) const;

 private:
  Tile() = default;

  std::vector<bool> exposed_codeword_bits(std::size_t k, FieldMask mask, Exposure exposure) const;
  std::uint16_t exposed_word_bits(FieldMask mask, Exposure exposure) const;

  StorageLayout layout_ = StorageLayout::kPerWeight;
  std::size_t n_ = 8;
  std::size_t rows_used_ = kTileRows;
  std::size_t cols_used_ = kTileCols;
  std::uint32_t tile_id_ = 0;
  std::vector<std::uint16_t> words_;
  std::vector<std::uint8_t> zero_flags_;
  std::vector<RowCodeword> codewords_;
};

/// Per-column exponent pipeline of the macro. Inputs are per term (nullopt
/// for a zero input); weight exponents are per group of `group_size`
/// consecutive terms (nullopt for a zero weight).
struct PipelineTrace {
  std::size_t group_size = 1;
  std::vector<std::optional<int>> x_max;          // step 1, per group
  std::vector<std::optional<int>> term_sums;      // step 1, per term
  std::vector<std::optional<int>> group_max_sum;  // step 2, per group
  std::optional<int> e_max;                       // step 3
  std::vector<std::optional<int>> e_diff;         // step 4, per term
  std::vector<std::optional<int>> shifts;         // step 5, saturated at the window
};

PipelineTrace exponent_pipeline(std::span<const std::optional<int>> input_exponents,
                                std::span<const std::optional<int>> weight_exponents, std::size_t group_size,
                                int shift_window);

// Weights and shared exponents as delivered to the datapath by one access.
struct TileSnapshot {
  StorageLayout layout = StorageLayout::kPerWeight;
  std::size_t n = 1;
  std::size_t rows_used = 0;
  std::size_t cols_used = 0;
  std::vector<Half> weights;                   // [256][16]
  std::vector<std::uint8_t> shared_exponents;  // [block][16], One4N only
  ReadStats stats;
};

TileSnapshot snapshot(const Tile& tile, const ReadPathConfig& cfg, std::uint64_t access = 0);

struct MatvecResult {
  std::array<Half, kTileCols> outputs{};
  std::array<MacFlags, kTileCols> flags{};
  ReadStats stats;
  std::uint64_t nan_outputs = 0;
  std::vector<PipelineTrace> traces;  // filled when requested, one per used column
};

MatvecResult matvec(const TileSnapshot& snap, std::span<const Half> inputs, const MacConfig& mac,
                    bool want_trace = false);

MatvecResult tile_matvec(const Tile& tile, std::span<const Half> inputs, const ReadPathConfig& cfg,
                         std::uint64_t access = 0, bool want_trace = false);

// Text lines describing one call: pipeline steps per column and decode counts.
std::string format_trace(const MatvecResult& r);

}  // namespace ucim
