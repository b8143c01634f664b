#include "ucim/macro.hpp"

#include <algorithm>
#include <bit>
#include <sstream>
#include <stdexcept>

namespace ucim {

namespace {

constexpr std::uint32_t kCellsPerTile = 8192;
constexpr std::uint32_t kCodewordCellBase = kTileWeights;

bool injects(const ReadPathConfig& cfg, InjectionMode mode) {
  return cfg.injection && cfg.injection->mode == mode && cfg.injection->ber > 0.0;
}

void append(std::ostringstream& os, const std::vector<std::optional<int>>& v) {
  os << '[';
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) os << ',';
    if (v[i]) {
      os << *v[i];
    } else {
      os << '-';
    }
  }
  os << ']';
}

}  // namespace

void ReadPathConfig::validate() const {
  if (n == 0) throw std::invalid_argument("n must be positive");
  if (ecc && layout != StorageLayout::kOne4N) throw std::invalid_argument("ecc requires the One4N layout");
  if (injection) injection->validate();
}

Tile Tile::load(std::span<const Half> weights, const TileLoadOptions& opts) {
  if (weights.size() != kTileWeights) throw std::invalid_argument("load_tile: expected 256 x 16 weights");
  if (opts.n == 0) throw std::invalid_argument("load_tile: n must be positive");
  if (opts.rows_used > kTileRows || opts.cols_used > kTileCols) {
    throw std::invalid_argument("load_tile: used region exceeds the tile");
  }

  Tile t;
  t.layout_ = opts.layout;
  t.n_ = opts.layout == StorageLayout::kOne4N ? opts.n : 1;
  t.rows_used_ = opts.rows_used;
  t.cols_used_ = opts.cols_used;
  t.tile_id_ = opts.tile_id;
  t.words_.assign(kTileWeights, 0);

  for (std::size_t r = 0; r < kTileRows; ++r) {
    for (std::size_t c = 0; c < kTileCols; ++c) {
      const bool used = r < t.rows_used_ && c < t.cols_used_;
      if (!used && weights[r * kTileCols + c].bits != 0) {
        throw std::invalid_argument("load_tile: nonzero weight outside the used region");
      }
    }
  }

  if (t.layout_ == StorageLayout::kPerWeight) {
    for (std::size_t i = 0; i < kTileWeights; ++i) t.words_[i] = weights[i].bits;
    return t;
  }

  const BlockLayout layout{t.n_};
  const std::size_t blocks = t.block_count();
  if (!opts.shared_exponent_fields.empty() && opts.shared_exponent_fields.size() != blocks * kTileCols) {
    throw std::invalid_argument("load_tile: shared exponent table has the wrong size");
  }
  t.zero_flags_.assign(kTileWeights, 0);
  for (std::size_t b = 0; b < blocks; ++b) {
    std::vector<std::uint8_t> shared(kTileCols, 0);
    std::vector<std::uint8_t> signs(layout.sign_bits_per_block(), 0);
    for (std::size_t c = 0; c < kTileCols; ++c) {
      std::optional<std::uint8_t> field;
      if (!opts.shared_exponent_fields.empty()) field = opts.shared_exponent_fields[b * kTileCols + c];
      for (std::size_t j = 0; j < t.n_; ++j) {
        const std::size_t r = b * t.n_ + j;
        if (r >= t.rows_used_) break;
        const std::size_t i = r * kTileCols + c;
        const Half w = weights[i];
        signs[j * kTileCols + c] = static_cast<std::uint8_t>(w.sign());
        t.words_[i] = static_cast<std::uint16_t>(w.mantissa_field());
        if (w.is_zero()) {
          t.zero_flags_[i] = 1;
          continue;
        }
        const auto e = static_cast<std::uint8_t>(w.exponent_field());
        if (field && *field != e) {
          std::ostringstream msg;
          msg << "load_tile: weights not aligned in block " << b << " column " << c;
          throw std::invalid_argument(msg.str());
        }
        field = e;
      }
      shared[c] = field.value_or(0);
    }
    for (const BitRow& row : pack_block(shared, signs, layout)) t.codewords_.push_back(encode_row(row));
  }
  return t;
}

std::size_t Tile::block_count() const { return (rows_used_ + n_ - 1) / n_; }

std::uint32_t Tile::weight_cell(std::size_t row, std::size_t col) const {
  return tile_id_ * kCellsPerTile + static_cast<std::uint32_t>(row * kTileCols + col);
}

std::uint32_t Tile::codeword_cell(std::size_t k) const {
  return tile_id_ * kCellsPerTile + kCodewordCellBase + static_cast<std::uint32_t>(k);
}

std::vector<bool> Tile::exposed_codeword_bits(std::size_t k, FieldMask mask, Exposure exposure) const {
  const RowCodeword& cw = codewords_[k];
  std::vector<bool> exposed(cw.size(), false);
  if (exposure == Exposure::kMantissaRows || mask == FieldMask::kMantissa) return exposed;

  const BlockLayout layout{n_};
  const auto sizes = layout.row_sizes();
  const std::size_t row_in_block = k % sizes.size();
  std::size_t offset = 0;
  for (std::size_t j = 0; j < row_in_block; ++j) offset += sizes[j];
  const std::size_t exp_stream_bits = kExponentBits * kWeightsPerRow;
  for (std::size_t i = 0; i < cw.data.size(); ++i) {
    const bool is_exponent = offset + i < exp_stream_bits;
    exposed[i] = mask == FieldMask::kFull || (mask == FieldMask::kExponent) == is_exponent;
  }
  for (std::size_t i = cw.data.size(); i < cw.size(); ++i) exposed[i] = true;
  return exposed;
}

std::uint16_t Tile::exposed_word_bits(FieldMask mask, Exposure exposure) const {
  std::uint16_t stored = layout_ == StorageLayout::kPerWeight ? 0xFFFF : 0x03FF;
  if (exposure == Exposure::kExponentSignRows) stored &= 0xFC00;
  if (exposure == Exposure::kMantissaRows) stored &= 0x03FF;
  return static_cast<std::uint16_t>(stored & mask_bits(mask));
}

ExponentRows Tile::read_exponent_rows(std::size_t block_id, const ReadPathConfig& cfg, std::uint64_t access,
                                      ReadStats* stats) const {
  if (layout_ != StorageLayout::kOne4N) throw std::logic_error("read_exponent_rows: tile has no shared exponents");
  if (block_id >= block_count()) throw std::out_of_range("read_exponent_rows: block id");

  const BlockLayout layout{n_};
  const std::size_t per_block = layout.row_count();
  const bool dynamic = injects(cfg, InjectionMode::kDynamic);
  const RngStream rng(dynamic ? cfg.injection->master_seed : 0, cfg.run);

  ExponentRows out;
  std::vector<BitRow> rows;
  rows.reserve(per_block);
  for (std::size_t j = 0; j < per_block; ++j) {
    const std::size_t k = block_id * per_block + j;
    RowCodeword cw = codewords_[k];
    if (dynamic) {
      const auto exposed = exposed_codeword_bits(k, cfg.injection->mask, cfg.exposure);
      const auto flips = sample_flips(rng, cfg.injection->ber, codeword_cell(k), access, exposed);
      for (std::uint32_t bit : flips) cw.flip(bit);
      if (stats) stats->flips_injected += flips.size();
    }
    if (cfg.ecc) {
      DecodeOutcome outcome = secded_decode(cw.data, cw.parity);
      if (stats) {
        if (outcome.status == DecodeStatus::kCorrectedSingle) ++stats->corrected_singles;
        if (outcome.status == DecodeStatus::kDetectedDouble) ++stats->detected_doubles;
      }
      rows.push_back(outcome.data);
      out.outcomes.push_back(std::move(outcome));
    } else {
      rows.push_back(cw.data);
    }
  }
  UnpackedBlock block = unpack_block(rows, layout);
  out.shared_exponents = std::move(block.shared_exponents);
  out.signs = std::move(block.signs);
  return out;
}

std::vector<Half> Tile::read_weights(const ReadPathConfig& cfg, std::uint64_t access, ReadStats* stats) const {
  return read_weights(cfg, access, stats, nullptr);
}

std::vector<Half> Tile::read_weights(const ReadPathConfig& cfg, std::uint64_t access, ReadStats* stats,
                                     std::vector<std::uint8_t>* shared_exponents) const {
  if (cfg.layout != layout_) throw std::invalid_argument("read path layout does not match the tile");
  if (cfg.ecc && layout_ != StorageLayout::kOne4N) throw std::invalid_argument("ecc requires the One4N layout");

  const bool dynamic = injects(cfg, InjectionMode::kDynamic);
  const RngStream rng(dynamic ? cfg.injection->master_seed : 0, cfg.run);
  const std::uint16_t word_mask = dynamic ? exposed_word_bits(cfg.injection->mask, cfg.exposure) : 0;

  auto sample = [&](std::size_t r, std::size_t c) -> std::uint16_t {
    if (!dynamic || word_mask == 0) return 0;
    const std::uint16_t p = flip_pattern(rng, cfg.injection->ber, weight_cell(r, c), access, word_mask);
    if (stats) stats->flips_injected += static_cast<std::uint64_t>(std::popcount(p));
    return p;
  };

  std::vector<Half> out(kTileWeights);
  if (layout_ == StorageLayout::kPerWeight) {
    for (std::size_t r = 0; r < rows_used_; ++r) {
      for (std::size_t c = 0; c < cols_used_; ++c) {
        const std::size_t i = r * kTileCols + c;
        out[i] = Half(static_cast<std::uint16_t>(words_[i] ^ sample(r, c)));
      }
    }
    return out;
  }

  if (shared_exponents) shared_exponents->assign(block_count() * kTileCols, 0);
  for (std::size_t b = 0; b < block_count(); ++b) {
    const ExponentRows rows = read_exponent_rows(b, cfg, access, stats);
    if (shared_exponents) {
      std::copy(rows.shared_exponents.begin(), rows.shared_exponents.end(),
                shared_exponents->begin() + static_cast<std::ptrdiff_t>(b * kTileCols));
    }
    for (std::size_t j = 0; j < n_; ++j) {
      const std::size_t r = b * n_ + j;
      if (r >= rows_used_) break;
      for (std::size_t c = 0; c < cols_used_; ++c) {
        const std::size_t i = r * kTileCols + c;
        const auto mant = static_cast<unsigned>((words_[i] ^ sample(r, c)) & 0x3FF);
        if (zero_flags_[i]) continue;
        out[i] = compose({rows.signs[j * kTileCols + c], rows.shared_exponents[c], mant});
      }
    }
  }
  return out;
}

Tile Tile::with_static_faults(const InjectionPlan& plan, std::uint64_t run, Exposure exposure, ReadStats* stats,
                              FlipLog* log) const {
  plan.validate();
  if (plan.mode != InjectionMode::kStatic) throw std::invalid_argument("with_static_faults: plan is not static");
  Tile t = *this;
  if (plan.ber <= 0.0) return t;
  const RngStream rng(plan.master_seed, run);

  const std::uint16_t word_mask = exposed_word_bits(plan.mask, exposure);
  for (std::size_t r = 0; r < rows_used_ && word_mask; ++r) {
    for (std::size_t c = 0; c < cols_used_; ++c) {
      const std::uint32_t cell = weight_cell(r, c);
      const std::uint16_t p = flip_pattern(rng, plan.ber, cell, kStaticAccess, word_mask);
      if (p == 0) continue;
      t.words_[r * kTileCols + c] ^= p;
      if (stats) stats->flips_injected += static_cast<std::uint64_t>(std::popcount(p));
      if (log) {
        for (std::uint32_t bit = 0; bit < 16; ++bit) {
          if ((p >> bit) & 1u) log->push_back({run, cell, bit, -1});
        }
      }
    }
  }
  for (std::size_t k = 0; k < codewords_.size(); ++k) {
    const auto exposed = exposed_codeword_bits(k, plan.mask, exposure);
    const auto flips = sample_flips(rng, plan.ber, codeword_cell(k), kStaticAccess, exposed);
    for (std::uint32_t bit : flips) {
      t.codewords_[k].flip(bit);
      if (log) log->push_back({run, codeword_cell(k), bit, -1});
    }
    if (stats) stats->flips_injected += flips.size();
  }
  return t;
}

PipelineTrace exponent_pipeline(std::span<const std::optional<int>> input_exponents,
                                std::span<const std::optional<int>> weight_exponents, std::size_t group_size,
                                int shift_window) {
  if (group_size == 0) throw std::invalid_argument("exponent_pipeline: group size must be positive");
  const std::size_t terms = input_exponents.size();
  const std::size_t groups = (terms + group_size - 1) / group_size;
  if (weight_exponents.size() != groups) throw std::invalid_argument("exponent_pipeline: one weight exponent per group");

  PipelineTrace t;
  t.group_size = group_size;
  t.x_max.assign(groups, std::nullopt);
  t.term_sums.assign(terms, std::nullopt);
  t.group_max_sum.assign(groups, std::nullopt);
  t.e_diff.assign(terms, std::nullopt);
  t.shifts.assign(terms, std::nullopt);

  // Step 1: per-group input maximum and per-term exponent sums.
  for (std::size_t g = 0; g < groups; ++g) {
    const auto& w = weight_exponents[g];
    for (std::size_t i = g * group_size; i < std::min(terms, (g + 1) * group_size); ++i) {
      const auto& x = input_exponents[i];
      if (!x || !w) continue;
      if (!t.x_max[g] || *x > *t.x_max[g]) t.x_max[g] = x;
      t.term_sums[i] = *x + *w;
    }
    // Step 2: group maximum plus the shared weight exponent.
    if (t.x_max[g]) t.group_max_sum[g] = *t.x_max[g] + *w;
  }
  // Step 3: overall maximum.
  for (const auto& s : t.group_max_sum) {
    if (s && (!t.e_max || *s > *t.e_max)) t.e_max = s;
  }
  // Steps 4-5: differences and saturated right shifts.
  for (std::size_t i = 0; i < terms; ++i) {
    if (!t.term_sums[i]) continue;
    const int diff = *t.term_sums[i] - *t.e_max;
    t.e_diff[i] = diff;
    t.shifts[i] = std::min(-diff, shift_window);
  }
  return t;
}

TileSnapshot snapshot(const Tile& tile, const ReadPathConfig& cfg, std::uint64_t access) {
  cfg.validate();
  TileSnapshot s;
  s.layout = tile.layout();
  s.n = tile.n();
  s.rows_used = tile.rows_used();
  s.cols_used = tile.cols_used();
  s.weights = tile.read_weights(cfg, access, &s.stats, &s.shared_exponents);
  return s;
}

MatvecResult matvec(const TileSnapshot& snap, std::span<const Half> inputs, const MacConfig& mac, bool want_trace) {
  if (inputs.size() != kTileRows) throw std::invalid_argument("matvec: expected 256 inputs");
  MatvecResult res;
  res.stats = snap.stats;
  const std::size_t rows = snap.rows_used;
  const std::size_t group = snap.layout == StorageLayout::kOne4N ? snap.n : 1;
  const std::size_t groups = (rows + group - 1) / group;

  std::vector<std::optional<int>> x_exps(rows);
  std::vector<std::optional<int>> w_exps(groups);
  std::vector<FpProduct> products(rows);
  for (std::size_t c = 0; c < snap.cols_used; ++c) {
    for (std::size_t r = 0; r < rows; ++r) {
      const Half w = snap.weights[r * kTileCols + c];
      const Half x = inputs[r];
      x_exps[r] = (x.is_zero() || w.is_zero()) ? std::nullopt : std::optional<int>(x.exponent());
      products[r] = fp_mul(w, x);
    }
    for (std::size_t g = 0; g < groups; ++g) {
      unsigned field = 0;
      if (snap.layout == StorageLayout::kOne4N) {
        field = snap.shared_exponents[g * kTileCols + c];
      } else {
        field = snap.weights[g * kTileCols + c].exponent_field();
      }
      w_exps[g] = field == 0 ? std::nullopt : std::optional<int>(static_cast<int>(field) - Half::kBias);
    }
    PipelineTrace trace = exponent_pipeline(x_exps, w_exps, group, shift_window(mac));
    const MacResult m = mac_with_emax(products, trace.e_max.value_or(0), mac);
    res.outputs[c] = m.value;
    res.flags[c] = m.flags;
    if (m.value.is_nan()) ++res.nan_outputs;
    if (want_trace) res.traces.push_back(std::move(trace));
  }
  return res;
}

MatvecResult tile_matvec(const Tile& tile, std::span<const Half> inputs, const ReadPathConfig& cfg,
                         std::uint64_t access, bool want_trace) {
  return matvec(snapshot(tile, cfg, access), inputs, cfg.mac, want_trace);
}

std::string format_trace(const MatvecResult& r) {
  std::ostringstream os;
  os << "decode corrected_singles=" << r.stats.corrected_singles << " detected_doubles=" << r.stats.detected_doubles
     << " flips=" << r.stats.flips_injected << '\n';
  for (std::size_t c = 0; c < r.traces.size(); ++c) {
    const PipelineTrace& t = r.traces[c];
    os << "col=" << c << " group=" << t.group_size << " x_max=";
    append(os, t.x_max);
    os << " sums=";
    append(os, t.term_sums);
    os << " group_max_sum=";
    append(os, t.group_max_sum);
    os << " e_max=";
    if (t.e_max) {
      os << *t.e_max;
    } else {
      os << '-';
    }
    os << " e_diff=";
    append(os, t.e_diff);
    os << " shifts=";
    append(os, t.shifts);
    os << '\n';
  }
  return os.str();
}

}  // namespace ucim
