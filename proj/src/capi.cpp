#include "ucim/ucim.h"

#include <cstdio>
#include <cstring>
#include <iostream>
#include <new>
#include <string>
#include <variant>

#include "ucim/ecc.hpp"
#include "ucim/macro.hpp"
#include "ucim/sweep.hpp"

struct ucim_tile {
  ucim::Tile tile;
};

struct ucim_config {
  std::variant<ucim::SweepConfig, ucim::TrainCommandConfig> cfg;
};

namespace {

thread_local std::string g_error;
thread_local std::string g_error_key;

ucim_status fail(ucim_status s, const std::string& msg, const std::string& key = {}) {
  g_error = msg;
  g_error_key = key;
  return s;
}

// Runs fn, mapping exceptions onto status codes.
template <typename Fn>
ucim_status guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const ucim::ConfigError& e) {
    return fail(UCIM_E_INVALID_KEY, e.what(), e.key());
  } catch (const ucim::OutputError& e) {
    return fail(UCIM_E_IO, e.what());
  } catch (const ucim::ParseError& e) {
    return fail(UCIM_E_PARSE, e.what());
  } catch (const std::invalid_argument& e) {
    return fail(UCIM_E_INVALID_ARGUMENT, e.what());
  } catch (const std::out_of_range& e) {
    return fail(UCIM_E_INVALID_ARGUMENT, e.what());
  } catch (const std::bad_alloc&) {
    return fail(UCIM_E_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(UCIM_E_INTERNAL, e.what());
  }
}

ucim_status copy_text(const std::string& text, char* buf, std::size_t cap, std::size_t* needed) {
  if (needed) *needed = text.size() + 1;
  if (!buf) return cap == 0 ? UCIM_OK : fail(UCIM_E_INVALID_ARGUMENT, "null buffer");
  if (cap < text.size() + 1) {
    if (cap > 0) {
      std::memcpy(buf, text.data(), cap - 1);
      buf[cap - 1] = '\0';
    }
    return fail(UCIM_E_BUFFER_TOO_SMALL, "buffer too small: need " + std::to_string(text.size() + 1) + " bytes");
  }
  std::memcpy(buf, text.c_str(), text.size() + 1);
  return UCIM_OK;
}

ucim::BitRow to_row(const std::uint8_t* bits, std::size_t k) {
  if (!bits && k) throw std::invalid_argument("null bit array");
  if (k == 0 || k > ucim::kMaxSecdedDataBits) throw std::invalid_argument("data width must be 1..120 bits");
  ucim::BitRow row(k);
  for (std::size_t i = 0; i < k; ++i) row.set(i, bits[i] != 0);
  return row;
}

}  // namespace

extern "C" {

const char* ucim_last_error(void) { return g_error.c_str(); }
const char* ucim_last_error_key(void) { return g_error_key.c_str(); }
const char* ucim_version(void) { return "1.0.0"; }

ucim_status ucim_fp16_from_double(double x, uint16_t* out) {
  if (!out) return fail(UCIM_E_INVALID_ARGUMENT, "null output");
  *out = ucim::from_real(x).bits;
  return UCIM_OK;
}

ucim_status ucim_fp16_to_double(uint16_t h, double* out) {
  if (!out) return fail(UCIM_E_INVALID_ARGUMENT, "null output");
  *out = ucim::to_real(ucim::Half(h));
  return UCIM_OK;
}

ucim_status ucim_fp16_mul(uint16_t a, uint16_t b, uint16_t* out) {
  if (!out) return fail(UCIM_E_INVALID_ARGUMENT, "null output");
  *out = ucim::pack(ucim::fp_mul(ucim::Half(a), ucim::Half(b))).bits;
  return UCIM_OK;
}

ucim_status ucim_fp16_dot(const uint16_t* a, const uint16_t* b, size_t n, int fraction_bits, uint16_t* out,
                          ucim_mac_flags* flags) {
  return guarded([&] {
    if (!out || (n && (!a || !b))) return fail(UCIM_E_INVALID_ARGUMENT, "null argument");
    std::vector<ucim::Half> x(n);
    std::vector<ucim::Half> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = ucim::Half(a[i]);
      y[i] = ucim::Half(b[i]);
    }
    ucim::MacConfig cfg;
    if (fraction_bits >= 0) cfg.fraction_bits = fraction_bits;
    const ucim::MacResult r = ucim::dot(x, y, cfg);
    *out = r.value.bits;
    if (flags) *flags = {r.flags.overflow, r.flags.nan, r.flags.underflow};
    return UCIM_OK;
  });
}

ucim_status ucim_secded_encode(const uint8_t* bits, size_t k, uint8_t* parity) {
  return guarded([&] {
    if (!parity) return fail(UCIM_E_INVALID_ARGUMENT, "null output");
    *parity = ucim::secded_encode(to_row(bits, k));
    return UCIM_OK;
  });
}

ucim_status ucim_secded_decode(uint8_t* bits, size_t k, uint8_t parity, ucim_decode_status* status, int* position) {
  return guarded([&] {
    if (!status) return fail(UCIM_E_INVALID_ARGUMENT, "null output");
    const ucim::DecodeOutcome d = ucim::secded_decode(to_row(bits, k), parity);
    for (std::size_t i = 0; i < k; ++i) bits[i] = d.data.get(i) ? 1 : 0;
    *status = static_cast<ucim_decode_status>(d.status);
    if (position) *position = d.position ? static_cast<int>(*d.position) : -1;
    return UCIM_OK;
  });
}

ucim_status ucim_total_protected_bits(size_t n, size_t* out) {
  if (!out) return fail(UCIM_E_INVALID_ARGUMENT, "null output");
  *out = ucim::total_protected_bits(n);
  return UCIM_OK;
}

ucim_status ucim_overhead(ucim_scheme scheme, size_t n, size_t* redundant_bits, size_t* exponent_cells) {
  return guarded([&] {
    if (scheme < UCIM_SCHEME_TRADITIONAL_FULL || scheme > UCIM_SCHEME_ONE4N) {
      return fail(UCIM_E_INVALID_ARGUMENT, "unknown scheme");
    }
    const ucim::OverheadReport r = ucim::overhead_accounting(static_cast<ucim::ProtectionScheme>(scheme), n);
    if (redundant_bits) *redundant_bits = r.redundant_bits;
    if (exponent_cells) *exponent_cells = r.exponent_sram_cells;
    return UCIM_OK;
  });
}

ucim_status ucim_overhead_table(size_t n, char* buf, size_t cap, size_t* needed) {
  return guarded([&] {
    if (n == 0) return fail(UCIM_E_INVALID_ARGUMENT, "n must be positive");
    return copy_text(ucim::overhead_table(n), buf, cap, needed);
  });
}

ucim_status ucim_tile_create(const uint16_t* weights, ucim_layout layout, size_t n, size_t rows_used,
                             size_t cols_used, ucim_tile** out) {
  return guarded([&] {
    if (!weights || !out) return fail(UCIM_E_INVALID_ARGUMENT, "null argument");
    std::vector<ucim::Half> w(ucim::kTileWeights);
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = ucim::Half(weights[i]);
    ucim::TileLoadOptions opts;
    opts.layout = layout == UCIM_LAYOUT_ONE4N ? ucim::StorageLayout::kOne4N : ucim::StorageLayout::kPerWeight;
    opts.n = n;
    opts.rows_used = rows_used;
    opts.cols_used = cols_used;
    *out = new ucim_tile{ucim::Tile::load(w, opts)};
    return UCIM_OK;
  });
}

void ucim_tile_destroy(ucim_tile* tile) { delete tile; }

ucim_status ucim_tile_matvec(const ucim_tile* tile, const uint16_t* inputs, int ecc, uint16_t* outputs) {
  return guarded([&] {
    if (!tile || !inputs || !outputs) return fail(UCIM_E_INVALID_ARGUMENT, "null argument");
    std::vector<ucim::Half> x(ucim::kTileRows);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = ucim::Half(inputs[i]);
    ucim::ReadPathConfig cfg;
    cfg.layout = tile->tile.layout();
    cfg.n = tile->tile.n();
    cfg.ecc = ecc != 0;
    const ucim::MatvecResult r = ucim::tile_matvec(tile->tile, x, cfg);
    for (std::size_t c = 0; c < ucim::kTileCols; ++c) outputs[c] = r.outputs[c].bits;
    return UCIM_OK;
  });
}

ucim_status ucim_config_create(ucim_command command, ucim_config** out) {
  return guarded([&] {
    if (!out) return fail(UCIM_E_INVALID_ARGUMENT, "null output");
    if (command == UCIM_COMMAND_SWEEP) {
      *out = new ucim_config{ucim::SweepConfig{}};
    } else if (command == UCIM_COMMAND_TRAIN) {
      *out = new ucim_config{ucim::TrainCommandConfig{}};
    } else {
      return fail(UCIM_E_INVALID_ARGUMENT, "unknown command");
    }
    return UCIM_OK;
  });
}

void ucim_config_destroy(ucim_config* cfg) { delete cfg; }

ucim_status ucim_config_load_file(ucim_config* cfg, const char* path) {
  return guarded([&] {
    if (!cfg || !path) return fail(UCIM_E_INVALID_ARGUMENT, "null argument");
    ucim::KeyValues kv;
    try {
      kv = ucim::load_config_file(path);
    } catch (const ucim::ConfigError&) {
      throw;
    } catch (const std::runtime_error& e) {
      return fail(UCIM_E_IO, e.what());
    }
    std::visit([&](auto& c) { c.apply(kv); }, cfg->cfg);
    return UCIM_OK;
  });
}

ucim_status ucim_config_set(ucim_config* cfg, const char* key, const char* value) {
  return guarded([&] {
    if (!cfg || !key || !value) return fail(UCIM_E_INVALID_ARGUMENT, "null argument");
    std::visit([&](auto& c) { c.set(key, value); }, cfg->cfg);
    return UCIM_OK;
  });
}

ucim_status ucim_config_run(const ucim_config* cfg) {
  return guarded([&] {
    if (!cfg) return fail(UCIM_E_INVALID_ARGUMENT, "null argument");
    if (const auto* s = std::get_if<ucim::SweepConfig>(&cfg->cfg)) {
      const ucim::SweepResult r = ucim::run_sweep(*s);
      if (!s->output_path) std::cout << ucim::sweep_csv(r);
      return UCIM_OK;
    }
    const auto& t = std::get<ucim::TrainCommandConfig>(cfg->cfg);
    if (t.output_path) ucim::check_writable(*t.output_path);
    const std::string csv = ucim::train_trace_csv(ucim::run_train_trace(ucim::make_trace_config(t)));
    if (t.output_path) {
      ucim::write_text_file(*t.output_path, csv);
    } else {
      std::cout << csv;
    }
    return UCIM_OK;
  });
}

ucim_status ucim_selftest(ucim_selftest_result* result, char* buf, size_t cap, size_t* needed) {
  return guarded([&] {
    const ucim::SelftestReport rep = ucim::selftest();
    if (result) result->passed = rep.passed ? 1 : 0;
    std::string text;
    for (const std::string& l : rep.lines) text += l + '\n';
    return copy_text(text, buf, cap, needed);
  });
}

}  // extern "C"
