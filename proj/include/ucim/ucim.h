/* C interface of the ucim FP16 compute-in-memory simulator.
 *
 * Every function returns a ucim_status. On failure, ucim_last_error()
 * returns a message for the calling thread that stays valid until the
 * next failing call on that thread. Handles are opaque and owned by the
 * caller; release them with the matching *_destroy function.
 */
#ifndef UCIM_UCIM_H
#define UCIM_UCIM_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define UCIM_API __declspec(dllexport)
#else
#define UCIM_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ucim_status {
  UCIM_OK = 0,
  UCIM_E_INVALID_ARGUMENT = 1,
  UCIM_E_INVALID_KEY = 2,  /* unknown config key or unusable value */
  UCIM_E_IO = 3,           /* file cannot be read or written */
  UCIM_E_PARSE = 4,        /* malformed tensor or config file */
  UCIM_E_BUFFER_TOO_SMALL = 5,
  UCIM_E_INTERNAL = 6
} ucim_status;

UCIM_API const char* ucim_last_error(void);
/* Key named by the last UCIM_E_INVALID_KEY failure on this thread ("" otherwise). */
UCIM_API const char* ucim_last_error_key(void);
UCIM_API const char* ucim_version(void);

/* ---- FP16 arithmetic (raw 16-bit patterns) ---- */

UCIM_API ucim_status ucim_fp16_from_double(double x, uint16_t* out);
UCIM_API ucim_status ucim_fp16_to_double(uint16_t h, double* out);
/* Single product packed to FP16 through the aligned accumulator. */
UCIM_API ucim_status ucim_fp16_mul(uint16_t a, uint16_t b, uint16_t* out);

typedef struct ucim_mac_flags {
  int overflow;
  int nan;
  int underflow;
} ucim_mac_flags;

/* Dot product of n pairs; flags may be NULL. fraction_bits < 0 selects the default. */
UCIM_API ucim_status ucim_fp16_dot(const uint16_t* a, const uint16_t* b, size_t n, int fraction_bits, uint16_t* out,
                                   ucim_mac_flags* flags);

/* ---- SECDED rows (up to 120 data bits, given as 0/1 bytes) ---- */

UCIM_API ucim_status ucim_secded_encode(const uint8_t* bits, size_t k, uint8_t* parity);

typedef enum ucim_decode_status { UCIM_NO_ERROR = 0, UCIM_CORRECTED_SINGLE = 1, UCIM_DETECTED_DOUBLE = 2 } ucim_decode_status;

/* bits are corrected in place when a single error is found. position
 * receives the corrected Hamming position or -1. */
UCIM_API ucim_status ucim_secded_decode(uint8_t* bits, size_t k, uint8_t parity, ucim_decode_status* status,
                                        int* position);

UCIM_API ucim_status ucim_total_protected_bits(size_t n, size_t* out);

typedef enum ucim_scheme {
  UCIM_SCHEME_TRADITIONAL_FULL = 0,
  UCIM_SCHEME_TRADITIONAL_EXP_SIGN = 1,
  UCIM_SCHEME_ROW_BASED_FULL = 2,
  UCIM_SCHEME_ONE4N = 3
} ucim_scheme;

UCIM_API ucim_status ucim_overhead(ucim_scheme scheme, size_t n, size_t* redundant_bits, size_t* exponent_cells);

/* Human-readable overhead table. Writes at most cap bytes including the
 * terminator; *needed (may be NULL) receives the full size. */
UCIM_API ucim_status ucim_overhead_table(size_t n, char* buf, size_t cap, size_t* needed);

/* ---- Tiles: 256 x 16 FP16 weights, row = input, column = output ---- */

typedef struct ucim_tile ucim_tile;

typedef enum ucim_layout { UCIM_LAYOUT_PER_WEIGHT = 0, UCIM_LAYOUT_ONE4N = 1 } ucim_layout;

UCIM_API ucim_status ucim_tile_create(const uint16_t* weights, ucim_layout layout, size_t n, size_t rows_used,
                                      size_t cols_used, ucim_tile** out);
UCIM_API void ucim_tile_destroy(ucim_tile* tile);

/* Fault-free matvec of 256 inputs into 16 outputs. ecc selects SECDED
 * decoding (One4N only). */
UCIM_API ucim_status ucim_tile_matvec(const ucim_tile* tile, const uint16_t* inputs, int ecc, uint16_t* outputs);

/* ---- Sweep and training commands ---- */

typedef struct ucim_config ucim_config;

typedef enum ucim_command { UCIM_COMMAND_SWEEP = 0, UCIM_COMMAND_TRAIN = 1 } ucim_command;

UCIM_API ucim_status ucim_config_create(ucim_command command, ucim_config** out);
UCIM_API void ucim_config_destroy(ucim_config* cfg);
/* Applies every key of a flat key = value file. */
UCIM_API ucim_status ucim_config_load_file(ucim_config* cfg, const char* path);
UCIM_API ucim_status ucim_config_set(ucim_config* cfg, const char* key, const char* value);

/* Runs the configured command and writes its CSV to output_path. */
UCIM_API ucim_status ucim_config_run(const ucim_config* cfg);

typedef struct ucim_selftest_result {
  int passed;
} ucim_selftest_result;

/* Exhaustive SECDED and FP16 checks; the report is written like ucim_overhead_table. */
UCIM_API ucim_status ucim_selftest(ucim_selftest_result* result, char* buf, size_t cap, size_t* needed);

#ifdef __cplusplus
}
#endif

#endif /* UCIM_UCIM_H */
