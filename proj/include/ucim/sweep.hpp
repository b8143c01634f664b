#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ucim/train.hpp"

namespace ucim {

// A config key that is unknown or carries an unusable value.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string key, const std::string& what)
      : std::invalid_argument(what), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

// The output path cannot be written.
class OutputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using KeyValues = std::vector<std::pair<std::string, std::string>>;

/// Flat text config: one `key = value` per line, `#` starts a comment,
/// blank lines are ignored, lists are comma-separated.
KeyValues parse_config_text(const std::string& text);
KeyValues load_config_file(const std::filesystem::path& path);

// Storage used for the weights of a job.
enum class LayoutChoice : std::uint8_t { kAuto, kPerWeight, kOne4N };

/// Settings shared by `sweep run` and `sweep train` for building the
/// workload: dataset and the clean model.
struct WorkloadConfig {
  std::optional<std::filesystem::path> model_path;
  std::optional<std::filesystem::path> dataset_path;
  std::uint64_t data_seed = 1;
  std::size_t train_samples = 1000;
  std::size_t test_samples = 1000;
  double margin = 4.0;
  std::size_t train_epochs = 10;
  std::size_t finetune_epochs = 5;
  double learning_rate = 0.05;
  std::size_t batch_size = 16;
  std::uint64_t model_seed = 7;
};

struct SweepConfig {
  std::vector<double> ber_list{1e-8, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2};
  std::vector<FieldMask> field_masks{FieldMask::kFull};
  std::vector<InjectionMode> mode{InjectionMode::kStatic};
  std::vector<bool> ecc{false};
  std::vector<std::size_t> n{8};
  std::vector<std::size_t> index{2};
  std::size_t runs_per_point = 100;
  std::uint64_t master_seed = 1;
  bool align = false;  // evaluate exponent-aligned weights even without ECC
  LayoutChoice layout = LayoutChoice::kAuto;
  std::size_t threads = 0;
  std::optional<std::filesystem::path> output_path;
  std::optional<std::filesystem::path> trace_path;
  WorkloadConfig workload;

  // Throws ConfigError naming the key.
  void set(const std::string& key, const std::string& value);
  void apply(const KeyValues& kv);
  static const std::vector<std::string>& keys();
};

struct TrainCommandConfig {
  TrainTraceConfig trace;
  std::optional<std::filesystem::path> output_path;
  WorkloadConfig workload;  // dataset shape and learning settings

  void set(const std::string& key, const std::string& value);
  void apply(const KeyValues& kv);
  static const std::vector<std::string>& keys();
};

struct SweepJob {
  std::size_t job_index = 0;
  std::size_t point = 0;
  double ber = 0.0;
  FieldMask mask = FieldMask::kFull;
  InjectionMode mode = InjectionMode::kStatic;
  bool ecc = false;
  std::size_t n = 8;
  std::size_t index = 1;
  std::size_t run = 0;
  std::uint64_t seed = 0;
};

// Points in the nested order ber, mask, mode, ecc, n, index; runs innermost.
std::vector<SweepJob> enumerate_jobs(const SweepConfig& cfg);

struct SweepRecord {
  SweepJob job;
  double accuracy = 0.0;
  std::uint64_t flips_injected = 0;
  std::uint64_t corrected_singles = 0;
  std::uint64_t detected_doubles = 0;
  std::uint64_t nan_events = 0;
};

struct SweepResult {
  std::vector<SweepRecord> records;  // job order
  double clean_accuracy = 0.0;       // unaligned model, no faults
  std::vector<std::string> trace_lines;
};

// Clean model trained (or loaded) for the workload, plus its test set.
struct Workload {
  Dataset train;
  Dataset test;
  MlpWeights master;
  std::optional<DeployedModel> file_model;  // when loaded from a file
};

Workload build_workload(const WorkloadConfig& cfg);

SweepResult run_sweep(const SweepConfig& cfg);

// Header, one row per record, then mean and std rows per point.
std::string sweep_csv(const SweepResult& r);

// Writes `text`, throwing OutputError when the file cannot be written.
void write_text_file(const std::filesystem::path& path, const std::string& text);
// Fails early (OutputError) when `path` cannot be created for writing.
void check_writable(const std::filesystem::path& path);

// Redundant bits and exponent cells of each protection scheme for group size n.
std::string overhead_table(std::size_t n);

struct SelftestReport {
  bool passed = true;
  std::vector<std::string> lines;
};

// Exhaustive SECDED flips at k = 104 and every FP16 product against an
// exact reference.
SelftestReport selftest();

TrainTraceConfig make_trace_config(const TrainCommandConfig& cfg);

}  // namespace ucim
