#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ucim/dataset.hpp"
#include "ucim/mlp.hpp"

namespace ucim {

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;      // mean training loss over the epoch (NaN on failure)
  double accuracy = 0.0;  // on the evaluation set, through the same read path
  bool nan_flag = false;
};

struct TrainState {
  MlpWeights master;
  // Frozen per-block exponents; absent for unconstrained training.
  std::optional<DeployedModel> specs;
  ZeroPolicy zeros = ZeroPolicy::kLowerLimit;
  std::uint64_t step = 0;
  double learning_rate = 0.05;
  std::vector<EpochRecord> history;
  bool failed = false;
  std::size_t failed_epoch = 0;
  std::uint64_t accesses = 0;  // macro reads issued so far (dynamic fault cadence)

  // The FP16 model currently stored in the macro.
  DeployedModel deployed() const;
};

// Unconstrained state starting from `master`.
TrainState make_state(MlpWeights master, double learning_rate);

// Exponents are fixed from `pretrained` (align per block of n, rank
// `index`); master weights start at their projected values.
TrainState make_aligned_state(const MlpWeights& pretrained, std::size_t n, std::size_t index, double learning_rate,
                              ZeroPolicy zeros = ZeroPolicy::kLowerLimit);

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 16;
  std::uint64_t shuffle_seed = 1;
  // Read path of every forward pass; injection is re-sampled per read when
  // dynamic. Layout must be One4N iff the state carries specs and ecc is used.
  ReadPathConfig read;
  // Evaluation after each epoch (skipped when empty).
  const Dataset* eval = nullptr;
};

/// Minibatch SGD with softmax cross-entropy. Forward passes run through the
/// macro; gradients use the FP16 activations in real arithmetic and update
/// the master weights, which are then projected onto the frozen block specs
/// when present. A non-finite loss ends the run and flags it failed.
TrainState finetune(TrainState state, const Dataset& train, const TrainConfig& cfg);

// Real-valued forward (no FP16 rounding); pre-activations per layer.
std::vector<std::vector<double>> real_forward(const MlpWeights& w, std::span<const double> x);

// Mean cross-entropy over `indices`, all real arithmetic.
double batch_loss(const MlpWeights& w, const Dataset& d, std::span<const std::size_t> indices);

// Analytic gradient of batch_loss (same shapes as w).
MlpWeights batch_gradient(const MlpWeights& w, const Dataset& d, std::span<const std::size_t> indices);

struct GradCheckEntry {
  std::size_t layer = 0;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double relative_error = 0.0;
};

// Central differences on `count` random weights.
std::vector<GradCheckEntry> gradient_check(const MlpWeights& w, const Dataset& d, std::span<const std::size_t> indices,
                                           std::size_t count, std::uint64_t seed, double step = 1e-6);

enum class TrainGroup : std::uint8_t { kClean, kInjected, kProtected };

const char* to_string(TrainGroup g);

struct TrainTraceConfig {
  DatasetSpec data;
  std::size_t test_samples = 1000;
  std::vector<std::size_t> dims{16, 32, 4};
  std::size_t pretrain_epochs = 2;
  std::size_t epochs = 10;
  std::size_t batch_size = 16;
  double learning_rate = 0.05;
  double ber = 1e-5;
  FieldMask mask = FieldMask::kExponent;
  std::size_t n = 8;
  std::size_t index = 2;
  std::uint64_t master_seed = 1;
  std::size_t seeds = 10;
  std::size_t threads = 0;  // 0 = hardware concurrency
};

struct TrainTraceRecord {
  TrainGroup group = TrainGroup::kClean;
  std::size_t seed = 0;
  EpochRecord epoch;
  bool failed = false;  // the run this row belongs to ended in failure
};

struct TrainRunSummary {
  TrainGroup group = TrainGroup::kClean;
  std::size_t seed = 0;
  bool failed = false;
  std::size_t failed_epoch = 0;
  double final_accuracy = 0.0;
};

struct TrainTrace {
  std::vector<TrainTraceRecord> rows;  // ordered by (seed, group, epoch)
  std::vector<TrainRunSummary> runs;
};

/// Three training groups per seed from a shared clean pretrain: clean,
/// injected (per-weight storage) and aligned + One4N ECC under the same
/// dynamic injection.
TrainTrace run_train_trace(const TrainTraceConfig& cfg);

// CSV: group,seed,epoch,loss,accuracy,nan_flag
std::string train_trace_csv(const TrainTrace& t);

}  // namespace ucim
