#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ucim/align.hpp"
#include "ucim/dataset.hpp"
#include "ucim/macro.hpp"
#include "ucim/tensor_file.hpp"

namespace ucim {

// Real-valued master weights of a bias-free ReLU MLP. Layer l is a
// WeightMatrix with rows = outputs and cols = inputs.
struct MlpWeights {
  std::vector<WeightMatrix> layers;

  std::vector<std::size_t> dims() const;
  std::size_t parameter_count() const;
};

MlpWeights init_mlp(std::span<const std::size_t> dims, std::uint64_t seed);

// FP16 weights as stored in the macro, plus the alignment table when the
// model was exponent-aligned.
struct DeployedLayer {
  std::size_t rows = 0;  // outputs
  std::size_t cols = 0;  // inputs
  std::vector<Half> weights;
  std::vector<BlockSpec> specs;  // empty when unaligned
};

struct DeployedModel {
  std::vector<DeployedLayer> layers;
  std::size_t n = 0;      // alignment group size (0 = unaligned)
  std::size_t index = 0;  // alignment rank

  bool aligned() const { return n != 0; }
};

// Round-to-nearest FP16 copy of the master weights.
DeployedModel deploy_plain(const MlpWeights& w);
// Exponent-aligned copy (shared exponent per block of n inputs).
DeployedModel deploy_aligned(const MlpWeights& w, std::size_t n, std::size_t index,
                             ZeroPolicy zeros = ZeroPolicy::kLowerLimit);
// Re-quantize master weights onto fixed per-block specs (projection step).
DeployedModel deploy_projected(const MlpWeights& w, const DeployedModel& specs_from,
                               ZeroPolicy zeros = ZeroPolicy::kLowerLimit);

MlpWeights master_from(const DeployedModel& m);

// "layer<i>.weight" tensors [rows, cols]; ALGN entries when aligned.
TensorFile model_to_tensors(const DeployedModel& m);
DeployedModel model_from_tensors(const TensorFile& f);

// Layers mapped onto 256 x 16 tiles; layer inputs must fit one tile column
// (<= 256 inputs).
class MacroModel {
 public:
  static MacroModel build(const DeployedModel& m, StorageLayout layout);

  StorageLayout layout() const { return layout_; }
  std::size_t layer_count() const { return tiles_.size(); }
  const std::vector<Tile>& layer_tiles(std::size_t l) const { return tiles_[l]; }
  std::size_t layer_outputs(std::size_t l) const { return outputs_[l]; }
  std::size_t layer_inputs(std::size_t l) const { return inputs_[l]; }

  // Copy with stored cells corrupted once per tile.
  MacroModel with_static_faults(const InjectionPlan& plan, std::uint64_t run, Exposure exposure,
                                ReadStats* stats = nullptr, FlipLog* log = nullptr) const;

 private:
  StorageLayout layout_ = StorageLayout::kPerWeight;
  std::vector<std::vector<Tile>> tiles_;
  std::vector<std::size_t> inputs_;
  std::vector<std::size_t> outputs_;
};

// Read-out of every tile for one access; reusable while the stored state
// and the access index stay fixed.
struct ModelSnapshot {
  std::vector<std::vector<TileSnapshot>> tiles;
  ReadStats stats;
};

ModelSnapshot snapshot(const MacroModel& m, const ReadPathConfig& cfg, std::uint64_t access);

struct ForwardTrace {
  std::vector<std::vector<Half>> pre_activations;  // per layer, FP16 matvec outputs
  std::vector<Half> input;
  std::uint64_t nan_outputs = 0;
  std::vector<std::string> trace_lines;  // when requested
};

ForwardTrace forward(const ModelSnapshot& snap, const MacroModel& m, std::span<const double> x, const MacConfig& mac,
                     bool want_trace = false);

// Straight-line reference: every output is fp16-core dot() of the stored
// FP16 weights with the FP16 inputs.
ForwardTrace reference_forward(const DeployedModel& m, std::span<const double> x, const MacConfig& mac);

// Argmax over non-NaN logits (lowest index on ties; class 0 when all NaN).
std::uint32_t predict(std::span<const Half> logits);

struct EvalResult {
  double accuracy = 0.0;
  std::uint64_t flips_injected = 0;
  std::uint64_t corrected_singles = 0;
  std::uint64_t detected_doubles = 0;
  std::uint64_t nan_events = 0;  // samples whose logits contain NaN
};

/// Runs every sample through the macro. Static plans corrupt the stored
/// cells once (keyed by cfg.run); dynamic plans re-sample on every
/// access, numbered access_base + sample index.
EvalResult evaluate(const MacroModel& m, const Dataset& d, const ReadPathConfig& cfg, std::uint64_t access_base = 0);

double reference_accuracy(const DeployedModel& m, const Dataset& d, const MacConfig& mac = {});

}  // namespace ucim
