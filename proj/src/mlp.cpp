#include "ucim/mlp.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "ucim/rng.hpp"

namespace ucim {

namespace {

constexpr std::uint64_t kInitStream = 0x1A17;

std::string layer_name(std::size_t l) { return "layer" + std::to_string(l) + ".weight"; }

std::size_t tiles_for(std::size_t outputs) { return (outputs + kTileCols - 1) / kTileCols; }

Half relu(Half h) {
  if (h.is_nan()) return h;
  return (h.sign() || h.is_zero()) ? kPosZero : h;
}

bool has_nan(std::span<const Half> v) {
  for (Half h : v) {
    if (h.is_nan()) return true;
  }
  return false;
}

}  // namespace

std::vector<std::size_t> MlpWeights::dims() const {
  std::vector<std::size_t> d;
  if (layers.empty()) return d;
  d.push_back(layers.front().cols);
  for (const WeightMatrix& w : layers) d.push_back(w.rows);
  return d;
}

std::size_t MlpWeights::parameter_count() const {
  std::size_t n = 0;
  for (const WeightMatrix& w : layers) n += w.values.size();
  return n;
}

MlpWeights init_mlp(std::span<const std::size_t> dims, std::uint64_t seed) {
  if (dims.size() < 2) throw std::invalid_argument("init_mlp: need at least input and output dims");
  MlpWeights m;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    if (dims[l] == 0 || dims[l + 1] == 0) throw std::invalid_argument("init_mlp: zero-width layer");
    WeightMatrix w{dims[l + 1], dims[l], std::vector<double>(dims[l] * dims[l + 1])};
    GaussianStream g(RngStream(seed, hash_combine(kInitStream, l)));
    // He initialization for ReLU layers.
    const double scale = std::sqrt(2.0 / static_cast<double>(dims[l]));
    for (double& v : w.values) v = scale * g.next();
    m.layers.push_back(std::move(w));
  }
  return m;
}

DeployedModel deploy_plain(const MlpWeights& w) {
  DeployedModel m;
  for (const WeightMatrix& src : w.layers) {
    DeployedLayer l{src.rows, src.cols, {}, {}};
    l.weights.reserve(src.values.size());
    for (double v : src.values) l.weights.push_back(from_real(v));
    m.layers.push_back(std::move(l));
  }
  return m;
}

DeployedModel deploy_aligned(const MlpWeights& w, std::size_t n, std::size_t index, ZeroPolicy zeros) {
  if (n == 0) throw std::invalid_argument("deploy_aligned: n must be positive");
  DeployedModel m;
  m.n = n;
  m.index = index;
  for (std::size_t l = 0; l < w.layers.size(); ++l) {
    const WeightMatrix& src = w.layers[l];
    AlignedLayer a = align_layer(src, n, index, static_cast<std::uint16_t>(l), zeros);
    m.layers.push_back({src.rows, src.cols, std::move(a.weights), std::move(a.specs)});
  }
  return m;
}

DeployedModel deploy_projected(const MlpWeights& w, const DeployedModel& specs_from, ZeroPolicy zeros) {
  if (!specs_from.aligned()) throw std::invalid_argument("deploy_projected: template model is not aligned");
  if (specs_from.layers.size() != w.layers.size()) throw std::invalid_argument("deploy_projected: layer count");
  DeployedModel m;
  m.n = specs_from.n;
  m.index = specs_from.index;
  for (std::size_t l = 0; l < w.layers.size(); ++l) {
    const WeightMatrix& src = w.layers[l];
    const DeployedLayer& t = specs_from.layers[l];
    if (t.rows != src.rows || t.cols != src.cols) throw std::invalid_argument("deploy_projected: shape mismatch");
    const std::size_t groups = groups_per_row(src.cols, m.n);
    DeployedLayer out{src.rows, src.cols, std::vector<Half>(src.values.size()), t.specs};
    for (std::size_t r = 0; r < src.rows; ++r) {
      for (std::size_t c = 0; c < src.cols; ++c) {
        const AlignmentSpec& spec = t.specs[r * groups + c / m.n].spec;
        out.weights[r * src.cols + c] = spec.degenerate ? kPosZero : from_real(project_to_spec(src.at(r, c), spec, zeros));
      }
    }
    m.layers.push_back(std::move(out));
  }
  return m;
}

MlpWeights master_from(const DeployedModel& m) {
  MlpWeights w;
  for (const DeployedLayer& l : m.layers) {
    WeightMatrix x{l.rows, l.cols, {}};
    x.values.reserve(l.weights.size());
    for (Half h : l.weights) x.values.push_back(to_real(h));
    w.layers.push_back(std::move(x));
  }
  return w;
}

TensorFile model_to_tensors(const DeployedModel& m) {
  TensorFile f;
  std::vector<AlignEntry> entries;
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    const DeployedLayer& layer = m.layers[l];
    f.tensors.push_back(
        {layer_name(l), {static_cast<std::uint32_t>(layer.rows), static_cast<std::uint32_t>(layer.cols)}, layer.weights});
    for (const BlockSpec& b : layer.specs) {
      entries.push_back({static_cast<std::uint16_t>(l), b.block_id, static_cast<std::int8_t>(b.spec.e_shared),
                         static_cast<std::uint8_t>(b.spec.index)});
    }
  }
  if (m.aligned()) f.align = std::move(entries);
  return f;
}

DeployedModel model_from_tensors(const TensorFile& f) {
  DeployedModel m;
  for (std::size_t l = 0;; ++l) {
    const Tensor* t = f.find(layer_name(l));
    if (!t) break;
    if (t->dims.size() != 2) throw std::invalid_argument(layer_name(l) + ": expected rank 2");
    m.layers.push_back({t->dims[0], t->dims[1], t->data, {}});
  }
  if (m.layers.empty()) throw std::invalid_argument("model file has no layer0.weight tensor");
  for (std::size_t l = 1; l < m.layers.size(); ++l) {
    if (m.layers[l].cols != m.layers[l - 1].rows) throw std::invalid_argument("model file: layer shapes do not chain");
  }
  if (!f.align) return m;

  for (const AlignEntry& e : *f.align) {
    if (e.layer_id >= m.layers.size()) throw std::invalid_argument("ALGN entry names a missing layer");
    AlignmentSpec spec = AlignmentSpec::for_exponent(e.e_shared, e.index);
    m.layers[e.layer_id].specs.push_back({e.layer_id, e.block_id, spec});
    m.index = e.index;
  }
  // The group size is not stored; recover it from the block count per row.
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    DeployedLayer& layer = m.layers[l];
    if (layer.specs.empty() || layer.specs.size() % layer.rows != 0) {
      throw std::invalid_argument("ALGN section does not cover " + layer_name(l));
    }
    const std::size_t groups = layer.specs.size() / layer.rows;
    std::size_t n = 1;
    while (n <= layer.cols && groups_per_row(layer.cols, n) != groups) ++n;
    if (n > layer.cols && groups != 1) throw std::invalid_argument("ALGN block count fits no group size");
    if (n > layer.cols) n = layer.cols;
    if (l == 0) {
      m.n = n;
    } else if (groups_per_row(layer.cols, m.n) != groups) {
      throw std::invalid_argument("ALGN group size differs between layers");
    }
    for (std::size_t k = 0; k < layer.specs.size(); ++k) {
      BlockSpec& b = layer.specs[k];
      if (b.block_id != k) throw std::invalid_argument("ALGN entries must be ordered by block id");
      const std::size_t r = k / groups;
      const std::size_t g = k % groups;
      bool any = false;
      for (std::size_t c = g * m.n; c < std::min(layer.cols, (g + 1) * m.n); ++c) {
        any = any || !layer.weights[r * layer.cols + c].is_zero();
      }
      b.spec.degenerate = !any;
    }
  }
  return m;
}

MacroModel MacroModel::build(const DeployedModel& m, StorageLayout layout) {
  if (layout == StorageLayout::kOne4N && !m.aligned()) {
    throw std::invalid_argument("One4N storage needs an exponent-aligned model");
  }
  MacroModel out;
  out.layout_ = layout;
  std::uint32_t tile_id = 0;
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    const DeployedLayer& layer = m.layers[l];
    if (layer.cols > kTileRows) throw std::invalid_argument("layer inputs exceed one tile (256)");
    const std::size_t groups = m.aligned() ? groups_per_row(layer.cols, m.n) : 0;
    std::vector<Tile> tiles;
    for (std::size_t t = 0; t < tiles_for(layer.rows); ++t) {
      const std::size_t cols_used = std::min(kTileCols, layer.rows - t * kTileCols);
      std::vector<Half> w(kTileWeights, kPosZero);
      for (std::size_t r = 0; r < layer.cols; ++r) {
        for (std::size_t c = 0; c < cols_used; ++c) w[r * kTileCols + c] = layer.weights[(t * kTileCols + c) * layer.cols + r];
      }
      TileLoadOptions opts;
      opts.layout = layout;
      opts.n = m.aligned() ? m.n : 1;
      opts.rows_used = layer.cols;
      opts.cols_used = cols_used;
      opts.tile_id = tile_id++;
      if (layout == StorageLayout::kOne4N) {
        opts.shared_exponent_fields.assign(groups * kTileCols, 0);
        for (std::size_t g = 0; g < groups; ++g) {
          for (std::size_t c = 0; c < cols_used; ++c) {
            const AlignmentSpec& s = layer.specs[(t * kTileCols + c) * groups + g].spec;
            opts.shared_exponent_fields[g * kTileCols + c] = s.degenerate ? 0 : s.exponent_field();
          }
        }
      }
      tiles.push_back(Tile::load(w, opts));
    }
    out.tiles_.push_back(std::move(tiles));
    out.inputs_.push_back(layer.cols);
    out.outputs_.push_back(layer.rows);
  }
  return out;
}

MacroModel MacroModel::with_static_faults(const InjectionPlan& plan, std::uint64_t run, Exposure exposure,
                                          ReadStats* stats, FlipLog* log) const {
  MacroModel out = *this;
  for (auto& layer : out.tiles_) {
    for (Tile& t : layer) t = t.with_static_faults(plan, run, exposure, stats, log);
  }
  return out;
}

ModelSnapshot snapshot(const MacroModel& m, const ReadPathConfig& cfg, std::uint64_t access) {
  ModelSnapshot s;
  for (std::size_t l = 0; l < m.layer_count(); ++l) {
    std::vector<TileSnapshot> layer;
    for (const Tile& t : m.layer_tiles(l)) {
      layer.push_back(snapshot(t, cfg, access));
      s.stats += layer.back().stats;
    }
    s.tiles.push_back(std::move(layer));
  }
  return s;
}

ForwardTrace forward(const ModelSnapshot& snap, const MacroModel& m, std::span<const double> x, const MacConfig& mac,
                     bool want_trace) {
  if (m.layer_count() == 0) throw std::invalid_argument("forward: empty model");
  if (x.size() != m.layer_inputs(0)) throw std::invalid_argument("forward: input width does not match the model");
  ForwardTrace out;
  std::vector<Half> act(kTileRows, kPosZero);
  for (std::size_t i = 0; i < x.size(); ++i) act[i] = from_real(x[i]);
  out.input.assign(act.begin(), act.begin() + static_cast<std::ptrdiff_t>(x.size()));

  for (std::size_t l = 0; l < m.layer_count(); ++l) {
    std::vector<Half> pre(m.layer_outputs(l));
    for (std::size_t t = 0; t < snap.tiles[l].size(); ++t) {
      const MatvecResult r = matvec(snap.tiles[l][t], act, mac, want_trace);
      out.nan_outputs += r.nan_outputs;
      for (std::size_t c = 0; c < snap.tiles[l][t].cols_used; ++c) pre[t * kTileCols + c] = r.outputs[c];
      if (want_trace) {
        std::istringstream lines(format_trace(r));
        for (std::string line; std::getline(lines, line);) {
          out.trace_lines.push_back("layer=" + std::to_string(l) + " tile=" + std::to_string(t) + " " + line);
        }
      }
    }
    std::fill(act.begin(), act.end(), kPosZero);
    for (std::size_t i = 0; i < pre.size(); ++i) act[i] = relu(pre[i]);
    out.pre_activations.push_back(std::move(pre));
  }
  return out;
}

ForwardTrace reference_forward(const DeployedModel& m, std::span<const double> x, const MacConfig& mac) {
  if (m.layers.empty()) throw std::invalid_argument("reference_forward: empty model");
  if (x.size() != m.layers.front().cols) throw std::invalid_argument("reference_forward: input width mismatch");
  ForwardTrace out;
  std::vector<Half> act;
  for (double v : x) act.push_back(from_real(v));
  out.input = act;
  for (const DeployedLayer& layer : m.layers) {
    std::vector<Half> pre(layer.rows);
    for (std::size_t o = 0; o < layer.rows; ++o) {
      const std::span<const Half> row(layer.weights.data() + o * layer.cols, layer.cols);
      pre[o] = dot(row, act, mac).value;
      if (pre[o].is_nan()) ++out.nan_outputs;
    }
    act.resize(pre.size());
    for (std::size_t i = 0; i < pre.size(); ++i) act[i] = relu(pre[i]);
    out.pre_activations.push_back(std::move(pre));
  }
  return out;
}

std::uint32_t predict(std::span<const Half> logits) {
  std::uint32_t best = 0;
  double best_value = 0.0;
  bool found = false;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (logits[i].is_nan()) continue;
    const double v = to_real(logits[i]);
    if (!found || v > best_value) {
      best = static_cast<std::uint32_t>(i);
      best_value = v;
      found = true;
    }
  }
  return best;
}

EvalResult evaluate(const MacroModel& m, const Dataset& d, const ReadPathConfig& cfg, std::uint64_t access_base) {
  cfg.validate();
  if (cfg.layout != m.layout()) throw std::invalid_argument("evaluate: read path layout does not match the model");
  EvalResult res;
  if (d.size() == 0) return res;

  ReadStats stats;
  std::size_t correct = 0;
  auto score = [&](const ForwardTrace& f, std::size_t i) {
    const std::vector<Half>& logits = f.pre_activations.back();
    if (has_nan(logits)) ++res.nan_events;
    if (predict(logits) == d.labels[i]) ++correct;
  };

  const bool dynamic = cfg.injection && cfg.injection->mode == InjectionMode::kDynamic && cfg.injection->ber > 0.0;
  if (dynamic) {
    for (std::size_t i = 0; i < d.size(); ++i) {
      const ModelSnapshot snap = snapshot(m, cfg, access_base + i);
      stats += snap.stats;
      score(forward(snap, m, {d.sample(i), d.dim}, cfg.mac), i);
    }
  } else {
    const bool inject = cfg.injection && cfg.injection->ber > 0.0;
    const MacroModel faulty = inject ? m.with_static_faults(*cfg.injection, cfg.run, cfg.exposure, &stats) : m;
    // Stored state is fixed for the whole pass, so one read serves every sample.
    const ModelSnapshot snap = snapshot(faulty, cfg, access_base);
    stats += snap.stats;
    for (std::size_t i = 0; i < d.size(); ++i) score(forward(snap, faulty, {d.sample(i), d.dim}, cfg.mac), i);
  }
  res.accuracy = static_cast<double>(correct) / static_cast<double>(d.size());
  res.flips_injected = stats.flips_injected;
  res.corrected_singles = stats.corrected_singles;
  res.detected_doubles = stats.detected_doubles;
  return res;
}

double reference_accuracy(const DeployedModel& m, const Dataset& d, const MacConfig& mac) {
  if (d.size() == 0) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const ForwardTrace f = reference_forward(m, {d.sample(i), d.dim}, mac);
    if (predict(f.pre_activations.back()) == d.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(d.size());
}

}  // namespace ucim
