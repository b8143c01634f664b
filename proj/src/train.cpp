#include "ucim/train.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "ucim/parallel.hpp"
#include "ucim/rng.hpp"

namespace ucim {

namespace {

constexpr std::uint64_t kShuffleStream = 0x5EF1;
constexpr std::uint64_t kFaultStream = 0xFA17;
constexpr std::uint64_t kGradCheckStream = 0x6C;

MlpWeights zeros_like(const MlpWeights& w) {
  MlpWeights g = w;
  for (WeightMatrix& m : g.layers) std::fill(m.values.begin(), m.values.end(), 0.0);
  return g;
}

/// Cross-entropy of one sample and its gradient, accumulated into `grad`.
/// `pre` holds the pre-activations of every layer; hidden layers use ReLU.
double accumulate(const MlpWeights& w, std::span<const double> input, const std::vector<std::vector<double>>& pre,
                  std::uint32_t label, MlpWeights* grad) {
  const std::vector<double>& logits = pre.back();
  double peak = -std::numeric_limits<double>::infinity();
  for (double z : logits) peak = std::max(peak, z);
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - peak);
  const double loss = peak + std::log(sum) - logits[label];
  if (!grad || !std::isfinite(loss)) return loss;

  std::vector<double> dz(logits.size());
  for (std::size_t k = 0; k < logits.size(); ++k) dz[k] = std::exp(logits[k] - peak) / sum - (k == label ? 1.0 : 0.0);

  for (std::size_t l = w.layers.size(); l-- > 0;) {
    const WeightMatrix& m = w.layers[l];
    std::vector<double> a(m.cols);
    for (std::size_t i = 0; i < m.cols; ++i) a[i] = l == 0 ? input[i] : std::max(0.0, pre[l - 1][i]);
    WeightMatrix& g = grad->layers[l];
    for (std::size_t o = 0; o < m.rows; ++o) {
      for (std::size_t i = 0; i < m.cols; ++i) g.at(o, i) += dz[o] * a[i];
    }
    if (l == 0) break;
    std::vector<double> prev(m.cols, 0.0);
    for (std::size_t i = 0; i < m.cols; ++i) {
      if (!(pre[l - 1][i] > 0.0)) continue;
      for (std::size_t o = 0; o < m.rows; ++o) prev[i] += m.at(o, i) * dz[o];
    }
    dz = std::move(prev);
  }
  return loss;
}

void project(TrainState& s) {
  const DeployedModel& t = *s.specs;
  for (std::size_t l = 0; l < s.master.layers.size(); ++l) {
    WeightMatrix& w = s.master.layers[l];
    const std::size_t groups = groups_per_row(w.cols, t.n);
    for (std::size_t r = 0; r < w.rows; ++r) {
      for (std::size_t c = 0; c < w.cols; ++c) {
        const AlignmentSpec& spec = t.layers[l].specs[r * groups + c / t.n].spec;
        w.at(r, c) = spec.degenerate ? 0.0 : project_to_spec(w.at(r, c), spec, s.zeros);
      }
    }
  }
}

std::vector<std::size_t> shuffled(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  const RngStream rng(seed, kShuffleStream);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.u64(i) % i);
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

// A network whose outputs are all NaN predicts class 0 for every sample.
double nan_network_accuracy(const Dataset& d) {
  if (d.size() == 0) return 0.0;
  std::size_t zeros = 0;
  for (std::uint32_t y : d.labels) zeros += y == 0;
  return static_cast<double>(zeros) / static_cast<double>(d.size());
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

DeployedModel TrainState::deployed() const {
  return specs ? deploy_projected(master, *specs, zeros) : deploy_plain(master);
}

TrainState make_state(MlpWeights master, double learning_rate) {
  TrainState s;
  s.master = std::move(master);
  s.learning_rate = learning_rate;
  return s;
}

TrainState make_aligned_state(const MlpWeights& pretrained, std::size_t n, std::size_t index, double learning_rate,
                              ZeroPolicy zeros) {
  TrainState s;
  s.specs = deploy_aligned(pretrained, n, index, zeros);
  s.master = master_from(*s.specs);
  s.zeros = zeros;
  s.learning_rate = learning_rate;
  return s;
}

TrainState finetune(TrainState state, const Dataset& train, const TrainConfig& cfg) {
  cfg.read.validate();
  if (cfg.batch_size == 0) throw std::invalid_argument("finetune: batch size must be positive");
  if (cfg.read.layout == StorageLayout::kOne4N && !state.specs) {
    throw std::invalid_argument("finetune: One4N storage needs frozen block specs");
  }
  if (state.failed) return state;

  const bool dynamic =
      cfg.read.injection && cfg.read.injection->mode == InjectionMode::kDynamic && cfg.read.injection->ber > 0.0;
  const bool static_faults =
      cfg.read.injection && cfg.read.injection->mode == InjectionMode::kStatic && cfg.read.injection->ber > 0.0;

  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    const std::size_t epoch = state.history.size() + 1;
    const std::vector<std::size_t> order = shuffled(train.size(), hash_combine(cfg.shuffle_seed, epoch));
    double loss_sum = 0.0;
    bool nan = false;

    for (std::size_t start = 0; start < order.size() && !nan; start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      const DeployedModel deployed = state.deployed();
      MacroModel macro = MacroModel::build(deployed, cfg.read.layout);
      // Every step writes fresh weights, so static faults are re-drawn per write.
      if (static_faults) {
        macro = macro.with_static_faults(*cfg.read.injection, hash_combine(cfg.read.run, state.step), cfg.read.exposure);
      }
      const MlpWeights stored = master_from(deployed);
      MlpWeights grad = zeros_like(state.master);
      std::optional<ModelSnapshot> shared;
      if (!dynamic) shared = snapshot(macro, cfg.read, state.accesses++);

      double batch = 0.0;
      for (std::size_t k = start; k < stop; ++k) {
        const std::size_t i = order[k];
        const ModelSnapshot snap = dynamic ? snapshot(macro, cfg.read, state.accesses++) : ModelSnapshot{};
        const ForwardTrace f = forward(dynamic ? snap : *shared, macro, {train.sample(i), train.dim}, cfg.read.mac);
        std::vector<double> input;
        for (Half h : f.input) input.push_back(to_real(h));
        std::vector<std::vector<double>> pre;
        for (const auto& layer : f.pre_activations) {
          std::vector<double> v;
          for (Half h : layer) v.push_back(to_real(h));
          pre.push_back(std::move(v));
        }
        batch += accumulate(stored, input, pre, train.labels[i], &grad);
      }
      if (!std::isfinite(batch)) {
        nan = true;
        break;
      }
      loss_sum += batch;

      const double scale = state.learning_rate / static_cast<double>(stop - start);
      for (std::size_t l = 0; l < grad.layers.size(); ++l) {
        for (std::size_t j = 0; j < grad.layers[l].values.size(); ++j) {
          state.master.layers[l].values[j] -= scale * grad.layers[l].values[j];
        }
      }
      if (state.specs) project(state);
      ++state.step;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    if (nan) {
      rec.loss = std::numeric_limits<double>::quiet_NaN();
      rec.nan_flag = true;
      rec.accuracy = cfg.eval ? nan_network_accuracy(*cfg.eval) : 0.0;
      state.history.push_back(rec);
      state.failed = true;
      state.failed_epoch = epoch;
      return state;
    }
    rec.loss = train.size() ? loss_sum / static_cast<double>(train.size()) : 0.0;
    if (cfg.eval && cfg.eval->size()) {
      const MacroModel macro = MacroModel::build(state.deployed(), cfg.read.layout);
      ReadPathConfig read = cfg.read;
      read.run = hash_combine(cfg.read.run, epoch);
      const EvalResult r = evaluate(macro, *cfg.eval, read, state.accesses);
      state.accesses += cfg.eval->size();
      rec.accuracy = r.accuracy;
    }
    state.history.push_back(rec);
  }
  return state;
}

std::vector<std::vector<double>> real_forward(const MlpWeights& w, std::span<const double> x) {
  std::vector<std::vector<double>> pre;
  std::vector<double> act(x.begin(), x.end());
  for (const WeightMatrix& m : w.layers) {
    if (act.size() != m.cols) throw std::invalid_argument("real_forward: width mismatch");
    std::vector<double> z(m.rows, 0.0);
    for (std::size_t o = 0; o < m.rows; ++o) {
      for (std::size_t i = 0; i < m.cols; ++i) z[o] += m.at(o, i) * act[i];
    }
    act.resize(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) act[i] = std::max(0.0, z[i]);
    pre.push_back(std::move(z));
  }
  return pre;
}

double batch_loss(const MlpWeights& w, const Dataset& d, std::span<const std::size_t> indices) {
  double total = 0.0;
  for (std::size_t i : indices) {
    const std::span<const double> x(d.sample(i), d.dim);
    total += accumulate(w, x, real_forward(w, x), d.labels[i], nullptr);
  }
  return indices.empty() ? 0.0 : total / static_cast<double>(indices.size());
}

MlpWeights batch_gradient(const MlpWeights& w, const Dataset& d, std::span<const std::size_t> indices) {
  MlpWeights g = zeros_like(w);
  for (std::size_t i : indices) {
    const std::span<const double> x(d.sample(i), d.dim);
    accumulate(w, x, real_forward(w, x), d.labels[i], &g);
  }
  if (!indices.empty()) {
    for (WeightMatrix& m : g.layers) {
      for (double& v : m.values) v /= static_cast<double>(indices.size());
    }
  }
  return g;
}

std::vector<GradCheckEntry> gradient_check(const MlpWeights& w, const Dataset& d, std::span<const std::size_t> indices,
                                           std::size_t count, std::uint64_t seed, double step) {
  const MlpWeights g = batch_gradient(w, d, indices);
  const RngStream rng(seed, kGradCheckStream);
  const std::size_t total = w.parameter_count();
  std::vector<GradCheckEntry> out;
  for (std::size_t k = 0; k < count; ++k) {
    std::size_t flat = static_cast<std::size_t>(rng.u64(k) % total);
    GradCheckEntry e;
    while (flat >= w.layers[e.layer].values.size()) flat -= w.layers[e.layer++].values.size();
    e.index = flat;

    MlpWeights probe = w;
    double& v = probe.layers[e.layer].values[flat];
    const double orig = v;
    v = orig + step;
    const double up = batch_loss(probe, d, indices);
    v = orig - step;
    const double down = batch_loss(probe, d, indices);
    e.numeric = (up - down) / (2.0 * step);
    e.analytic = g.layers[e.layer].values[flat];
    const double scale = std::max({std::abs(e.analytic), std::abs(e.numeric), 1e-12});
    e.relative_error = std::abs(e.analytic - e.numeric) / scale;
    out.push_back(e);
  }
  return out;
}

const char* to_string(TrainGroup g) {
  switch (g) {
    case TrainGroup::kClean: return "clean";
    case TrainGroup::kInjected: return "injected";
    case TrainGroup::kProtected: return "aligned_ecc";
  }
  return "?";
}

TrainTrace run_train_trace(const TrainTraceConfig& cfg) {
  if (cfg.seeds == 0) throw std::invalid_argument("train trace: seeds must be positive");
  const Dataset train = gen_dataset(cfg.data, 0);
  DatasetSpec test_spec = cfg.data;
  test_spec.n_samples = cfg.test_samples;
  const Dataset test = gen_dataset(test_spec, 1);

  std::vector<std::vector<TrainState>> per_seed(cfg.seeds);
  parallel_for(cfg.seeds, cfg.threads, [&](std::size_t s) {
    const std::uint64_t seed = hash_combine(cfg.master_seed, s);
    TrainConfig base;
    base.batch_size = cfg.batch_size;
    base.shuffle_seed = seed;
    base.eval = &test;

    TrainConfig pre = base;
    pre.epochs = cfg.pretrain_epochs;
    const TrainState pretrained = finetune(make_state(init_mlp(cfg.dims, seed), cfg.learning_rate), train, pre);
    if (pretrained.failed) throw std::runtime_error("train trace: clean pretraining diverged");

    const InjectionPlan plan{InjectionMode::kDynamic, cfg.ber, cfg.mask, hash_combine(seed, kFaultStream)};
    TrainConfig run = base;
    run.epochs = cfg.epochs;

    TrainState clean = make_state(pretrained.master, cfg.learning_rate);
    clean = finetune(std::move(clean), train, run);

    TrainConfig injected_cfg = run;
    injected_cfg.read.injection = plan;
    TrainState injected = finetune(make_state(pretrained.master, cfg.learning_rate), train, injected_cfg);

    TrainConfig protected_cfg = injected_cfg;
    protected_cfg.read.layout = StorageLayout::kOne4N;
    protected_cfg.read.ecc = true;
    protected_cfg.read.n = cfg.n;
    TrainState guarded = make_aligned_state(pretrained.master, cfg.n, cfg.index, cfg.learning_rate);
    guarded = finetune(std::move(guarded), train, protected_cfg);

    per_seed[s] = {std::move(clean), std::move(injected), std::move(guarded)};
  });

  TrainTrace out;
  for (std::size_t s = 0; s < cfg.seeds; ++s) {
    for (std::size_t g = 0; g < 3; ++g) {
      const TrainState& st = per_seed[s][g];
      const auto group = static_cast<TrainGroup>(g);
      for (const EpochRecord& r : st.history) out.rows.push_back({group, s, r, st.failed});
      out.runs.push_back({group, s, st.failed, st.failed_epoch, st.history.empty() ? 0.0 : st.history.back().accuracy});
    }
  }
  return out;
}

std::string train_trace_csv(const TrainTrace& t) {
  std::ostringstream os;
  os << "group,seed,epoch,loss,accuracy,nan_flag\n";
  for (const TrainTraceRecord& r : t.rows) {
    os << to_string(r.group) << ',' << r.seed << ',' << r.epoch.epoch << ',' << fmt(r.epoch.loss) << ','
       << fmt(r.epoch.accuracy) << ',' << (r.epoch.nan_flag ? 1 : 0) << '\n';
  }
  return os.str();
}

}  // namespace ucim
