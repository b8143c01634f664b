#include "ucim/sweep.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "ucim/ecc.hpp"
#include "ucim/parallel.hpp"
#include "ucim/rng.hpp"

namespace ucim {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  for (std::string item; std::getline(ss, item, ',');) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const std::string& why) {
  throw ConfigError(key, "config key '" + key + "': invalid value '" + value + "' (" + why + ")");
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size() || !std::isfinite(d)) bad_value(key, v, "expected a number");
    return d;
  } catch (const std::logic_error&) {
    bad_value(key, v, "expected a number");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) bad_value(key, v, "expected a non-negative integer");
  return out;
}

std::size_t parse_size(const std::string& key, const std::string& v, std::size_t min = 0) {
  const std::uint64_t x = parse_u64(key, v);
  if (x < min) bad_value(key, v, "must be at least " + std::to_string(min));
  return static_cast<std::size_t>(x);
}

bool parse_switch(const std::string& key, const std::string& v) {
  if (v == "on" || v == "true" || v == "1") return true;
  if (v == "off" || v == "false" || v == "0") return false;
  bad_value(key, v, "expected on or off");
}

double parse_ber(const std::string& key, const std::string& v) {
  const double b = parse_double(key, v);
  if (b < 0.0 || b > 1.0) bad_value(key, v, "BER must lie in [0, 1]");
  return b;
}

template <typename T, typename F>
std::vector<T> parse_list(const std::string& key, const std::string& v, F&& one) {
  std::vector<T> out;
  for (const std::string& item : split_list(v)) out.push_back(one(key, item));
  if (out.empty()) bad_value(key, v, "empty list");
  return out;
}

FieldMask parse_mask(const std::string& key, const std::string& v) {
  const auto m = parse_field_mask(v);
  if (!m) bad_value(key, v, "expected sign, exponent, mantissa or full");
  return *m;
}

InjectionMode parse_mode(const std::string& key, const std::string& v) {
  const auto m = parse_injection_mode(v);
  if (!m) bad_value(key, v, "expected static or dynamic");
  return *m;
}

[[noreturn]] void unknown_key(const std::string& key) {
  throw ConfigError(key, "unknown config key '" + key + "'");
}

bool set_workload(WorkloadConfig& w, const std::string& key, const std::string& value) {
  if (key == "model_path") {
    w.model_path = value;
  } else if (key == "dataset_path") {
    w.dataset_path = value;
  } else if (key == "data_seed") {
    w.data_seed = parse_u64(key, value);
  } else if (key == "train_samples") {
    w.train_samples = parse_size(key, value, 1);
  } else if (key == "test_samples") {
    w.test_samples = parse_size(key, value, 1);
  } else if (key == "margin") {
    w.margin = parse_double(key, value);
    if (w.margin <= 0.0) bad_value(key, value, "must be positive");
  } else if (key == "train_epochs") {
    w.train_epochs = parse_size(key, value);
  } else if (key == "finetune_epochs") {
    w.finetune_epochs = parse_size(key, value);
  } else if (key == "learning_rate") {
    w.learning_rate = parse_double(key, value);
    if (w.learning_rate < 0.0) bad_value(key, value, "must be non-negative");
  } else if (key == "batch_size") {
    w.batch_size = parse_size(key, value, 1);
  } else if (key == "model_seed") {
    w.model_seed = parse_u64(key, value);
  } else {
    return false;
  }
  return true;
}

const std::vector<std::string> kWorkloadKeys{"model_path",    "dataset_path", "data_seed",    "train_samples",
                                             "test_samples",  "margin",       "train_epochs", "finetune_epochs",
                                             "learning_rate", "batch_size",   "model_seed"};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

const char* layout_name(StorageLayout l) { return l == StorageLayout::kOne4N ? "one4n" : "per_weight"; }

DatasetSpec dataset_spec(const WorkloadConfig& w, std::size_t samples) {
  DatasetSpec s;
  s.seed = w.data_seed;
  s.n_samples = samples;
  s.margin = w.margin;
  return s;
}

}  // namespace

KeyValues parse_config_text(const std::string& text) {
  KeyValues kv;
  std::istringstream is(text);
  std::size_t line_no = 0;
  for (std::string line; std::getline(is, line);) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(t, "config line " + std::to_string(line_no) + ": expected key = value, got '" + t + "'");
    }
    kv.emplace_back(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  return kv;
}

KeyValues load_config_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read config file " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config_text(ss.str());
}

const std::vector<std::string>& SweepConfig::keys() {
  static const std::vector<std::string> k = [] {
    std::vector<std::string> v{"ber_list", "field_masks", "mode",   "ecc",     "n",           "index",
                               "runs_per_point", "master_seed", "align", "layout", "threads", "output_path",
                               "trace_path"};
    v.insert(v.end(), kWorkloadKeys.begin(), kWorkloadKeys.end());
    return v;
  }();
  return k;
}

void SweepConfig::set(const std::string& key, const std::string& value) {
  if (key == "ber_list") {
    ber_list = parse_list<double>(key, value, parse_ber);
  } else if (key == "field_masks") {
    field_masks = parse_list<FieldMask>(key, value, parse_mask);
  } else if (key == "mode") {
    mode = parse_list<InjectionMode>(key, value, parse_mode);
  } else if (key == "ecc") {
    ecc = parse_list<bool>(key, value, parse_switch);
  } else if (key == "n") {
    n = parse_list<std::size_t>(key, value, [](const std::string& k, const std::string& v) {
      const std::size_t x = parse_size(k, v, 1);
      if (x > kTileRows) bad_value(k, v, "group size exceeds the tile height");
      return x;
    });
  } else if (key == "index") {
    index = parse_list<std::size_t>(key, value, [](const std::string& k, const std::string& v) { return parse_size(k, v, 1); });
  } else if (key == "runs_per_point") {
    runs_per_point = parse_size(key, value, 1);
  } else if (key == "master_seed") {
    master_seed = parse_u64(key, value);
  } else if (key == "align") {
    align = parse_switch(key, value);
  } else if (key == "layout") {
    if (value == "auto") {
      layout = LayoutChoice::kAuto;
    } else if (value == "per_weight") {
      layout = LayoutChoice::kPerWeight;
    } else if (value == "one4n") {
      layout = LayoutChoice::kOne4N;
    } else {
      bad_value(key, value, "expected auto, per_weight or one4n");
    }
  } else if (key == "threads") {
    threads = parse_size(key, value);
  } else if (key == "output_path") {
    output_path = value;
  } else if (key == "trace_path") {
    trace_path = value;
  } else if (!set_workload(workload, key, value)) {
    unknown_key(key);
  }
}

void SweepConfig::apply(const KeyValues& kv) {
  for (const auto& [k, v] : kv) set(k, v);
}

const std::vector<std::string>& TrainCommandConfig::keys() {
  static const std::vector<std::string> k = [] {
    std::vector<std::string> v{"ber",   "field_mask", "n",     "index",       "master_seed",
                               "seeds", "epochs",     "pretrain_epochs", "threads", "output_path"};
    v.insert(v.end(), kWorkloadKeys.begin(), kWorkloadKeys.end());
    return v;
  }();
  return k;
}

void TrainCommandConfig::set(const std::string& key, const std::string& value) {
  if (key == "ber") {
    trace.ber = parse_ber(key, value);
  } else if (key == "field_mask") {
    trace.mask = parse_mask(key, value);
  } else if (key == "n") {
    trace.n = parse_size(key, value, 1);
  } else if (key == "index") {
    trace.index = parse_size(key, value, 1);
  } else if (key == "master_seed") {
    trace.master_seed = parse_u64(key, value);
  } else if (key == "seeds") {
    trace.seeds = parse_size(key, value, 1);
  } else if (key == "epochs") {
    trace.epochs = parse_size(key, value);
  } else if (key == "pretrain_epochs") {
    trace.pretrain_epochs = parse_size(key, value);
  } else if (key == "threads") {
    trace.threads = parse_size(key, value);
  } else if (key == "output_path") {
    output_path = value;
  } else if (key == "model_path" || key == "dataset_path") {
    throw ConfigError(key, "config key '" + key + "' is not supported by the train command");
  } else if (!set_workload(workload, key, value)) {
    unknown_key(key);
  }
}

void TrainCommandConfig::apply(const KeyValues& kv) {
  for (const auto& [k, v] : kv) set(k, v);
}

TrainTraceConfig make_trace_config(const TrainCommandConfig& cfg) {
  TrainTraceConfig t = cfg.trace;
  t.data = dataset_spec(cfg.workload, cfg.workload.train_samples);
  t.test_samples = cfg.workload.test_samples;
  t.batch_size = cfg.workload.batch_size;
  t.learning_rate = cfg.workload.learning_rate;
  return t;
}

std::vector<SweepJob> enumerate_jobs(const SweepConfig& cfg) {
  std::vector<SweepJob> jobs;
  std::size_t point = 0;
  for (double ber : cfg.ber_list) {
    for (FieldMask mask : cfg.field_masks) {
      for (InjectionMode mode : cfg.mode) {
        for (bool ecc : cfg.ecc) {
          for (std::size_t n : cfg.n) {
            for (std::size_t index : cfg.index) {
              for (std::size_t run = 0; run < cfg.runs_per_point; ++run) {
                SweepJob j;
                j.job_index = jobs.size();
                j.point = point;
                j.ber = ber;
                j.mask = mask;
                j.mode = mode;
                j.ecc = ecc;
                j.n = n;
                j.index = index;
                j.run = run;
                j.seed = hash_combine(cfg.master_seed, j.job_index);
                jobs.push_back(j);
              }
              ++point;
            }
          }
        }
      }
    }
  }
  return jobs;
}

Workload build_workload(const WorkloadConfig& cfg) {
  Workload w;
  w.train = gen_dataset(dataset_spec(cfg, cfg.train_samples), 0);
  if (cfg.dataset_path) {
    w.test = dataset_from_tensors(load_tensor_file(*cfg.dataset_path), w.train.n_classes);
  } else {
    w.test = gen_dataset(dataset_spec(cfg, cfg.test_samples), 1);
  }
  if (cfg.model_path) {
    w.file_model = model_from_tensors(load_tensor_file(*cfg.model_path));
    w.master = master_from(*w.file_model);
    if (w.master.layers.front().cols != w.test.dim) throw std::invalid_argument("model input width differs from the dataset");
    return w;
  }
  const std::vector<std::size_t> dims{w.train.dim, 32, w.train.n_classes};
  TrainConfig tc;
  tc.epochs = cfg.train_epochs;
  tc.batch_size = cfg.batch_size;
  tc.shuffle_seed = cfg.model_seed;
  const TrainState s = finetune(make_state(init_mlp(dims, cfg.model_seed), cfg.learning_rate), w.train, tc);
  if (s.failed) throw std::runtime_error("clean training diverged");
  w.master = s.master;
  return w;
}

SweepResult run_sweep(const SweepConfig& cfg) {
  if (cfg.output_path) check_writable(*cfg.output_path);
  if (cfg.trace_path) check_writable(*cfg.trace_path);
  const Workload w = build_workload(cfg.workload);
  const std::vector<SweepJob> jobs = enumerate_jobs(cfg);

  // One deployed model per (aligned, n, index); a model file that already
  // carries an alignment table is used as is.
  struct Variant {
    DeployedModel model;
    std::map<StorageLayout, MacroModel> macros;
  };
  std::map<std::tuple<bool, std::size_t, std::size_t>, Variant> variants;
  auto layout_for = [&](const SweepJob& j) {
    if (cfg.layout == LayoutChoice::kOne4N || j.ecc) return StorageLayout::kOne4N;
    if (cfg.layout == LayoutChoice::kPerWeight) return StorageLayout::kPerWeight;
    return StorageLayout::kPerWeight;
  };
  auto variant_key = [&](const SweepJob& j) {
    const bool aligned = cfg.align || j.ecc || layout_for(j) == StorageLayout::kOne4N;
    return aligned ? std::make_tuple(true, j.n, j.index) : std::make_tuple(false, std::size_t{0}, std::size_t{0});
  };
  if (cfg.layout == LayoutChoice::kPerWeight) {
    for (const SweepJob& j : jobs) {
      if (j.ecc) throw ConfigError("ecc", "config key 'ecc': on requires the one4n layout");
    }
  }
  for (const SweepJob& j : jobs) {
    const auto key = variant_key(j);
    auto it = variants.find(key);
    if (it == variants.end()) {
      DeployedModel m;
      if (w.file_model && (!std::get<0>(key) || w.file_model->aligned())) {
        m = *w.file_model;
      } else if (!std::get<0>(key)) {
        m = deploy_plain(w.master);
      } else {
        TrainConfig tc;
        tc.epochs = cfg.workload.finetune_epochs;
        tc.batch_size = cfg.workload.batch_size;
        tc.shuffle_seed = cfg.workload.model_seed;
        tc.read.layout = StorageLayout::kOne4N;
        tc.read.n = j.n;
        TrainState s = make_aligned_state(w.master, j.n, j.index, cfg.workload.learning_rate);
        s = finetune(std::move(s), w.train, tc);
        if (s.failed) throw std::runtime_error("aligned fine-tuning diverged");
        m = s.deployed();
      }
      it = variants.emplace(key, Variant{std::move(m), {}}).first;
    }
    const StorageLayout layout = layout_for(j);
    if (!it->second.macros.count(layout)) it->second.macros.emplace(layout, MacroModel::build(it->second.model, layout));
  }

  SweepResult res;
  {
    const MacroModel clean = MacroModel::build(w.file_model ? *w.file_model : deploy_plain(w.master),
                                               StorageLayout::kPerWeight);
    res.clean_accuracy = evaluate(clean, w.test, ReadPathConfig{}).accuracy;
  }

  res.records.resize(jobs.size());
  std::vector<std::vector<std::string>> traces(jobs.size());
  parallel_for(jobs.size(), cfg.threads, [&](std::size_t i) {
    const SweepJob& j = jobs[i];
    const Variant& v = variants.at(variant_key(j));
    const StorageLayout layout = layout_for(j);
    const MacroModel& macro = v.macros.at(layout);
    ReadPathConfig rc;
    rc.layout = layout;
    rc.ecc = j.ecc;
    rc.n = v.model.aligned() ? v.model.n : j.n;
    rc.run = j.run;
    rc.injection = InjectionPlan{j.mode, j.ber, j.mask, j.seed};
    const EvalResult e = evaluate(macro, w.test, rc);

    SweepRecord& r = res.records[i];
    r.job = j;
    if (v.model.aligned()) {
      r.job.n = v.model.n;
      r.job.index = v.model.index;
    }
    r.accuracy = e.accuracy;
    r.flips_injected = e.flips_injected;
    r.corrected_singles = e.corrected_singles;
    r.detected_doubles = e.detected_doubles;
    r.nan_events = e.nan_events;

    if (cfg.trace_path && j.run == 0 && w.test.size() > 0) {
      const MacroModel faulty =
          j.mode == InjectionMode::kStatic && j.ber > 0.0 ? macro.with_static_faults(*rc.injection, rc.run, rc.exposure) : macro;
      const ModelSnapshot snap = snapshot(faulty, rc, 0);
      const ForwardTrace f = forward(snap, faulty, {w.test.sample(0), w.test.dim}, rc.mac, true);
      std::ostringstream head;
      head << "point=" << j.point << " ber=" << fmt(j.ber) << " mask=" << to_string(j.mask)
           << " mode=" << to_string(j.mode) << " ecc=" << (j.ecc ? "on" : "off") << " layout=" << layout_name(layout)
           << " sample=0";
      traces[i].push_back(head.str());
      for (const std::string& line : f.trace_lines) traces[i].push_back("  " + line);
    }
  });
  for (auto& t : traces) res.trace_lines.insert(res.trace_lines.end(), t.begin(), t.end());

  if (cfg.output_path) write_text_file(*cfg.output_path, sweep_csv(res));
  if (cfg.trace_path) {
    std::string text;
    for (const std::string& line : res.trace_lines) text += line + '\n';
    write_text_file(*cfg.trace_path, text);
  }
  return res;
}

std::string sweep_csv(const SweepResult& r) {
  std::ostringstream os;
  os << "ber,mask,mode,ecc,n,index,run,seed,accuracy,flips_injected,corrected_singles,detected_doubles,nan_events\n";
  auto point_prefix = [&](const SweepJob& j) {
    os << fmt(j.ber) << ',' << to_string(j.mask) << ',' << to_string(j.mode) << ',' << (j.ecc ? "on" : "off") << ','
       << j.n << ',' << j.index << ',';
  };
  for (std::size_t i = 0; i < r.records.size();) {
    std::size_t end = i;
    while (end < r.records.size() && r.records[end].job.point == r.records[i].job.point) ++end;
    std::vector<std::array<double, 5>> values;
    for (std::size_t k = i; k < end; ++k) {
      const SweepRecord& rec = r.records[k];
      point_prefix(rec.job);
      os << rec.job.run << ',' << rec.job.seed << ',' << fmt(rec.accuracy) << ',' << rec.flips_injected << ','
         << rec.corrected_singles << ',' << rec.detected_doubles << ',' << rec.nan_events << '\n';
      values.push_back({rec.accuracy, static_cast<double>(rec.flips_injected),
                        static_cast<double>(rec.corrected_singles), static_cast<double>(rec.detected_doubles),
                        static_cast<double>(rec.nan_events)});
    }
    std::array<double, 5> mean{};
    std::array<double, 5> sd{};
    for (const auto& v : values) {
      for (std::size_t c = 0; c < 5; ++c) mean[c] += v[c];
    }
    for (double& m : mean) m /= static_cast<double>(values.size());
    if (values.size() > 1) {
      for (const auto& v : values) {
        for (std::size_t c = 0; c < 5; ++c) sd[c] += (v[c] - mean[c]) * (v[c] - mean[c]);
      }
      for (double& s : sd) s = std::sqrt(s / static_cast<double>(values.size() - 1));
    }
    for (const auto* row : {&mean, &sd}) {
      point_prefix(r.records[i].job);
      os << (row == &mean ? "mean" : "std") << ',';
      for (std::size_t c = 0; c < 5; ++c) os << ',' << fmt((*row)[c]);
      os << '\n';
    }
    i = end;
  }
  return os.str();
}

void check_writable(const std::filesystem::path& path) {
  const bool existed = std::filesystem::exists(path);
  std::ofstream os(path, std::ios::app);
  if (!os) throw OutputError("cannot write output file " + path.string());
  os.close();
  if (!existed) std::filesystem::remove(path);
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw OutputError("cannot write output file " + path.string());
  os << text;
  os.close();
  if (!os) throw OutputError("write failed: " + path.string());
}

std::string overhead_table(std::size_t n) {
  const ArrayGeometry geom;
  std::ostringstream os;
  os << "n=" << n << " array=" << geom.rows << "x" << geom.weights_per_row << " FP16 weights\n";
  os << "scheme,redundant_bits,exponent_sram_cells\n";
  for (ProtectionScheme s : {ProtectionScheme::kTraditionalFull, ProtectionScheme::kTraditionalExpSign,
                             ProtectionScheme::kRowBasedFull, ProtectionScheme::kOne4N}) {
    const OverheadReport r = overhead_accounting(s, n, geom);
    os << to_string(s) << ',' << r.redundant_bits << ',' << r.exponent_sram_cells << '\n';
  }
  const std::size_t tb = total_protected_bits(n);
  const BlockLayout layout{n};
  os << "protected bits per block (exponents + signs): " << tb << " in " << layout.row_count() << " row(s) of";
  for (std::size_t s : layout.row_sizes()) os << ' ' << s;
  os << " data bits\n";
  return os.str();
}

}  // namespace ucim
