#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>
#include <vector>

#include "ucim/dataset.hpp"
#include "ucim/mlp.hpp"
#include "ucim/tensor_file.hpp"
#include "ucim/train.hpp"

using namespace ucim;

namespace {

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

std::uint64_t fnv1a64(const std::vector<std::uint8_t>& bytes) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (std::uint8_t b : bytes) h = (h ^ b) * 0x100000001B3ull;
  return h;
}

TensorFile random_file(std::mt19937_64& gen) {
  TensorFile f;
  const std::size_t count = 1 + gen() % 4;
  for (std::size_t t = 0; t < count; ++t) {
    Tensor x;
    x.name = "t" + std::to_string(t) + (gen() % 2 ? ".weight" : "");
    const std::size_t rank = gen() % 4;
    for (std::size_t d = 0; d < rank; ++d) x.dims.push_back(static_cast<std::uint32_t>(1 + gen() % 5));
    x.data.resize(x.element_count());
    for (Half& h : x.data) h.bits = static_cast<std::uint16_t>(gen());
    f.tensors.push_back(std::move(x));
  }
  if (gen() % 2) {
    std::vector<AlignEntry> a(gen() % 5);
    for (AlignEntry& e : a) {
      e = {static_cast<std::uint16_t>(gen() % 3), static_cast<std::uint32_t>(gen() % 100),
           static_cast<std::int8_t>(static_cast<int>(gen() % 30) - 14), static_cast<std::uint8_t>(1 + gen() % 4)};
    }
    f.align = a;
  }
  return f;
}

const Dataset& train_set() {
  static const Dataset d = gen_dataset(DatasetSpec{}, 0);
  return d;
}

const Dataset& test_set() {
  static const Dataset d = gen_dataset(DatasetSpec{}, 1);
  return d;
}

// Clean model trained once and shared by the evaluation tests.
const MlpWeights& trained() {
  static const MlpWeights w = [] {
    const std::vector<std::size_t> dims{16, 32, 4};
    TrainConfig cfg;
    cfg.epochs = 10;
    return finetune(make_state(init_mlp(dims, 7), 0.05), train_set(), cfg).master;
  }();
  return w;
}

}  // namespace

TEST_CASE("tensor files round trip") {
  std::mt19937_64 gen(1);
  for (int trial = 0; trial < 200; ++trial) {
    const TensorFile f = random_file(gen);
    REQUIRE(parse_tensor_file(serialize(f)) == f);
  }
  const auto path = std::filesystem::temp_directory_path() / "ucim_roundtrip.ucim";
  const TensorFile f = random_file(gen);
  save_tensor_file(path, f);
  CHECK(load_tensor_file(path) == f);
  std::filesystem::remove(path);
}

TEST_CASE("truncated files report the failing byte offset") {
  TensorFile f;
  f.tensors.push_back({"a", {3, 2}, std::vector<Half>(6, kOne)});
  f.align = std::vector<AlignEntry>{{0, 1, -2, 1}};
  const std::vector<std::uint8_t> bytes = serialize(f);
  const std::size_t tensors_end = bytes.size() - 4 - 4 - 8;
  for (std::size_t len = 0; len < bytes.size(); ++len) {
    if (len == tensors_end) continue;  // a file may end before the optional section
    const std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(len));
    try {
      (void)parse_tensor_file(cut);
      FAIL("parse accepted a truncated file of " << len << " bytes");
    } catch (const ParseError& e) {
      CHECK(e.offset() <= len);
    }
  }
  std::vector<std::uint8_t> payload_cut(bytes.begin(), bytes.begin() + 20);
  try {
    (void)parse_tensor_file(payload_cut);
  } catch (const ParseError& e) {
    // The second dimension starts at byte 17 and is cut short.
    CHECK(e.offset() == 17);
    CHECK(std::string(e.what()).find("at byte 17") != std::string::npos);
  }
  std::vector<std::uint8_t> bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(parse_tensor_file(bad), ParseError);
}

TEST_CASE("golden tensor file") {
  const std::vector<std::uint8_t> bytes = read_bytes(std::filesystem::path(UCIM_TEST_DATA_DIR) / "golden.ucim");
  REQUIRE(bytes.size() == 90);
  CHECK(fnv1a64(bytes) == 0x9aa2e4beba1168b5ull);

  TensorFile want;
  want.tensors.push_back({"layer0.weight",
                          {2, 3},
                          {from_real(1.0), from_real(-2.0), from_real(0.5), from_real(3.75), kPosZero,
                           from_real(65504.0)}});
  want.tensors.push_back({"scale", {4}, {Half(0x3555), Half(0x8000), from_real(1024.0), Half(0x8400)}});
  want.align = std::vector<AlignEntry>{{0, 1, -3, 2}, {1, 7, 4, 1}};
  CHECK(parse_tensor_file(bytes) == want);
  CHECK(serialize(want) == bytes);
}

TEST_CASE("dataset generation") {
  const Dataset a = gen_dataset(DatasetSpec{}, 0);
  const Dataset b = gen_dataset(DatasetSpec{}, 0);
  CHECK(a.features == b.features);
  CHECK(a.labels == b.labels);
  const Dataset c = gen_dataset(DatasetSpec{}, 1);
  CHECK(c.features != a.features);
  CHECK(c.class_means == a.class_means);

  DatasetSpec odd;
  odd.n_samples = 1003;
  const Dataset d = gen_dataset(odd);
  std::vector<std::size_t> counts(4, 0);
  for (auto l : d.labels) ++counts[l];
  for (auto n : counts) {
    CHECK(n >= 1003 / 4);
    CHECK(n <= 1003 / 4 + 1);
  }
  CHECK(centroid_accuracy(a) >= 0.95);
  CHECK(centroid_accuracy(c) >= 0.95);

  const Dataset back = dataset_from_tensors(dataset_to_tensors(a), 4);
  CHECK(back.labels == a.labels);
  for (std::size_t i = 0; i < a.features.size(); ++i) REQUIRE(back.features[i] == to_real(from_real(a.features[i])));
}

TEST_CASE("model tensors round trip, with and without alignment") {
  const std::vector<std::size_t> dims{16, 32, 4};
  const MlpWeights w = init_mlp(dims, 3);
  CHECK(w.parameter_count() == 16 * 32 + 32 * 4);
  CHECK(w.dims() == dims);

  const DeployedModel plain = deploy_plain(w);
  const DeployedModel p2 = model_from_tensors(model_to_tensors(plain));
  CHECK_FALSE(p2.aligned());
  CHECK(p2.layers[0].weights == plain.layers[0].weights);

  const DeployedModel al = deploy_aligned(w, 8, 2);
  const TensorFile tf = model_to_tensors(al);
  REQUIRE(tf.align.has_value());
  CHECK(tf.align->size() == 32 * 2 + 4 * 4);
  const DeployedModel a2 = model_from_tensors(tf);
  CHECK(a2.n == 8);
  CHECK(a2.index == 2);
  for (std::size_t l = 0; l < 2; ++l) {
    CHECK(a2.layers[l].weights == al.layers[l].weights);
    CHECK(is_aligned(a2.layers[l].weights, a2.layers[l].rows, a2.layers[l].cols, 8, a2.layers[l].specs));
  }
}

TEST_CASE("macro forward equals the reference forward bit for bit") {
  const MlpWeights& w = trained();
  const Dataset& d = test_set();
  for (int variant = 0; variant < 3; ++variant) {
    const DeployedModel m = variant == 0 ? deploy_plain(w) : deploy_aligned(w, variant == 1 ? 8 : 4, 2);
    const StorageLayout layout = variant == 0 ? StorageLayout::kPerWeight : StorageLayout::kOne4N;
    const MacroModel macro = MacroModel::build(m, layout);
    ReadPathConfig cfg;
    cfg.layout = layout;
    cfg.n = m.aligned() ? m.n : 8;
    cfg.ecc = variant != 0;
    const ModelSnapshot snap = snapshot(macro, cfg, 0);
    for (std::size_t i = 0; i < d.size(); ++i) {
      const std::span<const double> x(d.sample(i), d.dim);
      const ForwardTrace a = forward(snap, macro, x, cfg.mac);
      const ForwardTrace b = reference_forward(m, x, cfg.mac);
      REQUIRE(a.input == b.input);
      REQUIRE(a.pre_activations == b.pre_activations);
    }
    CHECK(evaluate(macro, d, cfg).accuracy == reference_accuracy(m, d));
  }
}

TEST_CASE("argmax policy") {
  const std::vector<Half> a{from_real(1.0), from_real(3.0), from_real(3.0), from_real(-1.0)};
  CHECK(predict(a) == 1);
  const std::vector<Half> b{kQuietNaN, from_real(-2.0), kQuietNaN, from_real(-3.0)};
  CHECK(predict(b) == 1);
  const std::vector<Half> c(4, kQuietNaN);
  CHECK(predict(c) == 0);
  const std::vector<Half> d{from_real(1.0), kPosInf, kNegInf, kPosZero};
  CHECK(predict(d) == 1);
}

TEST_CASE("evaluation under faults") {
  const MlpWeights& w = trained();
  const Dataset& d = test_set();
  const MacroModel macro = MacroModel::build(deploy_plain(w), StorageLayout::kPerWeight);
  const double clean = evaluate(macro, d, ReadPathConfig{}).accuracy;
  CHECK(clean >= 0.95);

  ReadPathConfig cfg;
  InjectionPlan plan;
  plan.ber = 1.0;
  plan.mask = FieldMask::kFull;
  cfg.injection = plan;
  // Every stored bit inverted is a deterministic complement rather than
  // noise; the result is one fixed, badly broken network.
  const EvalResult broken = evaluate(macro, d, cfg);
  CHECK(broken.accuracy < 0.5);
  CHECK(broken.flips_injected == 16 * (16 * 32 + 32 * 4));

  // Half of the bits flipped at random wipes out the model.
  plan.ber = 0.5;
  double chance = 0;
  for (int run = 0; run < 20; ++run) {
    plan.master_seed = static_cast<std::uint64_t>(run);
    cfg.injection = plan;
    chance += evaluate(macro, d, cfg).accuracy;
  }
  CHECK(std::fabs(chance / 20 - 0.25) <= 0.05);

  plan.ber = 1e-3;
  plan.mask = FieldMask::kMantissa;
  double sum = 0;
  constexpr int runs = 100;
  for (int run = 0; run < runs; ++run) {
    plan.master_seed = static_cast<std::uint64_t>(run);
    cfg.injection = plan;
    cfg.run = static_cast<std::uint64_t>(run);
    sum += evaluate(macro, d, cfg).accuracy;
  }
  CHECK(std::fabs(sum / runs - clean) <= 0.02);

  // Determinism, dynamic mode included.
  plan.mode = InjectionMode::kDynamic;
  plan.mask = FieldMask::kExponent;
  plan.ber = 1e-3;
  cfg.injection = plan;
  const EvalResult r1 = evaluate(macro, d, cfg, 100);
  const EvalResult r2 = evaluate(macro, d, cfg, 100);
  CHECK(r1.accuracy == r2.accuracy);
  CHECK(r1.flips_injected == r2.flips_injected);
  CHECK(r1.flips_injected > 0);
}

TEST_CASE("zero learning rate leaves weights unchanged and aligned") {
  const MlpWeights& w = trained();
  TrainState s = make_aligned_state(w, 8, 2, 0.0);
  const DeployedModel before = s.deployed();
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.read.layout = StorageLayout::kOne4N;
  cfg.read.ecc = true;
  s = finetune(std::move(s), train_set(), cfg);
  const DeployedModel after = s.deployed();
  for (std::size_t l = 0; l < after.layers.size(); ++l) {
    CHECK(after.layers[l].weights == before.layers[l].weights);
    CHECK(is_aligned(after.layers[l].weights, after.layers[l].rows, after.layers[l].cols, 8, after.layers[l].specs));
  }
  CHECK(s.history.size() == 2);
}

TEST_CASE("projected training keeps every block aligned and in range") {
  const MlpWeights& w = trained();
  TrainState s = make_aligned_state(w, 8, 2, 0.05);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.read.layout = StorageLayout::kOne4N;
  for (int round = 0; round < 3; ++round) {
    s = finetune(std::move(s), train_set(), cfg);
    const DeployedModel m = s.deployed();
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
      const DeployedLayer& L = m.layers[l];
      REQUIRE(is_aligned(L.weights, L.rows, L.cols, 8, L.specs));
      const std::size_t groups = groups_per_row(L.cols, 8);
      for (std::size_t r = 0; r < L.rows; ++r) {
        for (std::size_t c = 0; c < L.cols; ++c) {
          const AlignmentSpec& spec = L.specs[r * groups + c / 8].spec;
          if (spec.degenerate) continue;
          const double v = std::fabs(s.master.layers[l].at(r, c));
          REQUIRE(v >= spec.ll);
          REQUIRE(v <= spec.ul);
        }
      }
    }
  }
  CHECK(s.step > 0);
}

TEST_CASE("clean training converges") {
  const std::vector<std::size_t> dims{16, 32, 4};
  TrainState s = make_state(init_mlp(dims, 11), 0.05);
  TrainConfig cfg;
  cfg.epochs = 30;
  cfg.eval = &test_set();
  s = finetune(std::move(s), train_set(), cfg);
  CHECK_FALSE(s.failed);
  REQUIRE(s.history.size() == 30);
  double best = 0;
  for (const EpochRecord& e : s.history) best = std::max(best, e.accuracy);
  CHECK(best >= 0.90);
  CHECK(s.history.back().loss < s.history.front().loss);
}

TEST_CASE("analytic gradients match central differences") {
  const std::vector<std::size_t> dims{16, 32, 4};
  const MlpWeights w = init_mlp(dims, 5);
  std::vector<std::size_t> idx(32);
  std::iota(idx.begin(), idx.end(), 0);
  for (const GradCheckEntry& e : gradient_check(w, train_set(), idx, 5, 17)) {
    CHECK(e.relative_error <= 1e-4);
  }

  // The same comparison done by hand on two weights.
  const MlpWeights g = batch_gradient(w, train_set(), idx);
  for (auto [layer, i] : {std::pair<std::size_t, std::size_t>{0, 37}, {1, 5}}) {
    MlpWeights plus = w, minus = w;
    plus.layers[layer].values[i] += 1e-6;
    minus.layers[layer].values[i] -= 1e-6;
    const double numeric = (batch_loss(plus, train_set(), idx) - batch_loss(minus, train_set(), idx)) / 2e-6;
    const double analytic = g.layers[layer].values[i];
    CHECK(std::fabs(numeric - analytic) <= 1e-4 * std::max({std::fabs(numeric), std::fabs(analytic), 1e-12}));
  }
}

TEST_CASE("NaN during training marks the run failed with its epoch") {
  const MlpWeights& w = trained();
  TrainState s = make_state(w, 0.05);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.eval = &test_set();
  InjectionPlan plan;
  plan.mode = InjectionMode::kDynamic;
  plan.mask = FieldMask::kExponent;
  plan.ber = 1e-2;
  cfg.read.injection = plan;
  s = finetune(std::move(s), train_set(), cfg);
  CHECK(s.failed);
  CHECK(s.failed_epoch >= 1);
  REQUIRE_FALSE(s.history.empty());
  CHECK(s.history.back().nan_flag);
  CHECK(std::isnan(s.history.back().loss));
}
