#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>
#include <vector>

#include "ucim/fault.hpp"
#include "ucim/rng.hpp"

using namespace ucim;

TEST_CASE("philox4x32-10 known answers") {
  CHECK(philox4x32_10({0, 0, 0, 0}, {0, 0}) == PhiloxCounter{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(philox4x32_10({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
        PhiloxCounter{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
  CHECK(philox4x32_10({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
        PhiloxCounter{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("rng streams are pure functions of their coordinates") {
  const RngStream a(42, 3);
  const RngStream b(42, 3);
  const RngStream c(42, 4);
  std::size_t differ = 0;
  for (std::uint32_t w = 0; w < 100; ++w) {
    REQUIRE(a.bits(w, 7, 2) == b.bits(w, 7, 2));
    differ += a.bits(w, 7, 2) != c.bits(w, 7, 2);
  }
  CHECK(differ > 95);
  // Reading in reverse order gives the same values.
  std::vector<std::uint64_t> fwd, rev;
  for (std::uint64_t i = 0; i < 50; ++i) fwd.push_back(a.u64(i));
  for (std::uint64_t i = 50; i-- > 0;) rev.push_back(a.u64(i));
  for (std::size_t i = 0; i < 50; ++i) CHECK(fwd[i] == rev[49 - i]);
  CHECK(a.uniform(1, 1, 1) > 0.0);
  CHECK(a.uniform(1, 1, 1) < 1.0);
}

TEST_CASE("gaussian stream moments") {
  GaussianStream g(RngStream(5, 0));
  double sum = 0, sq = 0;
  constexpr int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = g.next();
    sum += x;
    sq += x * x;
  }
  CHECK(std::fabs(sum / n) < 0.01);
  CHECK(std::fabs(sq / n - 1.0) < 0.02);
}

TEST_CASE("field masks") {
  CHECK(mask_bits(FieldMask::kSign) == 0x8000);
  CHECK(mask_bits(FieldMask::kExponent) == 0x7C00);
  CHECK(mask_bits(FieldMask::kMantissa) == 0x03FF);
  CHECK(mask_bits(FieldMask::kFull) == 0xFFFF);
  for (FieldMask m : {FieldMask::kSign, FieldMask::kExponent, FieldMask::kMantissa, FieldMask::kFull}) {
    CHECK(parse_field_mask(to_string(m)) == m);
  }
  CHECK_FALSE(parse_field_mask("bogus").has_value());
  CHECK(parse_injection_mode("dynamic") == InjectionMode::kDynamic);
}

TEST_CASE("static injection at the extremes") {
  std::vector<Half> words(1000);
  for (std::size_t i = 0; i < words.size(); ++i) words[i] = Half(static_cast<std::uint16_t>(i * 37));

  InjectionPlan plan;
  plan.ber = 0.0;
  StaticInjection out = inject_static(words, plan);
  CHECK(out.words == words);
  CHECK(out.log.empty());

  plan.ber = 1.0;
  plan.mask = FieldMask::kSign;
  out = inject_static(words, plan, 9);
  REQUIRE(out.log.size() == words.size());
  for (std::size_t i = 0; i < words.size(); ++i) {
    CHECK(out.words[i].bits == (words[i].bits ^ 0x8000));
    CHECK(out.log[i] == FlipEvent{9, static_cast<std::uint32_t>(i), 15, -1});
  }

  plan.ber = 1.5;
  CHECK_THROWS_AS(inject_static(words, plan), std::invalid_argument);
  plan.ber = 0.1;
  plan.mode = InjectionMode::kDynamic;
  CHECK_THROWS_AS(inject_static(words, plan), std::invalid_argument);
}

TEST_CASE("static flip count follows the binomial law") {
  const std::vector<Half> words(1000000, kOne);
  InjectionPlan plan;
  plan.ber = 1e-3;
  plan.mask = FieldMask::kMantissa;
  plan.master_seed = 77;
  const StaticInjection out = inject_static(words, plan);
  // Binomial(1e7, 1e-3): mean 1e4, sigma ~ 100.
  CHECK(out.log.size() >= 9700);
  CHECK(out.log.size() <= 10300);
  for (std::size_t i = 0; i < words.size(); ++i) {
    REQUIRE(((out.words[i].bits ^ words[i].bits) & ~0x03FF) == 0);
  }
}

TEST_CASE("flips never leave the mask and the log is reproducible") {
  std::vector<Half> words(4096);
  for (std::size_t i = 0; i < words.size(); ++i) words[i] = Half(static_cast<std::uint16_t>(i * 2654435761u));
  for (FieldMask m : {FieldMask::kSign, FieldMask::kExponent, FieldMask::kMantissa, FieldMask::kFull}) {
    InjectionPlan plan;
    plan.ber = 0.05;
    plan.mask = m;
    plan.master_seed = 3;
    const StaticInjection a = inject_static(words, plan, 1);
    const StaticInjection b = inject_static(words, plan, 1);
    CHECK(a.log == b.log);
    CHECK(a.words == b.words);
    CHECK_FALSE(a.log.empty());
    for (std::size_t i = 0; i < words.size(); ++i) {
      REQUIRE(((a.words[i].bits ^ words[i].bits) & ~mask_bits(m)) == 0);
    }
    const StaticInjection other_run = inject_static(words, plan, 2);
    CHECK_FALSE(other_run.log == a.log);
  }
}

TEST_CASE("dynamic sampling") {
  InjectionPlan plan;
  plan.mode = InjectionMode::kDynamic;
  plan.mask = FieldMask::kFull;
  plan.master_seed = 11;
  const Half w(0x3C00);

  plan.ber = 0.0;
  for (std::uint64_t a = 0; a < 1000; ++a) REQUIRE(sample_dynamic(w, 5, a, plan) == w);

  plan.ber = 0.3;
  for (std::uint64_t a = 0; a < 100; ++a) REQUIRE(sample_dynamic(w, 5, a, plan) == sample_dynamic(w, 5, a, plan));

  plan.ber = 1e-2;
  std::vector<std::size_t> per_bit(16, 0);
  constexpr std::uint64_t accesses = 100000;
  for (std::uint64_t a = 0; a < accesses; ++a) {
    const std::uint16_t diff = sample_dynamic(w, 5, a, plan).bits ^ w.bits;
    for (int b = 0; b < 16; ++b) per_bit[b] += (diff >> b) & 1u;
  }
  for (int b = 0; b < 16; ++b) {
    const double rate = static_cast<double>(per_bit[b]) / accesses;
    CHECK(std::fabs(rate - 1e-2) <= 3e-3);
  }
  plan.mode = InjectionMode::kStatic;
  CHECK_THROWS_AS(sample_dynamic(w, 0, 0, plan), std::invalid_argument);
}

TEST_CASE("expected flips") {
  CHECK(expected_flips(1e-6, 1e6) == doctest::Approx(1.0));
  CHECK(expected_flips(0.0, 12345) == 0.0);

  // Mean of 1000 independent injections into 4096 full words at 1e-3.
  const std::vector<Half> words(4096, kOne);
  InjectionPlan plan;
  plan.ber = 1e-3;
  double total = 0;
  for (std::uint64_t run = 0; run < 1000; ++run) total += static_cast<double>(inject_static(words, plan, run).log.size());
  const double want = expected_flips(1e-3, 4096.0 * 16);
  CHECK(std::fabs(total / 1000 - want) / want < 0.05);
}

TEST_CASE("wide-word flip sampling respects exposure") {
  const RngStream rng(1, 0);
  std::vector<bool> exposed(112, false);
  for (std::size_t i = 0; i < exposed.size(); i += 3) exposed[i] = true;
  const std::vector<std::uint32_t> all = sample_flips(rng, 1.0, 0, 0, exposed);
  CHECK(all.size() == 38);
  for (std::uint32_t b : all) CHECK(exposed[b]);
  CHECK(sample_flips(rng, 0.0, 0, 0, exposed).empty());
}

TEST_CASE("flip log csv") {
  const FlipLog log{{0, 3, 15, -1}, {2, 7, 1, 42}};
  std::ostringstream os;
  write_flip_log_csv(os, log);
  CHECK(os.str() == "run,word_index,bit_index,access_index\n0,3,15,-1\n2,7,1,42\n");
}
