// Command-line driver for resilience sweeps, training traces, overhead
// tables and the built-in self test. Talks to the simulator only through
// the C interface.
#include <CLI11.hpp>

#include <cstdio>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ucim/ucim.h"

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitOutput = 3;

int report(ucim_status s) {
  std::fprintf(stderr, "sweep: %s\n", ucim_last_error());
  switch (s) {
    case UCIM_E_INVALID_KEY: return kExitConfig;
    case UCIM_E_IO: return kExitOutput;
    default: return kExitFailure;
  }
}

class Config {
 public:
  explicit Config(ucim_command command) {
    if (ucim_config_create(command, &cfg_) != UCIM_OK) cfg_ = nullptr;
  }
  ~Config() { ucim_config_destroy(cfg_); }
  Config(const Config&) = delete;
  Config& operator=(const Config&) = delete;

  // Config file first, then command-line overrides in flag order.
  int run(const std::string& path, const std::vector<std::pair<std::string, std::optional<std::string>>>& overrides) {
    if (!cfg_) return report(UCIM_E_INTERNAL);
    if (const ucim_status s = ucim_config_load_file(cfg_, path.c_str()); s != UCIM_OK) {
      std::fprintf(stderr, "sweep: %s\n", ucim_last_error());
      return kExitConfig;
    }
    for (const auto& [key, value] : overrides) {
      if (!value) continue;
      if (const ucim_status s = ucim_config_set(cfg_, key.c_str(), value->c_str()); s != UCIM_OK) return report(s);
    }
    if (const ucim_status s = ucim_config_run(cfg_); s != UCIM_OK) return report(s);
    return 0;
  }

 private:
  ucim_config* cfg_ = nullptr;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FP16 compute-in-memory resilience sweeps"};
  app.require_subcommand(1);

  std::string run_config;
  std::optional<std::string> ber, field, mode, ecc, n, index, runs, seed, out, trace, threads;
  auto* run = app.add_subcommand("run", "Accuracy-vs-BER sweep to CSV");
  run->add_option("--config", run_config, "Flat key = value config file")->required();
  run->add_option("--ber", ber, "Comma-separated BER list");
  run->add_option("--field", field, "Field masks: sign, exponent, mantissa, full");
  run->add_option("--mode", mode, "Injection modes: static, dynamic");
  run->add_option("--ecc", ecc, "on, off or both (on,off)");
  run->add_option("--n", n, "Alignment group size(s)");
  run->add_option("--index", index, "Exponent rank(s), 1-based");
  run->add_option("--runs", runs, "Runs per point");
  run->add_option("--seed", seed, "Master seed");
  run->add_option("--out", out, "Output CSV path");
  run->add_option("--trace", trace, "Write per-point pipeline traces here");
  run->add_option("--threads", threads, "Worker threads (0 = all cores)");

  std::string train_config;
  std::optional<std::string> train_out, train_seed, train_threads;
  auto* train = app.add_subcommand("train", "Training traces for the clean, injected and aligned+ECC groups");
  train->add_option("--config", train_config, "Flat key = value config file")->required();
  train->add_option("--out", train_out, "Output CSV path");
  train->add_option("--seed", train_seed, "Master seed");
  train->add_option("--threads", train_threads, "Worker threads (0 = all cores)");

  std::size_t overhead_n = 8;
  auto* overhead = app.add_subcommand("overhead", "Redundancy and exponent storage per protection scheme");
  overhead->add_option("--n", overhead_n, "Group size")->check(CLI::PositiveNumber);

  auto* selftest = app.add_subcommand("selftest", "Exhaustive SECDED and FP16 checks");

  CLI11_PARSE(app, argc, argv);

  if (run->parsed()) {
    Config cfg(UCIM_COMMAND_SWEEP);
    return cfg.run(run_config, {{"ber_list", ber},
                                {"field_masks", field},
                                {"mode", mode},
                                {"ecc", ecc},
                                {"n", n},
                                {"index", index},
                                {"runs_per_point", runs},
                                {"master_seed", seed},
                                {"output_path", out},
                                {"trace_path", trace},
                                {"threads", threads}});
  }
  if (train->parsed()) {
    Config cfg(UCIM_COMMAND_TRAIN);
    return cfg.run(train_config,
                   {{"output_path", train_out}, {"master_seed", train_seed}, {"threads", train_threads}});
  }
  if (overhead->parsed()) {
    std::vector<char> buf(4096);
    if (const ucim_status s = ucim_overhead_table(overhead_n, buf.data(), buf.size(), nullptr); s != UCIM_OK) {
      return report(s);
    }
    std::fputs(buf.data(), stdout);
    return 0;
  }
  if (selftest->parsed()) {
    ucim_selftest_result result{};
    std::vector<char> buf(1 << 16);
    if (const ucim_status s = ucim_selftest(&result, buf.data(), buf.size(), nullptr); s != UCIM_OK) return report(s);
    std::fputs(buf.data(), stdout);
    return result.passed ? 0 : kExitFailure;
  }
  return 0;
}
