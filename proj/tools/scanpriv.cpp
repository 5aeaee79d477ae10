// Command-line front end for the pipeline.

#include <chrono>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "scanpriv/errors.hpp"
#include "scanpriv/pipeline.hpp"

namespace {

using namespace scanpriv;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> iterations;
  std::optional<int> steps;
  std::optional<std::string> out;
  std::optional<int> threads;
  std::vector<std::string> sets;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "Experiment config file");
  app->add_option("--seed", c.seed, "Root seed");
  app->add_option("--iterations", c.iterations, "Agent iterations");
  app->add_option("--steps", c.steps, "Training runs per iteration");
  app->add_option("--out", c.out, "Output directory");
  app->add_option("--threads", c.threads, "Worker threads");
  app->add_option("--set", c.sets, "Override a setting, section.key=value");
}

// Flags win over the file.
ExperimentConfig resolve(const Common& c) {
  ExperimentConfig cfg = c.config.empty() ? ExperimentConfig{} : load_config(c.config);
  for (const auto& s : c.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects section.key=value, got '" + s + "'");
    set_config_value(cfg, s.substr(0, eq), s.substr(eq + 1));
  }
  if (c.seed) cfg.seed = *c.seed;
  if (c.iterations) cfg.iterations = *c.iterations;
  if (c.steps) cfg.run.steps = *c.steps;
  if (c.out) cfg.out = *c.out;
  if (c.threads) cfg.threads = *c.threads;
  cfg.validate();
  return cfg;
}

Log stderr_log() {
  const auto t0 = std::chrono::steady_clock::now();
  return [t0](const std::string& msg) {
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::fprintf(stderr, "[%8.1f] %s\n", s, msg.c_str());
  };
}

void print_accuracies(const char* label, const std::vector<double>& acc) {
  std::printf("%-14s", label);
  for (double a : acc) std::printf(" %.4f", a);
  std::printf("\n");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Scanpath privacy experiments"};
  app.require_subcommand(1);

  Common common;
  auto* run = app.add_subcommand("run", "Full two-agent pipeline with checkpoints");
  auto* dp = app.add_subcommand("dp", "Differential privacy frontier");
  auto* gan = app.add_subcommand("gan", "Adversarially trained generator baseline");
  auto* encode = app.add_subcommand("encode", "Dump encoded images as PPM and PFM");
  auto* synth = app.add_subcommand("synth", "Write the synthetic dataset as gaze CSV");
  auto* transfer = app.add_subcommand("transfer", "Apply a trained manipulator to another dataset");
  for (auto* sub : {run, dp, gan, encode, synth, transfer}) add_common(sub, common);

  std::size_t limit = 16;
  encode->add_option("--limit", limit, "Records to encode (0 = all)");
  std::string from;
  transfer->add_option("--from", from, "Output directory of the source run")->required();

  std::string dir = "out";
  auto* report = app.add_subcommand("report", "Rebuild report tables from iteration records");
  auto* plot = app.add_subcommand("plot", "Render report tables as PPM charts");
  auto* verify = app.add_subcommand("verify", "Re-hash config and artifacts");
  for (auto* sub : {report, plot, verify}) sub->add_option("--out", dir, "Run directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (run->parsed()) {
      const auto r = cmd_run(resolve(common), stderr_log());
      print_accuracies("initial", r.initial_accuracy);
      for (const auto& it : r.iterations) {
        std::printf("iteration %d%s\n", it.iteration, it.resumed ? " (resumed)" : "");
        print_accuracies("  pre", it.pre_adaptation);
        print_accuracies("  post", it.post_adaptation);
      }
    } else if (dp->parsed()) {
      const auto r = cmd_dp(resolve(common), stderr_log());
      for (const auto* c : {&r.raw_choice, &r.image_choice}) {
        if (*c) {
          std::printf("%s epsilon %.2f stim %.4f sub %.4f\n", to_string((*c)->domain),
                      (*c)->epsilon, (*c)->stim_acc, (*c)->sub_acc);
        }
      }
    } else if (gan->parsed()) {
      const auto r = cmd_gan(resolve(common), stderr_log());
      print_accuracies("no adaptation", r.no_adaptation);
      print_accuracies("adaptation", r.adaptation);
    } else if (encode->parsed()) {
      cmd_encode(resolve(common), limit, stderr_log());
    } else if (synth->parsed()) {
      std::printf("%s\n", cmd_synth(resolve(common), stderr_log()).string().c_str());
    } else if (transfer->parsed()) {
      const auto r = cmd_transfer(resolve(common), from, stderr_log());
      print_accuracies("baseline", r.baseline);
      print_accuracies("manipulated", r.manipulated);
      print_accuracies("adapted", r.adapted);
    } else if (report->parsed()) {
      std::fputs(cmd_report(dir).c_str(), stdout);
    } else if (plot->parsed()) {
      for (const auto& p : cmd_plot(dir)) std::printf("%s\n", p.string().c_str());
    } else if (verify->parsed()) {
      const auto v = cmd_verify(dir);
      for (const auto& p : v.problems) std::printf("FAIL %s\n", p.c_str());
      std::printf("%zu files checked, %zu problems\n", v.checked, v.problems.size());
      return v.ok() ? 0 : 3;
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return static_cast<int>(e.category());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
