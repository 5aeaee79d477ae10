#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "scanpriv/codec.hpp"
#include "scanpriv/dataset.hpp"
#include "scanpriv/manip_agent.hpp"
#include "scanpriv/models.hpp"
#include "scanpriv/privacy.hpp"

namespace scanpriv {

enum class ClassifierInput { kReconstruction, kRaw };

struct DataConfig {
  std::string source = "synth";  // "synth" or a gaze CSV path
  CsvSchema schema;
  int subjects = 8;
  int stimuli = 4;
  int trials = 20;
  double signature_strength = 1.0;
  SynthOptions synth;
};

struct AugmentConfig {
  bool enabled = true;
  bool during_adaptation = true;
  AugmentParams params;
};

struct ReplayConfig {
  std::size_t capacity = ReplayMemory::kDefaultCapacity;
  InitMemoryOptions init;
};

struct DpConfig {
  EpsilonSweep raw = EpsilonSweep::full(DpDomain::kRaw);
  EpsilonSweep image = EpsilonSweep::full(DpDomain::kImage);
  int repetitions = 100;
  double chance_tolerance = 0.03;
};

struct GanConfig {
  bool enabled = true;
  int pretrain_epochs = 100;
  int adversarial_epochs = 100;
  double recon_weight = 1.0;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  int threads = 1;
  std::filesystem::path out = "out";

  DataConfig data;
  EncodeOptions encode;
  AugmentConfig augment;
  TrainingSchedule autoencoder = TrainingSchedule::autoencoder();
  TrainingSchedule classifier = TrainingSchedule::classifier();
  TrainingSchedule transfer_classifier = TrainingSchedule::transfer_classifier();
  ClassifierInput classifier_input = ClassifierInput::kReconstruction;
  DqlTrainOptions dql;
  ReplayConfig replay;
  int iterations = 20;
  IterationOptions run;
  std::vector<std::string> keep{"stimulus"};
  std::vector<std::string> hide{"subject"};
  DpConfig dp;
  GanConfig gan;
  double change_tau = 1.0 / 255.0;

  // Throws ConfigError on out-of-range values.
  void validate() const;

  // Every setting except the output directory as config text, in a fixed
  // order; parse_config(canonical()) round-trips. Feeds the config hash.
  std::string canonical() const;
  std::uint64_t hash() const;
  // Hash over the named sections only (stage checkpoint keys).
  std::uint64_t section_hash(const std::vector<std::string>& sections) const;
};

// INI-style text: `[section]` headers, `key = value`, `#` or `;` comments.
// Strings may be quoted; lists are comma separated. Unknown keys throw.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

// Sets one `section.key` from its textual value (flag overrides).
void set_config_value(ExperimentConfig& cfg, const std::string& dotted_key,
                      const std::string& value);

}  // namespace scanpriv
