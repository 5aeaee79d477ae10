#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "scanpriv/analysis.hpp"
#include "scanpriv/class_agent.hpp"
#include "scanpriv/config.hpp"
#include "scanpriv/manip_agent.hpp"
#include "scanpriv/privacy.hpp"

namespace scanpriv {

using Log = std::function<void(const std::string&)>;

// ------------------------------------------------------------------ data

struct PreparedData {
  Dataset dataset;
  DatasetSplit split;
  std::vector<Sample> train;  // encoded, train provenance
  std::vector<Sample> test;
};

PreparedData prepare_data(const ExperimentConfig& cfg);

// Classifier tasks in reward order: keep tasks first, then hide tasks.
std::vector<TaskSpec> reward_tasks(const ExperimentConfig& cfg, const LabelSet& labels);
RewardSpec reward_spec(const ExperimentConfig& cfg);

// Copies of `samples` with every image replaced by its reconstruction.
std::vector<Sample> reconstructed(const AutoencoderModel& ae, std::span<const Sample> samples);
std::vector<Sample> with_images(std::span<const Sample> samples,
                                std::vector<EncodedImage> images);

// ------------------------------------------------------------ artifacts

// First line of every CSV report.
std::string artifact_header(std::uint64_t config_hash, std::uint64_t seed);

// Tracks completed stages in <out>/manifest.json. A stage is complete when
// its key matches and every file it produced still has the recorded hash.
class Manifest {
 public:
  Manifest(std::filesystem::path out, std::uint64_t config_hash, std::uint64_t seed);

  const std::filesystem::path& out() const { return out_; }
  std::uint64_t config_hash() const { return config_hash_; }
  std::uint64_t seed() const { return seed_; }

  bool complete(const std::string& stage, std::uint64_t key) const;
  // Records the stage with the hashes of `files` (relative to out).
  void mark(const std::string& stage, std::uint64_t key,
            const std::vector<std::filesystem::path>& files);
  void record_file(const std::filesystem::path& relative);
  void save() const;

  std::filesystem::path path(const std::filesystem::path& relative) const {
    return out_ / relative;
  }

 private:
  std::filesystem::path out_;
  std::uint64_t config_hash_;
  std::uint64_t seed_;
  struct Stage {
    std::uint64_t key = 0;
    std::vector<std::pair<std::string, std::uint64_t>> files;
  };
  std::vector<std::pair<std::string, Stage>> stages_;
  std::vector<std::pair<std::string, std::uint64_t>> reports_;
};

std::uint64_t file_hash(const std::filesystem::path& p);

// -------------------------------------------------------------- commands

struct IterationSummary {
  int iteration = 0;
  long runs = 0;
  double mean_reward = 0.0;
  double mean_mask_fraction = 0.0;
  std::vector<double> pre_adaptation;   // per classifier (reward order)
  std::vector<double> post_adaptation;
  ChannelImportance importance;
  std::size_t classifier_memory = 0;
  std::size_t replay_entries = 0;
  bool resumed = false;
};

struct RunResult {
  std::vector<std::string> classifier_names;
  std::vector<double> initial_accuracy;  // pretrained classifiers, unmanipulated test
  std::vector<IterationSummary> iterations;
  std::vector<std::string> skipped_stages;  // resumed from checkpoints
  std::uint64_t autoencoder_hash = 0;
  std::uint64_t dql_hash = 0;
};

RunResult cmd_run(const ExperimentConfig& cfg, const Log& log = {});

struct DpResult {
  std::vector<FrontierRow> raw;
  std::vector<FrontierRow> image;
  std::optional<FrontierRow> raw_choice;
  std::optional<FrontierRow> image_choice;
  double raw_sensitivity = 0.0;
  ChannelSensitivity image_sensitivity{};
};

// Frontiers over the configured sweeps for classifiers trained on clean
// encodings. Throws NoFeasibleEpsilon (after writing the frontier) when a
// domain has no row within the chance band.
DpResult cmd_dp(const ExperimentConfig& cfg, const Log& log = {});

struct GanSummary {
  std::vector<double> no_adaptation;  // pretrained classifiers on generated test images
  std::vector<double> adaptation;     // discriminators on generated test images
  std::vector<GanEpoch> epochs;
};

GanSummary cmd_gan(const ExperimentConfig& cfg, const Log& log = {});

struct TransferResult {
  std::vector<double> baseline;      // classifiers on reconstructions
  std::vector<double> manipulated;   // same classifiers, manipulated test images
  std::vector<double> adapted;       // retrained on plain + manipulated
  std::uint64_t autoencoder_hash_before = 0;
  std::uint64_t autoencoder_hash_after = 0;
  std::uint64_t dql_hash_before = 0;
  std::uint64_t dql_hash_after = 0;
};

// Applies the autoencoder and manipulator trained in `source_run` to the
// dataset described by `cfg` without updating either; only classifiers are
// trained.
TransferResult cmd_transfer(const ExperimentConfig& cfg,
                            const std::filesystem::path& source_run, const Log& log = {});

// Writes the dataset described by `cfg` as a gaze CSV; returns its path.
std::filesystem::path cmd_synth(const ExperimentConfig& cfg, const Log& log = {});

// Encodes up to `limit` records (0 = all) as 8-bit PPM and float PFM files.
std::size_t cmd_encode(const ExperimentConfig& cfg, std::size_t limit, const Log& log = {});

// Rebuilds the accuracy and channel tables from the iteration reports.
std::string cmd_report(const std::filesystem::path& out);

// Renders the accuracy and channel tables as PPM charts.
std::vector<std::filesystem::path> cmd_plot(const std::filesystem::path& out);

struct VerifyResult {
  std::size_t checked = 0;
  std::vector<std::string> problems;
  bool ok() const { return problems.empty(); }
};

// Re-hashes config.ini and every recorded artifact.
VerifyResult cmd_verify(const std::filesystem::path& out);

// Image dumps.
void write_ppm(const std::filesystem::path& p, const EncodedImage& image);
void write_pfm(const std::filesystem::path& p, const EncodedImage& image);

}  // namespace scanpriv
