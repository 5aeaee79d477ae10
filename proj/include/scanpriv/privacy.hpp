#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "scanpriv/class_agent.hpp"
#include "scanpriv/codec.hpp"
#include "scanpriv/dataset.hpp"
#include "scanpriv/models.hpp"

namespace scanpriv {

// ------------------------------------------------------- differential privacy

// Linear resampling by point index to exactly `length` points.
Scanpath resample(const Scanpath& path, std::size_t length);

std::size_t median_point_count(std::span<const Scanpath> paths);

// Largest Manhattan distance between any two recordings after resampling all
// of them to `length` points (0 = the median point count).
double l1_sensitivity_raw(std::span<const Scanpath> paths, std::size_t length = 0);

using ChannelSensitivity = std::array<double, EncodedImage::kChannels>;

// Per channel, the largest absolute difference of one pixel value between
// any two images.
ChannelSensitivity l1_sensitivity_image(std::span<const EncodedImage> images);

// i.i.d. Laplace(0, lambda). Throws InvalidScale unless lambda > 0.
std::vector<double> laplace_noise(std::size_t n, double lambda, Rng& rng);
double laplace_cdf(double z, double lambda);

// Noise on x and y with lambda = sensitivity / epsilon; points leaving
// [0,1]^2 are dropped. nullopt when fewer than 3 points survive.
std::optional<Scanpath> dp_raw(const Scanpath& path, double sensitivity,
                               double epsilon, Rng& rng);

// Per-pixel noise with lambda_c = sensitivity_c / epsilon_pixel, clamped to
// [0,1]. A zero-sensitivity channel is left untouched.
EncodedImage dp_image(const EncodedImage& image, const ChannelSensitivity& sensitivity,
                      double epsilon_pixel, Rng& rng);

enum class DpDomain { kRaw, kImage };
const char* to_string(DpDomain d);

// Epsilon grid in hundredths so that grid values and the composed budget
// come out exact.
struct EpsilonSweep {
  DpDomain domain = DpDomain::kImage;
  long lo = 1;      // hundredths
  long hi = 1500;
  long step = 1;

  static EpsilonSweep full(DpDomain domain);
  std::vector<long> values() const;
  void validate() const;
};

// Budget accounted for one mechanism application: per-pixel epsilon times the
// pixel count for images, epsilon itself for raw data.
double effective_epsilon(DpDomain domain, long hundredths, int resolution);

// Most frequent label; ties go to the lowest label.
int majority_vote(std::span<const int> votes, int n_classes);

struct FrontierRow {
  long hundredths = 0;
  DpDomain domain = DpDomain::kImage;
  double epsilon = 0.0;  // effective
  double stim_acc = 0.0;
  double sub_acc = 0.0;
  double skipped_fraction = 0.0;
  bool skipped = false;  // every item skipped at this epsilon
};

struct DpEvalOptions {
  int repetitions = 100;
  EncodeOptions encode;
  double raw_sensitivity = 0.0;
  ChannelSensitivity image_sensitivity{};
  std::uint64_t seed = 0;
  int threads = 1;
};

// Accuracy of each classifier under the mechanism: every test item is noised
// `repetitions` times and classified by majority vote over the copies.
std::vector<FrontierRow> dp_evaluate(const EpsilonSweep& sweep,
                                     std::span<const LabeledRecord> test,
                                     const ClassifierSet& classifiers,
                                     const DpEvalOptions& options);

// Row maximizing stim_acc - sub_acc among rows with subject accuracy within
// `tolerance` of chance. Throws NoFeasibleEpsilon.
const FrontierRow& select_optimal_epsilon(std::span<const FrontierRow> rows,
                                          double chance_level, double tolerance = 0.03);

void write_frontier_csv(std::ostream& out, std::span<const FrontierRow> rows);

// ------------------------------------------------------------------ GAN

// D(G(I)) = 0.5 * p_keep + 0.5 * (1 - p_hide), clamped to [0, 1].
double gan_discriminator(double p_keep, double p_hide);
// log(1 - D) with D capped at 1 - 1e-6.
double gan_generator_loss(double d);

struct GanObjective {
  double loss = 0.0;               // batch mean of log(1 - D)
  std::vector<double> d;           // D per image
  nn::Tensor<float> grad;          // d loss / d generated
};

// Adversarial generator term on a batch of generated images; `rng` drives
// the classifiers' dropout.
GanObjective gan_adversarial_objective(const ClassifierSet& classifiers,
                                       const std::vector<int>& keep,
                                       const std::vector<int>& hide,
                                       const nn::Tensor<float>& generated,
                                       std::span<const Sample* const> labels, Rng& rng);

struct GanOptions {
  int pretrain_epochs = 100;
  int adversarial_epochs = 100;
  double recon_weight = 1.0;
  TrainingSchedule generator = TrainingSchedule::autoencoder();
  TrainingSchedule discriminator = TrainingSchedule::classifier();
  int batch_size = 40;
};

struct GanEpoch {
  int epoch = 0;
  bool adversarial = false;
  double generator_loss = 0.0;
  double recon_loss = 0.0;
  double discriminator_loss = 0.0;
  double mean_d = 0.0;
};

struct GanResult {
  AutoencoderModel generator;
  ClassifierSet discriminators;
  std::vector<GanEpoch> epochs;
};

// Generator = autoencoder, discriminators = the reward classifiers, each
// seeing real and generated images with their true labels.
GanResult gan_train(const AutoencoderModel& autoencoder, const ClassifierSet& classifiers,
                    const std::vector<int>& keep, const std::vector<int>& hide,
                    std::span<const Sample> train, const GanOptions& options, Rng& rng);

}  // namespace scanpriv
