#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "scanpriv/image.hpp"
#include "scanpriv/nn/network.hpp"
#include "scanpriv/nn/sgd.hpp"
#include "scanpriv/rng.hpp"

namespace scanpriv {

// ----------------------------------------------------------- architectures

struct LayerSpec {
  nn::LayerKind kind;
  int units = 0;   // output channels or output features
  int kernel = 0;
  int stride = 1;
  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct ArchitectureSpec {
  std::string name;
  std::vector<LayerSpec> layers;
};

// Spatial size of the encoder output is resolution / 16 (4 at 64 px).
// Resolutions must be multiples of 16.
void check_resolution(int resolution);
int bottleneck_side(int resolution);
constexpr int kBottleneckChannels = 256;
std::size_t bottleneck_size(int resolution);

// conv 32x7 / 64x7 / 128x5 (each ReLU + 2x2 maxpool), conv 256x5 stride 2,
// ReLU. The stride-2 final conv brings 8x8 to the 4x4x256 bottleneck.
ArchitectureSpec encoder_spec();
// tconv 128x5, 64x5, 32x7, 3x7, each doubling the spatial size, ReLU between.
ArchitectureSpec decoder_spec();
// Four conv blocks (ReLU + maxpool), dropout 0.5, fc 512, ReLU, fc n_classes.
ArchitectureSpec classifier_spec(int n_classes);
// Three conv blocks (ReLU + maxpool) and one fc layer with one output per
// bottleneck value.
ArchitectureSpec dql_spec(int resolution);

// Builds a float network for a (channels, side, side) input. Output layers
// (fc without a following ReLU) use a unit init gain.
nn::Network<float> build_network(const ArchitectureSpec& spec, int in_channels,
                                 int side);

// -------------------------------------------------------------- schedules

enum class LossKind { kL2, kSoftmaxLog };

struct TrainingSchedule {
  double initial_lr = 1e-2;
  int decay_every = 200;
  double decay_factor = 0.1;
  double stop_lr = 1e-7;
  double weight_decay = 5e-4;
  double momentum = 0.9;
  int batch_size = 40;
  LossKind loss = LossKind::kL2;
  bool fixed_lr = false;
  std::optional<int> max_epochs;

  static TrainingSchedule autoencoder();
  static TrainingSchedule classifier();
  // Classifier retraining schedule used for transfer to other datasets.
  static TrainingSchedule transfer_classifier();
  static TrainingSchedule dql();

  void validate() const;
  double lr_at(long epoch) const;
  // First epoch whose rate is below stop_lr (bounded by max_epochs).
  long planned_epochs() const;
  nn::SgdHyper hyper(long epoch) const {
    return {lr_at(epoch), weight_decay, momentum};
  }
};

struct EpochStats {
  long epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  double train_accuracy = -1.0;       // classifiers only
  double validation_accuracy = -1.0;  // when a validation set is given
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

// -------------------------------------------------------------- autoencoder

// Flattened (256, s, s) encoder activations, channel-major.
struct Bottleneck {
  std::vector<float> values;
  friend bool operator==(const Bottleneck&, const Bottleneck&) = default;
};

class AutoencoderModel {
 public:
  AutoencoderModel(int resolution, Rng& rng);

  int resolution() const { return resolution_; }
  std::size_t bottleneck_size() const { return scanpriv::bottleneck_size(resolution_); }
  nn::Network<float>& encoder() { return encoder_; }
  const nn::Network<float>& encoder() const { return encoder_; }
  nn::Network<float>& decoder() { return decoder_; }
  const nn::Network<float>& decoder() const { return decoder_; }
  std::uint64_t parameter_hash() const;

  long epochs_trained = 0;
  double training_loss = 0.0;  // last epoch mean, per pixel

 private:
  int resolution_;
  nn::Network<float> encoder_;
  nn::Network<float> decoder_;
};

struct AutoencoderResult {
  AutoencoderModel model;
  TrainReport report;
};

// Progress hook: called after every epoch.
using EpochCallback = std::function<void(const EpochStats&)>;

AutoencoderResult train_autoencoder(std::span<const EncodedImage> images,
                                    const TrainingSchedule& schedule, Rng& rng,
                                    const EpochCallback& on_epoch = {});

// Continues training an existing model (used by GAN pretraining).
TrainReport fit_autoencoder(AutoencoderModel& model,
                            std::span<const EncodedImage> images,
                            const TrainingSchedule& schedule, Rng& rng,
                            const EpochCallback& on_epoch = {});

Bottleneck encode(const AutoencoderModel& model, const EncodedImage& image);
// Output clamped to [0, 1].
EncodedImage decode(const AutoencoderModel& model, const Bottleneck& b);
std::vector<Bottleneck> encode_batch(const AutoencoderModel& model,
                                     std::span<const EncodedImage> images);
std::vector<EncodedImage> decode_batch(const AutoencoderModel& model,
                                       std::span<const Bottleneck> codes);
std::vector<EncodedImage> reconstruct_batch(const AutoencoderModel& model,
                                            std::span<const EncodedImage> images);
double reconstruction_mse(const AutoencoderModel& model,
                          std::span<const EncodedImage> images);

// -------------------------------------------------------------- classifier

struct LabeledImage {
  EncodedImage image;
  int label = 0;
};

class ClassifierModel {
 public:
  ClassifierModel(int resolution, int n_classes, Rng& rng);

  int resolution() const { return resolution_; }
  int n_classes() const { return n_classes_; }
  nn::Network<float>& network() { return net_; }
  const nn::Network<float>& network() const { return net_; }

  long epochs_trained = 0;

 private:
  int resolution_;
  int n_classes_;
  nn::Network<float> net_;
};

struct ClassifierTrainOptions {
  // Optional per-epoch replacement for training item i (augmentation);
  // returning nullopt keeps the stored image.
  std::function<std::optional<EncodedImage>(std::size_t, Rng&)> resample;
  std::span<const LabeledImage> validation;
  int validate_every = 1;
  EpochCallback on_epoch;
};

struct ClassifierResult {
  ClassifierModel model;
  TrainReport report;
};

// Fresh random initialization on every call. Throws MissingClass when a
// class in [0, n_classes) has no training example.
ClassifierResult train_classifier(std::span<const LabeledImage> data,
                                  int n_classes,
                                  const TrainingSchedule& schedule, Rng& rng,
                                  const ClassifierTrainOptions& options = {});

// Continues training an existing classifier.
TrainReport fit_classifier(ClassifierModel& model,
                           std::span<const LabeledImage> data,
                           const TrainingSchedule& schedule, Rng& rng,
                           const ClassifierTrainOptions& options = {});

// Softmax probabilities (eval mode).
std::vector<double> classify(const ClassifierModel& model,
                             const EncodedImage& image);
// (N, K) probabilities.
nn::Tensor<float> classify_batch(const ClassifierModel& model,
                                 std::span<const EncodedImage> images);
std::vector<int> predict_batch(const ClassifierModel& model,
                               std::span<const EncodedImage> images);
double accuracy(const ClassifierModel& model,
                std::span<const LabeledImage> data);

// --------------------------------------------------------------------- DQL

class DqlModel {
 public:
  DqlModel(int resolution, Rng& rng);

  int resolution() const { return resolution_; }
  std::size_t action_count() const { return scanpriv::bottleneck_size(resolution_); }
  nn::Network<float>& network() { return net_; }
  const nn::Network<float>& network() const { return net_; }

 private:
  int resolution_;
  nn::Network<float> net_;
};

std::vector<float> q_forward(const DqlModel& model, const EncodedImage& image);
// (N, actions)
nn::Tensor<float> q_forward_batch(const DqlModel& model,
                                  std::span<const EncodedImage> images);

// ------------------------------------------------------------------ helpers

nn::Tensor<float> to_batch(std::span<const EncodedImage> images);
nn::Tensor<float> to_batch(std::span<const EncodedImage* const> images);
EncodedImage image_from_batch(const nn::Tensor<float>& batch, std::size_t n,
                              bool clamp);

}  // namespace scanpriv
