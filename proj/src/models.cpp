#include "scanpriv/models.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "scanpriv/errors.hpp"
#include "scanpriv/nn/loss.hpp"

namespace scanpriv {

using nn::LayerKind;
using Net = nn::Network<float>;
using TensorF = nn::Tensor<float>;

namespace {

constexpr std::size_t kEvalChunk = 32;

LayerSpec conv(int out, int k, int stride = 1) {
  return {LayerKind::kConv, out, k, stride};
}
LayerSpec tconv(int out, int k) { return {LayerKind::kTransposedConv, out, k, 2}; }
LayerSpec fc(int out) { return {LayerKind::kLinear, out, 0, 1}; }
LayerSpec relu() { return {LayerKind::kRelu, 0, 0, 1}; }
LayerSpec pool() { return {LayerKind::kMaxPool, 0, 0, 2}; }
LayerSpec dropout() { return {LayerKind::kDropout, 0, 0, 1}; }

void check_image(const EncodedImage& img, int resolution) {
  if (img.resolution() != resolution) {
    throw ShapeError("expected a " + std::to_string(resolution) + "x" +
                     std::to_string(resolution) + " image, got resolution " +
                     std::to_string(img.resolution()));
  }
}

void check_finite_loss(double loss, long epoch) {
  if (!std::isfinite(loss)) throw TrainingDiverged(epoch, "loss is not finite");
}

bool lr_below(double lr, double stop) { return lr < stop * (1.0 - 1e-9); }

}  // namespace

void check_resolution(int resolution) {
  if (resolution < 16 || resolution % 16 != 0) {
    throw ConfigError("resolution must be a positive multiple of 16, got " +
                      std::to_string(resolution));
  }
}

int bottleneck_side(int resolution) {
  check_resolution(resolution);
  return resolution / 16;
}

std::size_t bottleneck_size(int resolution) {
  const auto s = static_cast<std::size_t>(bottleneck_side(resolution));
  return s * s * kBottleneckChannels;
}

ArchitectureSpec encoder_spec() {
  return {"encoder",
          {conv(32, 7), relu(), pool(), conv(64, 7), relu(), pool(),
           conv(128, 5), relu(), pool(), conv(kBottleneckChannels, 5, 2),
           relu()}};
}

ArchitectureSpec decoder_spec() {
  return {"decoder",
          {tconv(128, 5), relu(), tconv(64, 5), relu(), tconv(32, 7), relu(),
           tconv(EncodedImage::kChannels, 7)}};
}

ArchitectureSpec classifier_spec(int n_classes) {
  if (n_classes < 2) throw ConfigError("a classifier needs at least 2 classes");
  return {"classifier",
          {conv(32, 7), relu(), pool(), conv(64, 7), relu(), pool(),
           conv(128, 5), relu(), pool(), conv(256, 5), relu(), pool(),
           dropout(), fc(512), relu(), fc(n_classes)}};
}

ArchitectureSpec dql_spec(int resolution) {
  return {"dql",
          {conv(32, 7), relu(), pool(), conv(64, 7), relu(), pool(),
           conv(128, 5), relu(), pool(),
           fc(static_cast<int>(bottleneck_size(resolution)))}};
}

Net build_network(const ArchitectureSpec& spec, int in_channels, int side) {
  Net net(nn::Shape{in_channels, side, side});
  nn::Shape shape{1, in_channels, side, side};
  int conv_i = 0, tconv_i = 0, fc_i = 0, relu_i = 0, pool_i = 0, drop_i = 0;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    std::unique_ptr<nn::Layer<float>> layer;
    std::string name;
    switch (l.kind) {
      case LayerKind::kConv:
        layer = std::make_unique<nn::Conv2d<float>>(shape[1], l.units,
                                                    l.kernel, l.stride);
        name = "conv" + std::to_string(++conv_i);
        break;
      case LayerKind::kTransposedConv:
        layer = std::make_unique<nn::ConvTranspose2d<float>>(
            shape[1], l.units, l.kernel, l.stride);
        name = "tconv" + std::to_string(++tconv_i);
        break;
      case LayerKind::kLinear: {
        const bool last = i + 1 == spec.layers.size() ||
                          spec.layers[i + 1].kind != LayerKind::kRelu;
        layer = std::make_unique<nn::Linear<float>>(
            static_cast<int>(nn::shape_size(shape)), l.units,
            last ? 1.0 : 1.4142135623730951);
        name = "fc" + std::to_string(++fc_i);
        break;
      }
      case LayerKind::kRelu:
        layer = std::make_unique<nn::Relu<float>>();
        name = "relu" + std::to_string(++relu_i);
        break;
      case LayerKind::kMaxPool:
        layer = std::make_unique<nn::MaxPool2<float>>();
        name = "pool" + std::to_string(++pool_i);
        break;
      case LayerKind::kDropout:
        layer = std::make_unique<nn::Dropout<float>>(0.5);
        name = "dropout" + std::to_string(++drop_i);
        break;
    }
    shape = layer->output_shape(shape);
    net.add(std::move(name), std::move(layer));
  }
  return net;
}

// ---------------------------------------------------------------- schedules

TrainingSchedule TrainingSchedule::autoencoder() {
  return {1e-2, 200, 0.1, 1e-7, 5e-4, 0.9, 40, LossKind::kL2, false, {}};
}

TrainingSchedule TrainingSchedule::classifier() {
  return {1e-4, 500, 0.1, 1e-7, 5e-4, 0.9, 50, LossKind::kSoftmaxLog, false, {}};
}

TrainingSchedule TrainingSchedule::transfer_classifier() {
  return {1e-2, 100, 0.1, 1e-7, 5e-4, 0.9, 50, LossKind::kSoftmaxLog, false, {}};
}

TrainingSchedule TrainingSchedule::dql() {
  return {1e-4, 0, 1.0, 0.0, 1e-5, 0.9, 100, LossKind::kL2, true, 10};
}

void TrainingSchedule::validate() const {
  if (!(initial_lr > 0.0) || !std::isfinite(initial_lr)) {
    throw ConfigError("learning rate must be positive");
  }
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
  if (weight_decay < 0.0 || momentum < 0.0 || momentum >= 1.0) {
    throw ConfigError("weight decay must be >= 0 and momentum in [0, 1)");
  }
  if (max_epochs && *max_epochs < 0) throw ConfigError("max_epochs < 0");
  if (fixed_lr) {
    if (!max_epochs) throw ConfigError("a fixed-rate schedule needs max_epochs");
    return;
  }
  if (!(decay_factor > 0.0 && decay_factor < 1.0)) {
    throw ConfigError("decay factor must lie in (0, 1)");
  }
  if (decay_every < 1) throw ConfigError("decay interval must be >= 1 epoch");
  if (!(stop_lr > 0.0 && stop_lr < initial_lr)) {
    throw ConfigError("stop rate must lie in (0, initial rate)");
  }
}

double TrainingSchedule::lr_at(long epoch) const {
  if (fixed_lr) return initial_lr;
  return initial_lr * std::pow(decay_factor, static_cast<double>(epoch / decay_every));
}

long TrainingSchedule::planned_epochs() const {
  validate();
  if (fixed_lr) return *max_epochs;
  long e = 0;
  // Rate only changes at multiples of decay_every.
  while (!lr_below(lr_at(e), stop_lr)) e += decay_every;
  return max_epochs ? std::min<long>(e, *max_epochs) : e;
}

// ------------------------------------------------------------------ helpers

TensorF to_batch(std::span<const EncodedImage* const> images) {
  if (images.empty()) throw ShapeError("empty batch");
  const int r = images.front()->resolution();
  TensorF out(nn::Shape{static_cast<int>(images.size()), EncodedImage::kChannels, r, r});
  const std::size_t per = out.stride0();
  for (std::size_t i = 0; i < images.size(); ++i) {
    check_image(*images[i], r);
    std::copy(images[i]->values().begin(), images[i]->values().end(),
              out.data() + i * per);
  }
  return out;
}

TensorF to_batch(std::span<const EncodedImage> images) {
  std::vector<const EncodedImage*> ptrs;
  ptrs.reserve(images.size());
  for (const auto& img : images) ptrs.push_back(&img);
  return to_batch(std::span<const EncodedImage* const>(ptrs));
}

EncodedImage image_from_batch(const TensorF& batch, std::size_t n, bool clamp) {
  const int r = batch.dim(2);
  const std::size_t per = batch.stride0();
  std::vector<float> v(batch.data() + n * per, batch.data() + (n + 1) * per);
  if (clamp) {
    for (float& x : v) x = std::clamp(x, 0.0f, 1.0f);
  }
  return EncodedImage(r, std::move(v));
}

// -------------------------------------------------------------- autoencoder

AutoencoderModel::AutoencoderModel(int resolution, Rng& rng)
    : resolution_(resolution),
      encoder_(build_network(encoder_spec(), EncodedImage::kChannels, resolution)),
      decoder_(build_network(decoder_spec(), kBottleneckChannels,
                             bottleneck_side(resolution))) {
  encoder_.init(rng);
  decoder_.init(rng);
}

std::uint64_t AutoencoderModel::parameter_hash() const {
  Hasher h;
  h.value(encoder_.parameter_hash());
  h.value(decoder_.parameter_hash());
  return h.digest();
}

TrainReport fit_autoencoder(AutoencoderModel& model,
                            std::span<const EncodedImage> images,
                            const TrainingSchedule& schedule, Rng& rng,
                            const EpochCallback& on_epoch) {
  schedule.validate();
  if (schedule.loss != LossKind::kL2) {
    throw ConfigError("the autoencoder is trained with the L2 loss");
  }
  if (images.size() < static_cast<std::size_t>(schedule.batch_size)) {
    throw InsufficientData("autoencoder needs at least " +
                           std::to_string(schedule.batch_size) + " images, got " +
                           std::to_string(images.size()));
  }
  for (const auto& img : images) check_image(img, model.resolution());

  TrainReport report;
  report.initial_loss = reconstruction_mse(model, images);
  nn::SgdOptimizer<float> opt_enc(model.encoder());
  nn::SgdOptimizer<float> opt_dec(model.decoder());
  auto g_enc = model.encoder().make_gradients();
  auto g_dec = model.decoder().make_gradients();
  nn::Tape<float> t_enc, t_dec;

  const long epochs = schedule.planned_epochs();
  const std::size_t bs = static_cast<std::size_t>(schedule.batch_size);
  for (long e = 0; e < epochs; ++e) {
    const auto order = rng.permutation(images.size());
    const nn::SgdHyper h = schedule.hyper(e);
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t b = 0; b < order.size(); b += bs) {
      const std::size_t n = std::min(bs, order.size() - b);
      std::vector<const EncodedImage*> batch(n);
      for (std::size_t i = 0; i < n; ++i) batch[i] = &images[order[b + i]];
      const TensorF x = to_batch(std::span<const EncodedImage* const>(batch));
      for (auto& g : g_enc) g.fill(0.0f);
      for (auto& g : g_dec) g.fill(0.0f);
      const TensorF z = model.encoder().forward(x, t_enc, &rng);
      const TensorF y = model.decoder().forward(z, t_dec, &rng);
      // Per-element mean: the per-sample sum diverges at the schedule's 1e-2.
      auto loss = nn::l2_loss(y, x, nn::L2Reduction::kMean);
      check_finite_loss(loss.value, e);
      const TensorF dz = model.decoder().backward(loss.grad, t_dec, g_dec, true);
      model.encoder().backward(dz, t_enc, g_enc, false);
      opt_dec.step(model.decoder(), g_dec, h, e);
      opt_enc.step(model.encoder(), g_enc, h, e);
      loss_sum += loss.value * 2.0 * static_cast<double>(n);
      seen += n;
    }
    EpochStats stats{model.epochs_trained, h.lr, loss_sum / static_cast<double>(seen)};
    model.training_loss = stats.loss;
    ++model.epochs_trained;
    report.epochs.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  report.final_loss = reconstruction_mse(model, images);
  return report;
}

AutoencoderResult train_autoencoder(std::span<const EncodedImage> images,
                                    const TrainingSchedule& schedule, Rng& rng,
                                    const EpochCallback& on_epoch) {
  if (images.empty()) throw InsufficientData("no training images");
  AutoencoderModel model(images.front().resolution(), rng);
  TrainReport report = fit_autoencoder(model, images, schedule, rng, on_epoch);
  return {std::move(model), std::move(report)};
}

std::vector<Bottleneck> encode_batch(const AutoencoderModel& model,
                                     std::span<const EncodedImage> images) {
  std::vector<Bottleneck> out;
  out.reserve(images.size());
  for (std::size_t b = 0; b < images.size(); b += kEvalChunk) {
    const auto chunk = images.subspan(b, std::min(kEvalChunk, images.size() - b));
    for (const auto& img : chunk) check_image(img, model.resolution());
    const TensorF z = model.encoder().infer(to_batch(chunk));
    const std::size_t per = z.stride0();
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      out.push_back({std::vector<float>(z.data() + i * per, z.data() + (i + 1) * per)});
    }
  }
  return out;
}

Bottleneck encode(const AutoencoderModel& model, const EncodedImage& image) {
  return std::move(encode_batch(model, std::span<const EncodedImage>(&image, 1)).front());
}

std::vector<EncodedImage> decode_batch(const AutoencoderModel& model,
                                       std::span<const Bottleneck> codes) {
  const int s = bottleneck_side(model.resolution());
  const std::size_t per = model.bottleneck_size();
  std::vector<EncodedImage> out;
  out.reserve(codes.size());
  for (std::size_t b = 0; b < codes.size(); b += kEvalChunk) {
    const std::size_t n = std::min(kEvalChunk, codes.size() - b);
    TensorF z(nn::Shape{static_cast<int>(n), kBottleneckChannels, s, s});
    for (std::size_t i = 0; i < n; ++i) {
      const auto& v = codes[b + i].values;
      if (v.size() != per) {
        throw ShapeError("bottleneck has " + std::to_string(v.size()) +
                         " values, expected " + std::to_string(per));
      }
      std::copy(v.begin(), v.end(), z.data() + i * per);
    }
    const TensorF y = model.decoder().infer(z);
    for (std::size_t i = 0; i < n; ++i) out.push_back(image_from_batch(y, i, true));
  }
  return out;
}

EncodedImage decode(const AutoencoderModel& model, const Bottleneck& b) {
  return std::move(decode_batch(model, std::span<const Bottleneck>(&b, 1)).front());
}

std::vector<EncodedImage> reconstruct_batch(const AutoencoderModel& model,
                                            std::span<const EncodedImage> images) {
  const auto codes = encode_batch(model, images);
  return decode_batch(model, codes);
}

double reconstruction_mse(const AutoencoderModel& model,
                          std::span<const EncodedImage> images) {
  if (images.empty()) return 0.0;
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t b = 0; b < images.size(); b += kEvalChunk) {
    const auto chunk = images.subspan(b, std::min(kEvalChunk, images.size() - b));
    const auto rec = reconstruct_batch(model, chunk);
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      const auto a = chunk[i].values();
      const auto r = rec[i].values();
      for (std::size_t k = 0; k < a.size(); ++k) {
        const double d = static_cast<double>(a[k]) - r[k];
        sum += d * d;
      }
      count += a.size();
    }
  }
  return sum / static_cast<double>(count);
}

// -------------------------------------------------------------- classifier

ClassifierModel::ClassifierModel(int resolution, int n_classes, Rng& rng)
    : resolution_(resolution),
      n_classes_(n_classes),
      net_(build_network(classifier_spec(n_classes), EncodedImage::kChannels,
                         resolution)) {
  check_resolution(resolution);
  net_.init(rng);
}

TrainReport fit_classifier(ClassifierModel& model,
                           std::span<const LabeledImage> data,
                           const TrainingSchedule& schedule, Rng& rng,
                           const ClassifierTrainOptions& options) {
  schedule.validate();
  if (schedule.loss != LossKind::kSoftmaxLog) {
    throw ConfigError("classifiers are trained with the softmax log loss");
  }
  if (data.empty()) throw InsufficientData("no training records");
  std::vector<int> per_class(model.n_classes(), 0);
  for (const auto& d : data) {
    check_image(d.image, model.resolution());
    if (d.label < 0 || d.label >= model.n_classes()) {
      throw ShapeError("label " + std::to_string(d.label) + " outside [0, " +
                       std::to_string(model.n_classes()) + ")");
    }
    ++per_class[d.label];
  }
  for (int c = 0; c < model.n_classes(); ++c) {
    if (per_class[c] == 0) {
      throw MissingClass("class " + std::to_string(c) + " has no training records");
    }
  }

  TrainReport report;
  nn::SgdOptimizer<float> opt(model.network());
  auto grads = model.network().make_gradients();
  nn::Tape<float> tape;
  const long epochs = schedule.planned_epochs();
  const std::size_t bs = static_cast<std::size_t>(schedule.batch_size);
  std::vector<std::optional<EncodedImage>> fresh(data.size());

  for (long e = 0; e < epochs; ++e) {
    if (options.resample) {
      for (std::size_t i = 0; i < data.size(); ++i) fresh[i] = options.resample(i, rng);
    }
    const auto order = rng.permutation(data.size());
    const nn::SgdHyper h = schedule.hyper(e);
    double loss_sum = 0.0;
    std::size_t seen = 0, correct = 0;
    for (std::size_t b = 0; b < order.size(); b += bs) {
      const std::size_t n = std::min(bs, order.size() - b);
      std::vector<const EncodedImage*> batch(n);
      std::vector<int> labels(n);
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t idx = order[b + i];
        batch[i] = fresh[idx] ? &*fresh[idx] : &data[idx].image;
        labels[i] = data[idx].label;
      }
      for (auto& g : grads) g.fill(0.0f);
      const TensorF logits = model.network().forward(
          to_batch(std::span<const EncodedImage* const>(batch)), tape, &rng);
      auto loss = nn::softmax_log_loss(logits, std::span<const int>(labels));
      check_finite_loss(loss.value, e);
      model.network().backward(loss.grad, tape, grads, false);
      opt.step(model.network(), grads, h, e);
      const int k = logits.dim(1);
      for (std::size_t i = 0; i < n; ++i) {
        const float* row = logits.data() + i * k;
        if (std::max_element(row, row + k) - row == labels[i]) ++correct;
      }
      loss_sum += loss.value * static_cast<double>(n);
      seen += n;
    }
    EpochStats stats{model.epochs_trained, h.lr, loss_sum / static_cast<double>(seen),
                     static_cast<double>(correct) / static_cast<double>(seen)};
    if (!options.validation.empty() && options.validate_every > 0 &&
        ((e + 1) % options.validate_every == 0 || e + 1 == epochs)) {
      stats.validation_accuracy = accuracy(model, options.validation);
    }
    ++model.epochs_trained;
    report.epochs.push_back(stats);
    if (options.on_epoch) options.on_epoch(stats);
  }
  if (!report.epochs.empty()) {
    report.initial_loss = report.epochs.front().loss;
    report.final_loss = report.epochs.back().loss;
  }
  return report;
}

ClassifierResult train_classifier(std::span<const LabeledImage> data,
                                  int n_classes,
                                  const TrainingSchedule& schedule, Rng& rng,
                                  const ClassifierTrainOptions& options) {
  if (data.empty()) throw InsufficientData("no training records");
  ClassifierModel model(data.front().image.resolution(), n_classes, rng);
  TrainReport report = fit_classifier(model, data, schedule, rng, options);
  return {std::move(model), std::move(report)};
}

TensorF classify_batch(const ClassifierModel& model,
                       std::span<const EncodedImage> images) {
  const int k = model.n_classes();
  TensorF out(nn::Shape{static_cast<int>(images.size()), k});
  for (std::size_t b = 0; b < images.size(); b += kEvalChunk) {
    const auto chunk = images.subspan(b, std::min(kEvalChunk, images.size() - b));
    for (const auto& img : chunk) check_image(img, model.resolution());
    const TensorF p = nn::softmax(model.network().infer(to_batch(chunk)));
    std::copy(p.data(), p.data() + p.size(), out.data() + b * k);
  }
  return out;
}

std::vector<double> classify(const ClassifierModel& model,
                             const EncodedImage& image) {
  const TensorF p = classify_batch(model, std::span<const EncodedImage>(&image, 1));
  return std::vector<double>(p.data(), p.data() + p.size());
}

std::vector<int> predict_batch(const ClassifierModel& model,
                               std::span<const EncodedImage> images) {
  const TensorF p = classify_batch(model, images);
  const int k = model.n_classes();
  std::vector<int> out(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    const float* row = p.data() + i * k;
    out[i] = static_cast<int>(std::max_element(row, row + k) - row);
  }
  return out;
}

double accuracy(const ClassifierModel& model, std::span<const LabeledImage> data) {
  if (data.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t b = 0; b < data.size(); b += kEvalChunk) {
    const std::size_t n = std::min(kEvalChunk, data.size() - b);
    std::vector<EncodedImage> imgs;
    imgs.reserve(n);
    for (std::size_t i = 0; i < n; ++i) imgs.push_back(data[b + i].image);
    const auto pred = predict_batch(model, imgs);
    for (std::size_t i = 0; i < n; ++i) {
      if (pred[i] == data[b + i].label) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

// --------------------------------------------------------------------- DQL

DqlModel::DqlModel(int resolution, Rng& rng)
    : resolution_(resolution),
      net_(build_network(dql_spec(resolution), EncodedImage::kChannels, resolution)) {
  net_.init(rng);
}

TensorF q_forward_batch(const DqlModel& model, std::span<const EncodedImage> images) {
  const std::size_t a = model.action_count();
  TensorF out(nn::Shape{static_cast<int>(images.size()), static_cast<int>(a)});
  for (std::size_t b = 0; b < images.size(); b += kEvalChunk) {
    const auto chunk = images.subspan(b, std::min(kEvalChunk, images.size() - b));
    for (const auto& img : chunk) check_image(img, model.resolution());
    const TensorF q = model.network().infer(to_batch(chunk));
    std::copy(q.data(), q.data() + q.size(), out.data() + b * a);
  }
  return out;
}

std::vector<float> q_forward(const DqlModel& model, const EncodedImage& image) {
  const TensorF q = q_forward_batch(model, std::span<const EncodedImage>(&image, 1));
  return std::vector<float>(q.data(), q.data() + q.size());
}

}  // namespace scanpriv
