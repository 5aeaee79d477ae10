#include "scanpriv/class_agent.hpp"

#include <algorithm>
#include <stdexcept>

#include "scanpriv/errors.hpp"

namespace scanpriv {

std::vector<std::vector<double>> true_class_probabilities(
    const ClassifierSet& set, std::span<const EncodedImage> images,
    std::span<const Sample* const> labels) {
  if (images.size() != labels.size()) {
    throw ShapeError("image and label counts differ");
  }
  std::vector<std::vector<double>> out(set.size());
  for (std::size_t c = 0; c < set.size(); ++c) {
    const auto p = classify_batch(set.models[c], images);
    const int k = set.models[c].n_classes();
    out[c].resize(images.size());
    for (std::size_t i = 0; i < images.size(); ++i) {
      const int y = label_of(*labels[i], set.tasks[c].kind);
      out[c][i] = p[i * static_cast<std::size_t>(k) + static_cast<std::size_t>(y)];
    }
  }
  return out;
}

std::vector<double> accuracies(const ClassifierSet& set,
                               std::span<const EncodedImage> images,
                               std::span<const Sample* const> labels) {
  if (images.size() != labels.size()) {
    throw ShapeError("image and label counts differ");
  }
  std::vector<double> out(set.size(), 0.0);
  if (images.empty()) return out;
  for (std::size_t c = 0; c < set.size(); ++c) {
    const auto pred = predict_batch(set.models[c], images);
    std::size_t hit = 0;
    for (std::size_t i = 0; i < images.size(); ++i) {
      hit += pred[i] == label_of(*labels[i], set.tasks[c].kind);
    }
    out[c] = static_cast<double>(hit) / static_cast<double>(images.size());
  }
  return out;
}

void ClassifierMemory::record(const Sample& origin, EncodedImage manipulated,
                              int iteration) {
  if (origin.provenance != Provenance::kTrain) {
    throw ProvenanceError("classifier memory only accepts training images");
  }
  if (adapting_.load()) {
    throw std::logic_error("classifier memory is locked during adaptation");
  }
  entries_.push_back({std::move(manipulated), origin.subject, origin.stimulus, iteration});
}

void ClassifierMemory::begin_adaptation() const {
  bool expected = false;
  if (!adapting_.compare_exchange_strong(expected, true)) {
    throw std::logic_error("adaptation already running");
  }
}

void ClassifierMemory::end_adaptation() const { adapting_.store(false); }

Container ClassifierMemory::to_container(std::uint64_t seed,
                                         std::uint64_t config_hash) const {
  Container c({ArtifactKind::kClassifierMemory,
               entries_.empty() ? 0u : static_cast<std::uint32_t>(entries_[0].image.resolution()),
               0, seed, 0, config_hash});
  std::vector<float> pixels;
  std::vector<std::int32_t> labels;
  for (const auto& e : entries_) {
    pixels.insert(pixels.end(), e.image.values().begin(), e.image.values().end());
    labels.push_back(e.subject);
    labels.push_back(e.stimulus);
    labels.push_back(e.iteration);
  }
  const int r = static_cast<int>(c.header().resolution);
  c.add_f32("images", nn::Shape{static_cast<int>(entries_.size()), EncodedImage::kChannels, r, r},
            pixels);
  c.add_i32("labels", labels);
  return c;
}

ClassifierMemory ClassifierMemory::from_container(const Container& c) {
  if (c.header().kind != ArtifactKind::kClassifierMemory) {
    throw CheckpointError("not a classifier memory container");
  }
  ClassifierMemory m;
  const auto pixels = c.f32("images");
  const auto labels = c.i32("labels");
  const int r = static_cast<int>(c.header().resolution);
  const std::size_t n = labels.size() / 3;
  const std::size_t per = static_cast<std::size_t>(EncodedImage::kChannels) * r * r;
  if (pixels.size() != n * per) throw CheckpointError("classifier memory size mismatch");
  for (std::size_t i = 0; i < n; ++i) {
    m.entries_.push_back({EncodedImage(r, std::vector<float>(pixels.begin() + i * per,
                                                             pixels.begin() + (i + 1) * per)),
                          labels[3 * i], labels[3 * i + 1], labels[3 * i + 2]});
  }
  return m;
}

namespace {

struct AdaptGuard {
  const ClassifierMemory& m;
  explicit AdaptGuard(const ClassifierMemory& mem) : m(mem) { m.begin_adaptation(); }
  ~AdaptGuard() { m.end_adaptation(); }
};

TrainReport train_task(ClassifierModel& out, const TaskSpec& task,
                       std::span<const Sample> base,
                       const std::vector<MemoryEntry>* memory,
                       std::span<const Sample> validation,
                       const AdaptOptions& options, std::size_t task_index,
                       Rng& rng) {
  std::vector<LabeledImage> pool;
  pool.reserve(base.size() + (memory ? memory->size() : 0));
  for (const auto& s : base) pool.push_back({s.image, label_of(s, task.kind)});
  if (memory) {
    for (const auto& e : *memory) {
      pool.push_back({e.image, task.kind == LabelKind::kSubject ? e.subject : e.stimulus});
    }
  }
  std::vector<LabeledImage> val;
  for (const auto& s : validation) val.push_back({s.image, label_of(s, task.kind)});

  ClassifierTrainOptions opt;
  const std::size_t n_base = base.size();
  if (options.augment_base) {
    opt.resample = [&, n_base](std::size_t i, Rng& r) -> std::optional<EncodedImage> {
      if (i >= n_base) return std::nullopt;
      return options.augment_base(i, r);
    };
  }
  opt.validation = val;
  opt.validate_every = val.empty() ? 0 : 5;
  if (options.on_epoch) {
    opt.on_epoch = [&, task_index](const EpochStats& e) { options.on_epoch(task_index, e); };
  }
  auto result = train_classifier(pool, task.n_classes, options.schedule, rng, opt);
  out = std::move(result.model);
  return std::move(result.report);
}

}  // namespace

AdaptReport adapt(ClassifierSet& classifiers, const ClassifierMemory& memory,
                  std::span<const Sample> base_train, std::span<const Sample> test,
                  const AdaptOptions& options, Rng& rng) {
  if (memory.empty() && base_train.empty()) {
    throw InsufficientData("nothing to train the classifiers on");
  }
  for (const auto& s : base_train) {
    if (s.provenance != Provenance::kTrain) {
      throw ProvenanceError("base training set contains a test image");
    }
  }
  AdaptGuard guard(memory);
  AdaptReport report;
  report.pool_size = base_train.size() + memory.size();
  for (std::size_t c = 0; c < classifiers.size(); ++c) {
    report.training.push_back(train_task(classifiers.models[c], classifiers.tasks[c],
                                         base_train, &memory.entries(), {}, options, c,
                                         rng));
  }
  std::vector<EncodedImage> imgs;
  std::vector<const Sample*> labels;
  for (const auto& s : test) {
    imgs.push_back(s.image);
    labels.push_back(&s);
  }
  report.test_accuracy = accuracies(classifiers, imgs, labels);
  return report;
}

ClassifierSet train_classifier_set(const std::vector<TaskSpec>& tasks,
                                   std::span<const Sample> base_train,
                                   std::span<const Sample> validation,
                                   const AdaptOptions& options, Rng& rng) {
  if (base_train.empty()) throw InsufficientData("no training samples");
  ClassifierSet set;
  set.tasks = tasks;
  for (std::size_t c = 0; c < tasks.size(); ++c) {
    Rng init(0);
    set.models.emplace_back(base_train.front().image.resolution(), tasks[c].n_classes, init);
    train_task(set.models.back(), tasks[c], base_train, nullptr, validation, options, c, rng);
  }
  return set;
}

}  // namespace scanpriv
