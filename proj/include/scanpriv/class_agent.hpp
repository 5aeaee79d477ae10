#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "scanpriv/checkpoint.hpp"
#include "scanpriv/models.hpp"
#include "scanpriv/sample.hpp"

namespace scanpriv {

struct TaskSpec {
  std::string name;
  LabelKind kind = LabelKind::kSubject;
  int n_classes = 2;
};

// The classifiers queried for rewards, index-aligned with their tasks.
struct ClassifierSet {
  std::vector<TaskSpec> tasks;
  std::vector<ClassifierModel> models;

  std::size_t size() const { return models.size(); }
};

// Probability of the true class for every (classifier, image) pair:
// result[c][i].
std::vector<std::vector<double>> true_class_probabilities(
    const ClassifierSet& set, std::span<const EncodedImage> images,
    std::span<const Sample* const> labels);

// Accuracy of every classifier on (images[i], labels of samples[i]).
std::vector<double> accuracies(const ClassifierSet& set,
                               std::span<const EncodedImage> images,
                               std::span<const Sample* const> labels);

struct MemoryEntry {
  EncodedImage image;
  int subject = 0;
  int stimulus = 0;
  int iteration = 0;
};

// Append-only store of manipulated training images. Recording is refused
// while an adaptation is running.
class ClassifierMemory {
 public:
  ClassifierMemory() = default;
  ClassifierMemory(const ClassifierMemory& o) : entries_(o.entries_) {}
  ClassifierMemory(ClassifierMemory&& o) noexcept : entries_(std::move(o.entries_)) {}
  ClassifierMemory& operator=(ClassifierMemory o) noexcept {
    entries_ = std::move(o.entries_);
    return *this;
  }

  // Throws ProvenanceError for anything not from the training split.
  void record(const Sample& origin, EncodedImage manipulated, int iteration);

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::vector<MemoryEntry>& entries() const { return entries_; }

  void begin_adaptation() const;
  void end_adaptation() const;
  bool adapting() const { return adapting_.load(); }

  Container to_container(std::uint64_t seed, std::uint64_t config_hash) const;
  static ClassifierMemory from_container(const Container& c);

 private:
  std::vector<MemoryEntry> entries_;
  mutable std::atomic<bool> adapting_{false};
};

struct AdaptOptions {
  TrainingSchedule schedule = TrainingSchedule::classifier();
  // Optional per-epoch replacement image for base item i (augmentation).
  std::function<std::optional<EncodedImage>(std::size_t, Rng&)> augment_base;
  std::function<void(std::size_t task, const EpochStats&)> on_epoch;
};

struct AdaptReport {
  std::size_t pool_size = 0;
  std::vector<double> test_accuracy;
  std::vector<TrainReport> training;
};

// Rebuilds every classifier from random initialization and trains it on the
// union of base_train and all memory entries. Test accuracy is measured on
// `test` as given.
AdaptReport adapt(ClassifierSet& classifiers, const ClassifierMemory& memory,
                  std::span<const Sample> base_train,
                  std::span<const Sample> test, const AdaptOptions& options,
                  Rng& rng);

// Initial classifier training on base_train only.
ClassifierSet train_classifier_set(const std::vector<TaskSpec>& tasks,
                                   std::span<const Sample> base_train,
                                   std::span<const Sample> validation,
                                   const AdaptOptions& options, Rng& rng);

}  // namespace scanpriv
