#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <shared_mutex>
#include <span>
#include <string>
#include <vector>

#include "scanpriv/class_agent.hpp"
#include "scanpriv/models.hpp"
#include "scanpriv/sample.hpp"

namespace scanpriv {

// Bit set over bottleneck positions; 1 = deactivate.
class ActionMask {
 public:
  ActionMask() = default;
  explicit ActionMask(std::size_t n) : n_(n), words_((n + 63) / 64, 0) {}

  std::size_t size() const { return n_; }
  bool test(std::size_t i) const { return (words_[i >> 6] >> (i & 63)) & 1u; }
  void set(std::size_t i, bool v = true) {
    const std::uint64_t bit = std::uint64_t{1} << (i & 63);
    if (v) {
      words_[i >> 6] |= bit;
    } else {
      words_[i >> 6] &= ~bit;
    }
  }
  void flip(std::size_t i) { words_[i >> 6] ^= std::uint64_t{1} << (i & 63); }
  std::size_t count() const;
  std::vector<std::size_t> ones() const;
  const std::vector<std::uint64_t>& words() const { return words_; }
  static ActionMask from_words(std::size_t n, std::vector<std::uint64_t> words);

  friend bool operator==(const ActionMask&, const ActionMask&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<std::uint64_t> words_;
};

// mask[i] = 1 iff q[i] >= 0.5. Throws InvalidQValues on non-finite input.
ActionMask threshold_actions(std::span<const float> q);

// Zeroes the masked bottleneck values.
Bottleneck apply_mask(const Bottleneck& b, const ActionMask& mask);

// ------------------------------------------------------------------ memory

struct ReplayEntry {
  std::shared_ptr<const Sample> state;
  ActionMask action;
  float reward = 0.0f;
};

// Bounded FIFO of replay entries. One writer, many readers.
class ReplayMemory {
 public:
  static constexpr std::size_t kDefaultCapacity = 200000;

  explicit ReplayMemory(std::size_t capacity = kDefaultCapacity);

  // Throws ProvenanceError for non-training states and InvalidReward for
  // rewards outside [-1, 1].
  void push(ReplayEntry e);
  std::size_t size() const;
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return size() == 0; }
  ReplayEntry at(std::size_t i) const;
  // Consistent copy of all entries.
  std::vector<ReplayEntry> snapshot() const;
  // `n` entries drawn uniformly without replacement (all if n >= size).
  std::vector<ReplayEntry> sample(std::size_t n, Rng& rng) const;

 private:
  std::size_t capacity_;
  mutable std::shared_mutex mu_;
  std::deque<ReplayEntry> entries_;
};

// ------------------------------------------------------------------ reward

struct RewardSpec {
  std::vector<int> keep;  // classifier indices whose accuracy should stay
  std::vector<int> hide;  // classifier indices whose accuracy should drop

  // Throws InvalidRewardSpec.
  void validate(std::size_t n_classifiers) const;
};

// Mean keep probability minus mean hide probability, in [-1, 1].
double compute_reward(const RewardSpec& spec, std::span<const double> keep_probs,
                      std::span<const double> hide_probs);

// Rewards for images[i] judged against the labels of states[i].
std::vector<float> rewards_for_images(const ClassifierSet& classifiers,
                                      const RewardSpec& spec,
                                      std::span<const EncodedImage> images,
                                      std::span<const Sample* const> states);

struct InitMemoryOptions {
  std::size_t max_images = 0;  // 0 = as many as the capacity holds
  int max_k = 100;
  int masks_per_k = 100;
};

// One sweep per image: every single-position mask plus masks_per_k random
// masks of each size 2..max_k.
std::size_t sweep_size(std::size_t actions, const InitMemoryOptions& opt);

struct InitMemoryReport {
  std::size_t images = 0;
  std::size_t entries = 0;
  double mean_reward = 0.0;
};

// Fills `memory` with measured sweeps over a random subset of train states.
// Throws CapacityError when not even one sweep fits.
InitMemoryReport init_memory(ReplayMemory& memory,
                             std::span<const std::shared_ptr<const Sample>> train,
                             const AutoencoderModel& autoencoder,
                             const ClassifierSet& classifiers,
                             const RewardSpec& spec, Rng& rng,
                             const InitMemoryOptions& options = {});

// ------------------------------------------------------------------ agent

class DqlAgent {
 public:
  static constexpr long kSyncEvery = 10;

  DqlAgent(int resolution, Rng& rng);

  DqlModel dql1;
  DqlModel dql2;
  long runs = 0;  // completed train_dql calls
};

struct DqlTrainOptions {
  TrainingSchedule schedule = TrainingSchedule::dql();
  // Weight of the (DQL1 - DQL2)^2 term on positions the entry did not act
  // on; 0 restricts the loss to acted positions.
  double unacted_weight = 0.0;
  // Entries visited per epoch; 0 = the entire memory.
  std::size_t max_samples_per_epoch = 0;
};

// One training run: the schedule's epochs over the memory with target
// R + discount * DQL2(state) on acted positions. DQL2 is overwritten with
// DQL1 after every kSyncEvery-th run. Returns the mean loss per epoch.
std::vector<double> train_dql(DqlAgent& agent, const ReplayMemory& memory,
                              double discount, const DqlTrainOptions& options,
                              Rng& rng);

struct Manipulation {
  EncodedImage image;
  ActionMask mask;
};

Manipulation manipulate(const EncodedImage& image, const DqlModel& dql,
                        const AutoencoderModel& autoencoder);
std::vector<Manipulation> manipulate_batch(std::span<const EncodedImage> images,
                                           const DqlModel& dql,
                                           const AutoencoderModel& autoencoder);

// Linear schedules for the discount y and the exploration rate over the
// runs of one iteration.
struct DiscountSchedule {
  double y_start = 0.9;
  double y_end = 0.1;
  double eps_start = 0.5;
  double eps_end = 0.05;
  int flip_max = 100;

  double y_at(long run, long total) const;
  double eps_at(long run, long total) const;
};

// With probability eps flips k ~ U{1..flip_max} distinct random positions of
// the greedy mask.
ActionMask explore(const ActionMask& greedy, double eps, int flip_max, Rng& rng);

struct IterationOptions {
  int steps = 1000;            // training runs
  int images_per_step = 16;    // manipulated training images per run
  int window = 50;             // moving-average window for early stop
  double tolerance = 0.005;
  bool early_stop = false;
  DiscountSchedule discount;
  DqlTrainOptions train;
};

struct IterationReport {
  int iteration = 0;
  long runs = 0;
  double mean_reward = 0.0;
  std::vector<double> reward_trace;          // mean reward per run
  std::vector<double> pre_adaptation_accuracy;  // per classifier, on test
  double mean_mask_fraction = 0.0;           // on the test set
};

struct IterationContext {
  const AutoencoderModel& autoencoder;
  const ClassifierSet& classifiers;
  const RewardSpec& spec;
  std::span<const std::shared_ptr<const Sample>> train;
  std::span<const Sample> test;
};

// Runs `steps` manipulate / reward / store / train cycles, records every
// manipulated training image in `seen`, then measures the current
// classifiers on the manipulated test set.
IterationReport run_iteration(DqlAgent& agent, ReplayMemory& memory,
                              ClassifierMemory& seen,
                              const IterationContext& ctx, int iteration,
                              const IterationOptions& options, Rng& rng,
                              const std::function<void(long, double)>& on_run = {});

std::string to_json_line(const IterationReport& r,
                         const std::vector<std::string>& classifier_names);

}  // namespace scanpriv
