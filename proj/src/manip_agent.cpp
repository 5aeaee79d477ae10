#include "scanpriv/manip_agent.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <mutex>
#include <numeric>
#include <unordered_map>

#include <json.hpp>

#include "scanpriv/errors.hpp"
#include "scanpriv/nn/sgd.hpp"

namespace scanpriv {

using TensorF = nn::Tensor<float>;

// ------------------------------------------------------------------ masks

std::size_t ActionMask::count() const {
  std::size_t c = 0;
  for (std::uint64_t w : words_) c += static_cast<std::size_t>(std::popcount(w));
  return c;
}

std::vector<std::size_t> ActionMask::ones() const {
  std::vector<std::size_t> out;
  for (std::size_t w = 0; w < words_.size(); ++w) {
    std::uint64_t bits = words_[w];
    while (bits) {
      out.push_back(w * 64 + static_cast<std::size_t>(std::countr_zero(bits)));
      bits &= bits - 1;
    }
  }
  return out;
}

ActionMask ActionMask::from_words(std::size_t n, std::vector<std::uint64_t> words) {
  if (words.size() != (n + 63) / 64) throw ShapeError("mask word count mismatch");
  if (n % 64 != 0 && !words.empty() && (words.back() >> (n % 64)) != 0) {
    throw ShapeError("mask has bits beyond its length");
  }
  ActionMask m;
  m.n_ = n;
  m.words_ = std::move(words);
  return m;
}

ActionMask threshold_actions(std::span<const float> q) {
  ActionMask m(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (!std::isfinite(q[i])) {
      throw InvalidQValues("non-finite action value at " + std::to_string(i));
    }
    if (q[i] >= 0.5f) m.set(i);
  }
  return m;
}

Bottleneck apply_mask(const Bottleneck& b, const ActionMask& mask) {
  if (b.values.size() != mask.size()) {
    throw ShapeError("mask length " + std::to_string(mask.size()) +
                     " does not match bottleneck length " +
                     std::to_string(b.values.size()));
  }
  Bottleneck out = b;
  for (std::size_t i : mask.ones()) out.values[i] = 0.0f;
  return out;
}

// ----------------------------------------------------------------- memory

ReplayMemory::ReplayMemory(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ConfigError("replay capacity must be positive");
}

void ReplayMemory::push(ReplayEntry e) {
  if (!e.state || e.state->provenance != Provenance::kTrain) {
    throw ProvenanceError("replay memory only accepts training states");
  }
  if (!std::isfinite(e.reward) || e.reward < -1.0f || e.reward > 1.0f) {
    throw InvalidReward("reward " + std::to_string(e.reward) + " outside [-1, 1]");
  }
  std::unique_lock lock(mu_);
  if (entries_.size() == capacity_) entries_.pop_front();
  entries_.push_back(std::move(e));
}

std::size_t ReplayMemory::size() const {
  std::shared_lock lock(mu_);
  return entries_.size();
}

ReplayEntry ReplayMemory::at(std::size_t i) const {
  std::shared_lock lock(mu_);
  return entries_.at(i);
}

std::vector<ReplayEntry> ReplayMemory::snapshot() const {
  std::shared_lock lock(mu_);
  return {entries_.begin(), entries_.end()};
}

std::vector<ReplayEntry> ReplayMemory::sample(std::size_t n, Rng& rng) const {
  std::shared_lock lock(mu_);
  std::vector<ReplayEntry> out;
  for (std::size_t i : rng.distinct(entries_.size(), n)) out.push_back(entries_[i]);
  return out;
}

// ----------------------------------------------------------------- reward

void RewardSpec::validate(std::size_t n_classifiers) const {
  if (keep.empty() || hide.empty()) {
    throw InvalidRewardSpec("keep and hide targets must both be non-empty");
  }
  for (int k : keep) {
    if (std::find(hide.begin(), hide.end(), k) != hide.end()) {
      throw InvalidRewardSpec("classifier " + std::to_string(k) +
                              " is both a keep and a hide target");
    }
  }
  for (const auto* list : {&keep, &hide}) {
    for (int c : *list) {
      if (c < 0 || static_cast<std::size_t>(c) >= n_classifiers) {
        throw InvalidRewardSpec("unknown classifier " + std::to_string(c));
      }
    }
  }
}

double compute_reward(const RewardSpec& spec, std::span<const double> keep_probs,
                      std::span<const double> hide_probs) {
  if (spec.keep.empty() || spec.hide.empty() || keep_probs.empty() ||
      hide_probs.empty()) {
    throw InvalidRewardSpec("empty keep or hide target set");
  }
  auto mean = [](std::span<const double> p) {
    double s = 0.0;
    for (double v : p) {
      if (!(v >= 0.0 && v <= 1.0)) {
        throw InvalidReward("probability " + std::to_string(v) + " outside [0, 1]");
      }
      s += v;
    }
    return s / static_cast<double>(p.size());
  };
  return std::clamp(mean(keep_probs) - mean(hide_probs), -1.0, 1.0);
}

std::vector<float> rewards_for_images(const ClassifierSet& classifiers,
                                      const RewardSpec& spec,
                                      std::span<const EncodedImage> images,
                                      std::span<const Sample* const> states) {
  spec.validate(classifiers.size());
  const auto p = true_class_probabilities(classifiers, images, states);
  std::vector<float> out(images.size());
  std::vector<double> keep(spec.keep.size()), hide(spec.hide.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    for (std::size_t k = 0; k < spec.keep.size(); ++k) keep[k] = p[spec.keep[k]][i];
    for (std::size_t k = 0; k < spec.hide.size(); ++k) hide[k] = p[spec.hide[k]][i];
    out[i] = static_cast<float>(compute_reward(spec, keep, hide));
  }
  return out;
}

std::size_t sweep_size(std::size_t actions, const InitMemoryOptions& opt) {
  if (opt.max_k < 1 || opt.masks_per_k < 0 ||
      static_cast<std::size_t>(opt.max_k) > actions) {
    throw ConfigError("invalid memory sweep options");
  }
  return actions + static_cast<std::size_t>(opt.max_k - 1) *
                       static_cast<std::size_t>(opt.masks_per_k);
}

InitMemoryReport init_memory(ReplayMemory& memory,
                             std::span<const std::shared_ptr<const Sample>> train,
                             const AutoencoderModel& autoencoder,
                             const ClassifierSet& classifiers,
                             const RewardSpec& spec, Rng& rng,
                             const InitMemoryOptions& options) {
  spec.validate(classifiers.size());
  const std::size_t actions = autoencoder.bottleneck_size();
  const std::size_t per_image = sweep_size(actions, options);
  if (memory.capacity() < per_image) throw CapacityError(per_image, memory.capacity());
  if (train.empty()) throw InsufficientData("no training images for the replay memory");

  std::size_t n_images = std::min(train.size(), memory.capacity() / per_image);
  if (options.max_images > 0) n_images = std::min(n_images, options.max_images);
  const auto chosen = rng.distinct(train.size(), n_images);

  InitMemoryReport report;
  double reward_sum = 0.0;
  constexpr std::size_t kChunk = 64;
  for (std::size_t pick : chosen) {
    const auto& state = train[pick];
    if (!state) throw InsufficientData("null training state");
    const Bottleneck code = encode(autoencoder, state->image);

    std::vector<ActionMask> masks;
    masks.reserve(per_image);
    for (std::size_t i = 0; i < actions; ++i) {
      masks.emplace_back(actions);
      masks.back().set(i);
    }
    for (int k = 2; k <= options.max_k; ++k) {
      for (int r = 0; r < options.masks_per_k; ++r) {
        ActionMask m(actions);
        for (std::size_t i : rng.distinct(actions, static_cast<std::size_t>(k))) m.set(i);
        masks.push_back(std::move(m));
      }
    }

    // Masks that only touch zero activations leave the code unchanged and
    // share the baseline reward.
    const Sample* self = state.get();
    const EncodedImage base = decode(autoencoder, code);
    const float baseline = rewards_for_images(classifiers, spec, std::span(&base, 1),
                                              std::span<const Sample* const>(&self, 1))[0];
    std::vector<float> rewards(masks.size(), baseline);
    std::vector<std::size_t> pending;
    for (std::size_t m = 0; m < masks.size(); ++m) {
      for (std::size_t i : masks[m].ones()) {
        if (code.values[i] != 0.0f) {
          pending.push_back(m);
          break;
        }
      }
    }
    for (std::size_t b = 0; b < pending.size(); b += kChunk) {
      const std::size_t n = std::min(kChunk, pending.size() - b);
      std::vector<Bottleneck> codes;
      codes.reserve(n);
      for (std::size_t j = 0; j < n; ++j) codes.push_back(apply_mask(code, masks[pending[b + j]]));
      const auto images = decode_batch(autoencoder, codes);
      const std::vector<const Sample*> states(n, self);
      const auto r = rewards_for_images(classifiers, spec, images, states);
      for (std::size_t j = 0; j < n; ++j) rewards[pending[b + j]] = r[j];
    }
    for (std::size_t m = 0; m < masks.size(); ++m) {
      reward_sum += rewards[m];
      memory.push({state, std::move(masks[m]), rewards[m]});
    }
    report.entries += masks.size();
    ++report.images;
  }
  report.mean_reward =
      report.entries ? reward_sum / static_cast<double>(report.entries) : 0.0;
  return report;
}

// ------------------------------------------------------------------ agent

DqlAgent::DqlAgent(int resolution, Rng& rng) : dql1(resolution, rng), dql2(dql1) {}

std::vector<double> train_dql(DqlAgent& agent, const ReplayMemory& memory,
                              double discount, const DqlTrainOptions& options,
                              Rng& rng) {
  const auto& schedule = options.schedule;
  schedule.validate();
  if (schedule.loss != LossKind::kL2) throw ConfigError("DQL training uses the L2 loss");
  const std::vector<ReplayEntry> entries = memory.snapshot();
  if (entries.empty()) throw EmptyMemory("cannot train the DQL network on an empty memory");

  auto& net = agent.dql1.network();
  const std::size_t actions = agent.dql1.action_count();
  const bool need_target = discount != 0.0 || options.unacted_weight > 0.0;
  nn::SgdOptimizer<float> opt(net);
  auto grads = net.make_gradients();
  nn::Tape<float> tape;
  const long epochs = schedule.planned_epochs();
  const std::size_t bs = static_cast<std::size_t>(schedule.batch_size);
  std::vector<double> trace;

  for (long e = 0; e < epochs; ++e) {
    std::vector<std::size_t> order;
    if (options.max_samples_per_epoch == 0 || options.max_samples_per_epoch >= entries.size()) {
      order = rng.permutation(entries.size());
    } else {
      order = rng.distinct(entries.size(), options.max_samples_per_epoch);
    }
    const nn::SgdHyper h = schedule.hyper(e);
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < order.size(); b += bs) {
      const std::size_t n = std::min(bs, order.size() - b);
      // Entries sharing a state share one forward pass.
      std::unordered_map<const Sample*, std::size_t> slot;
      std::vector<const EncodedImage*> unique;
      std::vector<std::size_t> row(n);
      for (std::size_t j = 0; j < n; ++j) {
        const Sample* s = entries[order[b + j]].state.get();
        auto [it, fresh] = slot.try_emplace(s, unique.size());
        if (fresh) unique.push_back(&s->image);
        row[j] = it->second;
      }
      const TensorF x = to_batch(std::span<const EncodedImage* const>(unique));
      for (auto& g : grads) g.fill(0.0f);
      const TensorF q1 = net.forward(x, tape, &rng);
      const TensorF q2 = need_target ? agent.dql2.network().infer(x) : TensorF{};
      TensorF dq(q1.shape());
      double batch_loss = 0.0;
      const double inv_n = 1.0 / static_cast<double>(n);
      for (std::size_t j = 0; j < n; ++j) {
        const ReplayEntry& entry = entries[order[b + j]];
        const std::size_t off = row[j] * actions;
        const auto acted = entry.action.ones();
        if (!acted.empty()) {
          const double w = 1.0 / static_cast<double>(acted.size());
          for (std::size_t i : acted) {
            const double target =
                entry.reward + (need_target ? discount * q2[off + i] : 0.0);
            const double d = q1[off + i] - target;
            batch_loss += w * d * d;
            dq[off + i] += static_cast<float>(2.0 * w * d * inv_n);
          }
        }
        if (options.unacted_weight > 0.0 && acted.size() < actions) {
          const double w = options.unacted_weight /
                           static_cast<double>(actions - acted.size());
          for (std::size_t i = 0; i < actions; ++i) {
            if (entry.action.test(i)) continue;
            const double d = q1[off + i] - q2[off + i];
            batch_loss += w * d * d;
            dq[off + i] += static_cast<float>(2.0 * w * d * inv_n);
          }
        }
      }
      batch_loss *= inv_n;
      if (!std::isfinite(batch_loss)) throw TrainingDiverged(e, "DQL loss is not finite");
      net.backward(dq, tape, grads, false);
      opt.step(net, grads, h, e);
      loss_sum += batch_loss * static_cast<double>(n);
    }
    trace.push_back(loss_sum / static_cast<double>(order.size()));
  }
  ++agent.runs;
  if (agent.runs % DqlAgent::kSyncEvery == 0) {
    agent.dql2.network().copy_parameters_from(net);
  }
  return trace;
}

std::vector<Manipulation> manipulate_batch(std::span<const EncodedImage> images,
                                           const DqlModel& dql,
                                           const AutoencoderModel& autoencoder) {
  if (dql.action_count() != autoencoder.bottleneck_size()) {
    throw ShapeError("DQL action count does not match the bottleneck size");
  }
  const TensorF q = q_forward_batch(dql, images);
  auto codes = encode_batch(autoencoder, images);
  const std::size_t a = dql.action_count();
  std::vector<ActionMask> masks;
  for (std::size_t i = 0; i < images.size(); ++i) {
    masks.push_back(threshold_actions(std::span<const float>(q.data() + i * a, a)));
    codes[i] = apply_mask(codes[i], masks.back());
  }
  auto decoded = decode_batch(autoencoder, codes);
  std::vector<Manipulation> out;
  out.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    out.push_back({std::move(decoded[i]), std::move(masks[i])});
  }
  return out;
}

Manipulation manipulate(const EncodedImage& image, const DqlModel& dql,
                        const AutoencoderModel& autoencoder) {
  return std::move(manipulate_batch(std::span(&image, 1), dql, autoencoder).front());
}

double DiscountSchedule::y_at(long run, long total) const {
  if (total <= 1) return y_start;
  const double f = static_cast<double>(run) / static_cast<double>(total - 1);
  return y_start + (y_end - y_start) * std::clamp(f, 0.0, 1.0);
}

double DiscountSchedule::eps_at(long run, long total) const {
  if (total <= 1) return eps_start;
  const double f = static_cast<double>(run) / static_cast<double>(total - 1);
  return eps_start + (eps_end - eps_start) * std::clamp(f, 0.0, 1.0);
}

ActionMask explore(const ActionMask& greedy, double eps, int flip_max, Rng& rng) {
  ActionMask m = greedy;
  if (flip_max < 1 || !rng.bernoulli(eps)) return m;
  const std::size_t k = static_cast<std::size_t>(
      rng.between(1, std::min<long>(flip_max, static_cast<long>(m.size()))));
  for (std::size_t i : rng.distinct(m.size(), k)) m.flip(i);
  return m;
}

IterationReport run_iteration(DqlAgent& agent, ReplayMemory& memory,
                              ClassifierMemory& seen, const IterationContext& ctx,
                              int iteration, const IterationOptions& options,
                              Rng& rng, const std::function<void(long, double)>& on_run) {
  ctx.spec.validate(ctx.classifiers.size());
  if (ctx.train.empty()) throw InsufficientData("no training states");
  if (options.steps < 0 || options.images_per_step < 1) {
    throw ConfigError("iteration needs steps >= 0 and images_per_step >= 1");
  }
  IterationReport report;
  report.iteration = iteration;
  const std::size_t per_step =
      std::min<std::size_t>(static_cast<std::size_t>(options.images_per_step), ctx.train.size());
  const std::size_t a = agent.dql1.action_count();

  for (long run = 0; run < options.steps; ++run) {
    const auto picks = rng.distinct(ctx.train.size(), per_step);
    std::vector<EncodedImage> imgs;
    std::vector<const Sample*> states;
    for (std::size_t p : picks) {
      imgs.push_back(ctx.train[p]->image);
      states.push_back(ctx.train[p].get());
    }
    const TensorF q = q_forward_batch(agent.dql1, imgs);
    auto codes = encode_batch(ctx.autoencoder, imgs);
    const double eps = options.discount.eps_at(run, options.steps);
    std::vector<ActionMask> masks;
    for (std::size_t i = 0; i < imgs.size(); ++i) {
      const ActionMask greedy = threshold_actions(std::span<const float>(q.data() + i * a, a));
      masks.push_back(explore(greedy, eps, options.discount.flip_max, rng));
      codes[i] = apply_mask(codes[i], masks.back());
    }
    auto decoded = decode_batch(ctx.autoencoder, codes);
    const auto rewards = rewards_for_images(ctx.classifiers, ctx.spec, decoded, states);
    double mean = 0.0;
    for (std::size_t i = 0; i < picks.size(); ++i) {
      memory.push({ctx.train[picks[i]], masks[i], rewards[i]});
      seen.record(*states[i], std::move(decoded[i]), iteration);
      mean += rewards[i];
    }
    mean /= static_cast<double>(picks.size());
    report.reward_trace.push_back(mean);
    train_dql(agent, memory, options.discount.y_at(run, options.steps), options.train, rng);
    ++report.runs;
    if (on_run) on_run(run, mean);

    const auto& tr = report.reward_trace;
    const std::size_t w = static_cast<std::size_t>(std::max(options.window, 1));
    if (options.early_stop && tr.size() >= 2 * w) {
      const double recent = std::accumulate(tr.end() - w, tr.end(), 0.0) / w;
      const double before = std::accumulate(tr.end() - 2 * w, tr.end() - w, 0.0) / w;
      if (std::abs(recent - before) < options.tolerance) break;
    }
  }
  if (!report.reward_trace.empty()) {
    report.mean_reward = std::accumulate(report.reward_trace.begin(),
                                         report.reward_trace.end(), 0.0) /
                         static_cast<double>(report.reward_trace.size());
  }

  std::vector<EncodedImage> test_imgs;
  std::vector<const Sample*> test_labels;
  for (const auto& s : ctx.test) {
    test_imgs.push_back(s.image);
    test_labels.push_back(&s);
  }
  if (!test_imgs.empty()) {
    const auto manipulated = manipulate_batch(test_imgs, agent.dql1, ctx.autoencoder);
    std::vector<EncodedImage> out;
    double masked = 0.0;
    for (const auto& m : manipulated) {
      out.push_back(m.image);
      masked += static_cast<double>(m.mask.count()) / static_cast<double>(a);
    }
    report.pre_adaptation_accuracy = accuracies(ctx.classifiers, out, test_labels);
    report.mean_mask_fraction = masked / static_cast<double>(manipulated.size());
  }
  return report;
}

std::string to_json_line(const IterationReport& r,
                         const std::vector<std::string>& classifier_names) {
  nlohmann::ordered_json j;
  j["iteration"] = r.iteration;
  j["runs"] = r.runs;
  j["mean_reward"] = r.mean_reward;
  nlohmann::ordered_json acc = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < r.pre_adaptation_accuracy.size(); ++i) {
    acc[i < classifier_names.size() ? classifier_names[i] : std::to_string(i)] =
        r.pre_adaptation_accuracy[i];
  }
  j["pre_adaptation_accuracy"] = acc;
  j["mean_mask_fraction"] = r.mean_mask_fraction;
  return j.dump();
}

}  // namespace scanpriv
