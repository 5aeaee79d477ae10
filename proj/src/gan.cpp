#include <algorithm>
#include <cmath>

#include "scanpriv/errors.hpp"
#include "scanpriv/manip_agent.hpp"
#include "scanpriv/nn/loss.hpp"
#include "scanpriv/nn/sgd.hpp"
#include "scanpriv/privacy.hpp"

namespace scanpriv {

using TensorF = nn::Tensor<float>;

double gan_discriminator(double p_keep, double p_hide) {
  return std::clamp(0.5 * p_keep + 0.5 * (1.0 - p_hide), 0.0, 1.0);
}

double gan_generator_loss(double d) {
  return std::log(1.0 - std::clamp(d, 0.0, 1.0 - 1e-6));
}

namespace {

struct Trainer {
  nn::Network<float>* net;
  nn::SgdOptimizer<float> opt;
  nn::Gradients<float> grads;
  explicit Trainer(nn::Network<float>& n) : net(&n), opt(n), grads(n.make_gradients()) {}
  void zero() {
    for (auto& g : grads) g.fill(0.0f);
  }
};

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace

GanObjective gan_adversarial_objective(const ClassifierSet& classifiers,
                                       const std::vector<int>& keep,
                                       const std::vector<int>& hide,
                                       const nn::Tensor<float>& generated,
                                       std::span<const Sample* const> labels, Rng& rng) {
  const std::size_t n = labels.size();
  if (generated.rank() == 0 || static_cast<std::size_t>(generated.dim(0)) != n) {
    throw ShapeError("one label per generated image");
  }
  // Probabilities of the true class per classifier and image.
  std::vector<TensorF> probs(classifiers.size());
  std::vector<nn::Tape<float>> tapes(classifiers.size());
  for (std::size_t c = 0; c < classifiers.size(); ++c) {
    probs[c] = nn::softmax(classifiers.models[c].network().forward(generated, tapes[c], &rng));
  }
  auto p_true = [&](std::size_t c, std::size_t i) {
    const int k = classifiers.models[c].n_classes();
    const int y = label_of(*labels[i], classifiers.tasks[c].kind);
    return static_cast<double>(probs[c][i * static_cast<std::size_t>(k) + static_cast<std::size_t>(y)]);
  };
  GanObjective out;
  out.grad = TensorF(generated.shape());
  std::vector<double> dl_dd(n);
  for (std::size_t i = 0; i < n; ++i) {
    double pk = 0.0, ph = 0.0;
    for (int c : keep) pk += p_true(static_cast<std::size_t>(c), i);
    for (int c : hide) ph += p_true(static_cast<std::size_t>(c), i);
    pk /= static_cast<double>(keep.size());
    ph /= static_cast<double>(hide.size());
    const double d = gan_discriminator(pk, ph);
    out.d.push_back(d);
    out.loss += gan_generator_loss(d) / static_cast<double>(n);
    dl_dd[i] = d >= 1.0 - 1e-6 ? 0.0 : -1.0 / ((1.0 - d) * static_cast<double>(n));
  }
  for (std::size_t c = 0; c < classifiers.size(); ++c) {
    const bool is_keep = std::find(keep.begin(), keep.end(), static_cast<int>(c)) != keep.end();
    const bool is_hide = std::find(hide.begin(), hide.end(), static_cast<int>(c)) != hide.end();
    if (!is_keep && !is_hide) continue;
    const double share = is_keep ? 0.5 / static_cast<double>(keep.size())
                                 : -0.5 / static_cast<double>(hide.size());
    const int k = classifiers.models[c].n_classes();
    TensorF dlogits(probs[c].shape());
    for (std::size_t i = 0; i < n; ++i) {
      const double py = p_true(c, i);
      const int y = label_of(*labels[i], classifiers.tasks[c].kind);
      for (int j = 0; j < k; ++j) {
        const std::size_t at = i * static_cast<std::size_t>(k) + static_cast<std::size_t>(j);
        const double dp = py * ((j == y ? 1.0 : 0.0) - probs[c][at]);
        dlogits[at] = static_cast<float>(dl_dd[i] * share * dp);
      }
    }
    // Only the input gradient is wanted; parameter gradients are discarded.
    auto scratch = classifiers.models[c].network().make_gradients();
    const TensorF dx = classifiers.models[c].network().backward(dlogits, tapes[c], scratch, true);
    for (std::size_t i = 0; i < out.grad.size(); ++i) out.grad[i] += dx[i];
  }
  return out;
}

GanResult gan_train(const AutoencoderModel& autoencoder, const ClassifierSet& classifiers,
                    const std::vector<int>& keep, const std::vector<int>& hide,
                    std::span<const Sample> train, const GanOptions& options, Rng& rng) {
  RewardSpec{keep, hide}.validate(classifiers.size());
  if (options.pretrain_epochs < 0 || options.adversarial_epochs < 0 || options.batch_size < 1 ||
      options.recon_weight < 0.0) {
    throw ConfigError("invalid GAN options");
  }
  if (train.empty()) throw InsufficientData("no GAN training samples");
  options.generator.validate();
  options.discriminator.validate();

  GanResult result{autoencoder, classifiers, {}};
  Trainer enc(result.generator.encoder()), dec(result.generator.decoder());
  std::vector<Trainer> disc;
  for (auto& m : result.discriminators.models) disc.emplace_back(m.network());

  const std::size_t bs = static_cast<std::size_t>(options.batch_size);
  const int total = options.pretrain_epochs + options.adversarial_epochs;
  nn::Tape<float> t_enc, t_dec;
  std::vector<nn::Tape<float>> t_disc(disc.size());

  for (int e = 0; e < total; ++e) {
    const bool adversarial = e >= options.pretrain_epochs;
    const nn::SgdHyper hg = options.generator.hyper(e);
    const nn::SgdHyper hd = options.discriminator.hyper(e);
    std::vector<double> g_losses, r_losses, d_losses, d_values;
    const auto order = rng.permutation(train.size());
    for (std::size_t b = 0; b < order.size(); b += bs) {
      const std::size_t n = std::min(bs, order.size() - b);
      std::vector<const EncodedImage*> imgs(n);
      std::vector<const Sample*> samples(n);
      for (std::size_t i = 0; i < n; ++i) {
        samples[i] = &train[order[b + i]];
        imgs[i] = &samples[i]->image;
      }
      const TensorF x = to_batch(std::span<const EncodedImage* const>(imgs));
      enc.zero();
      dec.zero();
      const TensorF z = enc.net->forward(x, t_enc, &rng);
      const TensorF g = dec.net->forward(z, t_dec, &rng);

      // Discriminators: true labels on real and generated images.
      for (std::size_t c = 0; c < disc.size(); ++c) {
        std::vector<int> labels(n);
        for (std::size_t i = 0; i < n; ++i) {
          labels[i] = label_of(*samples[i], result.discriminators.tasks[c].kind);
        }
        disc[c].zero();
        for (const TensorF* input : {&x, &g}) {
          const TensorF logits = disc[c].net->forward(*input, t_disc[c], &rng);
          auto loss = nn::softmax_log_loss(logits, std::span<const int>(labels));
          if (!std::isfinite(loss.value)) throw TrainingDiverged(e, "discriminator loss");
          d_losses.push_back(loss.value);
          disc[c].net->backward(loss.grad, t_disc[c], disc[c].grads, false);
        }
        disc[c].opt.step(*disc[c].net, disc[c].grads, hd, e);
      }

      // Generator: reconstruction plus, once adversarial, log(1 - D(G(I))).
      auto recon = nn::l2_loss(g, x, nn::L2Reduction::kMean);
      r_losses.push_back(2.0 * recon.value);
      TensorF dg(g.shape());
      const double w = adversarial ? options.recon_weight : 1.0;
      for (std::size_t i = 0; i < dg.size(); ++i) dg[i] = static_cast<float>(w) * recon.grad[i];
      if (adversarial) {
        auto obj = gan_adversarial_objective(result.discriminators, keep, hide, g, samples, rng);
        g_losses.push_back(obj.loss);
        d_values.insert(d_values.end(), obj.d.begin(), obj.d.end());
        for (std::size_t i = 0; i < dg.size(); ++i) dg[i] += obj.grad[i];
      }
      const TensorF dz = dec.net->backward(dg, t_dec, dec.grads, true);
      enc.net->backward(dz, t_enc, enc.grads, false);
      dec.opt.step(*dec.net, dec.grads, hg, e);
      enc.opt.step(*enc.net, enc.grads, hg, e);
    }
    result.epochs.push_back({e, adversarial, mean_of(g_losses), mean_of(r_losses),
                             mean_of(d_losses), mean_of(d_values)});
  }
  result.generator.epochs_trained += total;
  return result;
}

}  // namespace scanpriv
