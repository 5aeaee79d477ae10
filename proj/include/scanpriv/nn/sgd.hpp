#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "scanpriv/errors.hpp"
#include "scanpriv/nn/network.hpp"

namespace scanpriv::nn {

struct SgdHyper {
  double lr = 0.01;
  double weight_decay = 0.0;
  double momentum = 0.0;
};

// Classic coupled form:
//   v <- momentum * v + grad + weight_decay * param
//   param <- param - lr * v
// Throws TrainingDiverged when a gradient is not finite.
template <typename T>
void sgd_step(std::span<T> params, std::span<const T> grads,
              std::span<T> velocity, const SgdHyper& h, long epoch = -1) {
  if (params.size() != grads.size() || params.size() != velocity.size()) {
    throw ShapeError("sgd_step: parameter, gradient and velocity sizes differ");
  }
  for (const T g : grads) {
    if (!std::isfinite(g)) throw TrainingDiverged(epoch, "non-finite gradient");
  }
  const T lr = static_cast<T>(h.lr);
  const T wd = static_cast<T>(h.weight_decay);
  const T mom = static_cast<T>(h.momentum);
  for (std::size_t i = 0; i < params.size(); ++i) {
    velocity[i] = mom * velocity[i] + grads[i] + wd * params[i];
    params[i] -= lr * velocity[i];
  }
}

// Momentum SGD over all parameters of a network.
template <typename T>
class SgdOptimizer {
 public:
  SgdOptimizer() = default;
  explicit SgdOptimizer(const Network<T>& net) : velocity_(net.make_gradients()) {}

  void step(Network<T>& net, const Gradients<T>& grads, const SgdHyper& h,
            long epoch = -1) {
    if (velocity_.empty()) velocity_ = net.make_gradients();
    auto params = net.parameters();
    if (params.size() != grads.size()) {
      throw ShapeError("optimizer: gradient count mismatch");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      sgd_step<T>(params[i]->values(), grads[i].values(),
                  velocity_[i].values(), h, epoch);
    }
  }

  Gradients<T>& velocity() { return velocity_; }
  const Gradients<T>& velocity() const { return velocity_; }

 private:
  Gradients<T> velocity_;
};

}  // namespace scanpriv::nn
