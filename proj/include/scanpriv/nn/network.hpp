#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "scanpriv/nn/layers.hpp"

namespace scanpriv::nn {

template <typename T>
using Tape = std::vector<LayerCache<T>>;

// Parameter gradients, aligned with Network::parameters().
template <typename T>
using Gradients = std::vector<Tensor<T>>;

// Sequential stack of layers with a fixed per-sample input shape.
template <typename T>
class Network {
 public:
  Network() = default;
  explicit Network(Shape sample_shape) : sample_shape_(std::move(sample_shape)) {}
  Network(const Network& other);
  Network& operator=(const Network& other);
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  // Appends a layer named `name`; parameters are named "<name>.weight" etc.
  Network& add(std::string name, std::unique_ptr<Layer<T>> layer);

  const Shape& sample_shape() const { return sample_shape_; }
  Shape output_sample_shape() const;
  std::size_t layer_count() const { return layers_.size(); }
  const Layer<T>& layer(std::size_t i) const { return *layers_[i]; }

  Tensor<T> infer(const Tensor<T>& x) const;
  Tensor<T> forward(const Tensor<T>& x, Tape<T>& tape, Rng* rng) const;
  Tensor<T> backward(const Tensor<T>& dy, const Tape<T>& tape,
                     Gradients<T>& grads, bool need_input_grad = false) const;

  std::vector<Tensor<T>*> parameters();
  std::vector<const Tensor<T>*> parameters() const;
  std::vector<std::string> parameter_names() const;
  std::size_t parameter_count() const;
  Gradients<T> make_gradients() const;

  void init(Rng& rng);
  void copy_parameters_from(const Network& other);
  // FNV-1a over all parameter values in order.
  std::uint64_t parameter_hash() const;

 private:
  void check_input(const Tensor<T>& x) const;

  Shape sample_shape_;
  std::vector<std::unique_ptr<Layer<T>>> layers_;
};

extern template class Network<float>;
extern template class Network<double>;

}  // namespace scanpriv::nn
