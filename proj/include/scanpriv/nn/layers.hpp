#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "scanpriv/nn/tensor.hpp"
#include "scanpriv/rng.hpp"

namespace scanpriv::nn {

enum class LayerKind {
  kConv,
  kTransposedConv,
  kLinear,
  kRelu,
  kMaxPool,
  kDropout,
};

std::string to_string(LayerKind kind);

// State a layer keeps between forward and backward in training mode.
template <typename T>
struct LayerCache {
  Tensor<T> input;
  Tensor<T> output;
  std::vector<std::uint32_t> index;
};

template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;

  virtual LayerKind kind() const = 0;
  virtual Shape output_shape(const Shape& input) const = 0;

  // cache == nullptr is evaluation mode: nothing is recorded and dropout is
  // the identity. Evaluation is const and safe to run concurrently.
  virtual Tensor<T> forward(const Tensor<T>& x, LayerCache<T>* cache,
                            Rng* rng) const = 0;

  // Accumulates parameter gradients into `grads` (aligned with params()) and
  // returns dL/dx, or an empty tensor when `need_input_grad` is false.
  virtual Tensor<T> backward(const Tensor<T>& dy, const LayerCache<T>& cache,
                             std::span<Tensor<T>> grads,
                             bool need_input_grad) const = 0;

  virtual std::span<Tensor<T>> params() { return {}; }
  virtual std::span<const Tensor<T>> params() const { return {}; }
  virtual std::vector<std::string> param_suffixes() const { return {}; }
  virtual void init(Rng&) {}
  virtual std::unique_ptr<Layer> clone() const = 0;

  const std::string& name() const { return name_; }
  void set_name(std::string n) { name_ = std::move(n); }

 private:
  std::string name_;
};

// 2-D convolution with square kernel, zero padding (k-1)/2 and the given
// stride. Weight (out, in, k, k), bias (out).
template <typename T>
class Conv2d final : public Layer<T> {
 public:
  Conv2d(int in_channels, int out_channels, int kernel, int stride = 1);

  LayerKind kind() const override { return LayerKind::kConv; }
  Shape output_shape(const Shape& input) const override;
  Tensor<T> forward(const Tensor<T>& x, LayerCache<T>* cache,
                    Rng* rng) const override;
  Tensor<T> backward(const Tensor<T>& dy, const LayerCache<T>& cache,
                     std::span<Tensor<T>> grads,
                     bool need_input_grad) const override;
  std::span<Tensor<T>> params() override { return params_; }
  std::span<const Tensor<T>> params() const override { return params_; }
  std::vector<std::string> param_suffixes() const override {
    return {"weight", "bias"};
  }
  void init(Rng& rng) override;
  std::unique_ptr<Layer<T>> clone() const override {
    return std::make_unique<Conv2d>(*this);
  }

  int in_channels() const { return in_; }
  int out_channels() const { return out_; }
  int kernel() const { return k_; }
  int stride() const { return stride_; }

 private:
  int in_, out_, k_, stride_, pad_;
  std::vector<Tensor<T>> params_;
};

// Transposed convolution that multiplies the spatial size by `stride`
// (padding (k-1)/2, output padding stride-1). Weight (in, out, k, k).
template <typename T>
class ConvTranspose2d final : public Layer<T> {
 public:
  ConvTranspose2d(int in_channels, int out_channels, int kernel,
                  int stride = 2);

  LayerKind kind() const override { return LayerKind::kTransposedConv; }
  Shape output_shape(const Shape& input) const override;
  Tensor<T> forward(const Tensor<T>& x, LayerCache<T>* cache,
                    Rng* rng) const override;
  Tensor<T> backward(const Tensor<T>& dy, const LayerCache<T>& cache,
                     std::span<Tensor<T>> grads,
                     bool need_input_grad) const override;
  std::span<Tensor<T>> params() override { return params_; }
  std::span<const Tensor<T>> params() const override { return params_; }
  std::vector<std::string> param_suffixes() const override {
    return {"weight", "bias"};
  }
  void init(Rng& rng) override;
  std::unique_ptr<Layer<T>> clone() const override {
    return std::make_unique<ConvTranspose2d>(*this);
  }

 private:
  int in_, out_, k_, stride_, pad_;
  std::vector<Tensor<T>> params_;
};

// Fully connected layer over the flattened per-sample input.
// Weight (out, in), bias (out). `gain` scales the uniform init bound
// sqrt(3 / fan_in); sqrt(2) suits ReLU-followed layers.
template <typename T>
class Linear final : public Layer<T> {
 public:
  Linear(int in_features, int out_features, double gain = 1.4142135623730951);

  LayerKind kind() const override { return LayerKind::kLinear; }
  Shape output_shape(const Shape& input) const override;
  Tensor<T> forward(const Tensor<T>& x, LayerCache<T>* cache,
                    Rng* rng) const override;
  Tensor<T> backward(const Tensor<T>& dy, const LayerCache<T>& cache,
                     std::span<Tensor<T>> grads,
                     bool need_input_grad) const override;
  std::span<Tensor<T>> params() override { return params_; }
  std::span<const Tensor<T>> params() const override { return params_; }
  std::vector<std::string> param_suffixes() const override {
    return {"weight", "bias"};
  }
  void init(Rng& rng) override;
  std::unique_ptr<Layer<T>> clone() const override {
    return std::make_unique<Linear>(*this);
  }

 private:
  int in_, out_;
  double gain_;
  std::vector<Tensor<T>> params_;
};

template <typename T>
class Relu final : public Layer<T> {
 public:
  LayerKind kind() const override { return LayerKind::kRelu; }
  Shape output_shape(const Shape& input) const override { return input; }
  Tensor<T> forward(const Tensor<T>& x, LayerCache<T>* cache,
                    Rng* rng) const override;
  Tensor<T> backward(const Tensor<T>& dy, const LayerCache<T>& cache,
                     std::span<Tensor<T>> grads,
                     bool need_input_grad) const override;
  std::unique_ptr<Layer<T>> clone() const override {
    return std::make_unique<Relu>(*this);
  }
};

// 2x2 max pooling with stride 2.
template <typename T>
class MaxPool2 final : public Layer<T> {
 public:
  LayerKind kind() const override { return LayerKind::kMaxPool; }
  Shape output_shape(const Shape& input) const override;
  Tensor<T> forward(const Tensor<T>& x, LayerCache<T>* cache,
                    Rng* rng) const override;
  Tensor<T> backward(const Tensor<T>& dy, const LayerCache<T>& cache,
                     std::span<Tensor<T>> grads,
                     bool need_input_grad) const override;
  std::unique_ptr<Layer<T>> clone() const override {
    return std::make_unique<MaxPool2>(*this);
  }
};

// Inverted dropout: active only in training mode.
template <typename T>
class Dropout final : public Layer<T> {
 public:
  explicit Dropout(double rate = 0.5) : rate_(rate) {}
  LayerKind kind() const override { return LayerKind::kDropout; }
  Shape output_shape(const Shape& input) const override { return input; }
  Tensor<T> forward(const Tensor<T>& x, LayerCache<T>* cache,
                    Rng* rng) const override;
  Tensor<T> backward(const Tensor<T>& dy, const LayerCache<T>& cache,
                     std::span<Tensor<T>> grads,
                     bool need_input_grad) const override;
  std::unique_ptr<Layer<T>> clone() const override {
    return std::make_unique<Dropout>(*this);
  }
  double rate() const { return rate_; }

 private:
  double rate_;
};

extern template class Conv2d<float>;
extern template class Conv2d<double>;
extern template class ConvTranspose2d<float>;
extern template class ConvTranspose2d<double>;
extern template class Linear<float>;
extern template class Linear<double>;
extern template class Relu<float>;
extern template class Relu<double>;
extern template class MaxPool2<float>;
extern template class MaxPool2<double>;
extern template class Dropout<float>;
extern template class Dropout<double>;

}  // namespace scanpriv::nn
