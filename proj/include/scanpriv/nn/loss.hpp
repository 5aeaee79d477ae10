#pragma once

#include <span>
#include <vector>

#include "scanpriv/nn/tensor.hpp"

namespace scanpriv::nn {

template <typename T>
struct LossResult {
  double value = 0.0;
  Tensor<T> grad;  // dL/dprediction
};

// kSumPerSample: half squared error summed over each sample, averaged over
// the batch. kMean: half squared error averaged over every element.
enum class L2Reduction { kSumPerSample, kMean };

template <typename T>
LossResult<T> l2_loss(const Tensor<T>& prediction, const Tensor<T>& target,
                      L2Reduction reduction = L2Reduction::kSumPerSample);

// Mean over the batch of -log softmax(logits)[label].
template <typename T>
LossResult<T> softmax_log_loss(const Tensor<T>& logits,
                               std::span<const int> labels);

// Row-wise softmax of (N, K) logits.
template <typename T>
Tensor<T> softmax(const Tensor<T>& logits);

extern template LossResult<float> l2_loss(const Tensor<float>&,
                                          const Tensor<float>&, L2Reduction);
extern template LossResult<double> l2_loss(const Tensor<double>&,
                                           const Tensor<double>&, L2Reduction);
extern template LossResult<float> softmax_log_loss(const Tensor<float>&,
                                                   std::span<const int>);
extern template LossResult<double> softmax_log_loss(const Tensor<double>&,
                                                    std::span<const int>);
extern template Tensor<float> softmax(const Tensor<float>&);
extern template Tensor<double> softmax(const Tensor<double>&);

}  // namespace scanpriv::nn
