#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

#include "scanpriv/hash.hpp"
#include "scanpriv/nn/loss.hpp"
#include "scanpriv/nn/network.hpp"

namespace scanpriv::nn {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using VecMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>;
template <typename T>
using ConstVecMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>;

struct Geometry {
  int channels;
  int height;
  int width;
  int kernel;
  int stride;
  int pad;
  int out_h;
  int out_w;
};

// cols[(c*k + ki)*k + kj][oh*out_w + ow] = x[c][oh*s - p + ki][ow*s - p + kj]
template <typename T>
void im2col(const T* x, const Geometry& g, T* cols) {
  const int k = g.kernel;
  const std::size_t ncols = static_cast<std::size_t>(g.out_h) * g.out_w;
  for (int c = 0; c < g.channels; ++c) {
    const T* plane = x + static_cast<std::size_t>(c) * g.height * g.width;
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        T* row = cols + (static_cast<std::size_t>(c * k + ki) * k + kj) * ncols;
        for (int oh = 0; oh < g.out_h; ++oh) {
          const int ih = oh * g.stride - g.pad + ki;
          T* dst = row + static_cast<std::size_t>(oh) * g.out_w;
          if (ih < 0 || ih >= g.height) {
            std::fill(dst, dst + g.out_w, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(ih) * g.width;
          if (g.stride == 1) {
            const int lo = std::max(0, g.pad - kj);
            const int hi = std::min(g.out_w, g.width + g.pad - kj);
            std::fill(dst, dst + std::max(lo, 0), T(0));
            for (int ow = lo; ow < hi; ++ow) dst[ow] = src[ow - g.pad + kj];
            std::fill(dst + std::max(hi, lo), dst + g.out_w, T(0));
          } else {
            for (int ow = 0; ow < g.out_w; ++ow) {
              const int iw = ow * g.stride - g.pad + kj;
              dst[ow] = (iw >= 0 && iw < g.width) ? src[iw] : T(0);
            }
          }
        }
      }
    }
  }
}

// Adjoint of im2col: accumulates cols back into x (which is not cleared).
template <typename T>
void col2im(const T* cols, const Geometry& g, T* x) {
  const int k = g.kernel;
  const std::size_t ncols = static_cast<std::size_t>(g.out_h) * g.out_w;
  for (int c = 0; c < g.channels; ++c) {
    T* plane = x + static_cast<std::size_t>(c) * g.height * g.width;
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        const T* row =
            cols + (static_cast<std::size_t>(c * k + ki) * k + kj) * ncols;
        for (int oh = 0; oh < g.out_h; ++oh) {
          const int ih = oh * g.stride - g.pad + ki;
          if (ih < 0 || ih >= g.height) continue;
          const T* src = row + static_cast<std::size_t>(oh) * g.out_w;
          T* dst = plane + static_cast<std::size_t>(ih) * g.width;
          for (int ow = 0; ow < g.out_w; ++ow) {
            const int iw = ow * g.stride - g.pad + kj;
            if (iw >= 0 && iw < g.width) dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

void require_rank4(const Shape& s, int channels, const char* who) {
  if (s.size() != 4 || s[1] != channels) {
    throw ShapeError(std::string(who) + ": expected (N, " +
                     std::to_string(channels) + ", H, W), got " +
                     shape_string(s));
  }
}

template <typename T>
void uniform_fill(Tensor<T>& t, double bound, Rng& rng) {
  for (T& v : t.values()) v = static_cast<T>(rng.uniform(-bound, bound));
}

}  // namespace

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::kConv: return "conv";
    case LayerKind::kTransposedConv: return "transposed-conv";
    case LayerKind::kLinear: return "fully-connected";
    case LayerKind::kRelu: return "relu";
    case LayerKind::kMaxPool: return "maxpool";
    case LayerKind::kDropout: return "dropout";
  }
  return "unknown";
}

// ---------------------------------------------------------------- Conv2d

template <typename T>
Conv2d<T>::Conv2d(int in_channels, int out_channels, int kernel, int stride)
    : in_(in_channels), out_(out_channels), k_(kernel), stride_(stride),
      pad_((kernel - 1) / 2) {
  params_.emplace_back(Shape{out_, in_, k_, k_});
  params_.emplace_back(Shape{out_});
}

template <typename T>
Shape Conv2d<T>::output_shape(const Shape& in) const {
  require_rank4(in, in_, "conv");
  return {in[0], out_, (in[2] + 2 * pad_ - k_) / stride_ + 1,
          (in[3] + 2 * pad_ - k_) / stride_ + 1};
}

template <typename T>
void Conv2d<T>::init(Rng& rng) {
  uniform_fill(params_[0], std::sqrt(6.0 / (in_ * k_ * k_)), rng);
  params_[1].fill(T(0));
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x, LayerCache<T>* cache,
                             Rng*) const {
  const Shape os = output_shape(x.shape());
  const Geometry g{in_, x.dim(2), x.dim(3), k_, stride_, pad_, os[2], os[3]};
  const int rows = in_ * k_ * k_;
  const int ncols = g.out_h * g.out_w;
  Tensor<T> y(os);
  AlignedVector<T> cols(static_cast<std::size_t>(rows) * ncols);
  ConstMatMap<T> w(params_[0].data(), out_, rows);
  ConstVecMap<T> b(params_[1].data(), out_);
  for (int n = 0; n < x.dim(0); ++n) {
    im2col(x.data() + n * x.stride0(), g, cols.data());
    MatMap<T> out(y.data() + n * y.stride0(), out_, ncols);
    out.noalias() = w * ConstMatMap<T>(cols.data(), rows, ncols);
    out.colwise() += b;
  }
  if (cache) cache->input = x;
  return y;
}

template <typename T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& dy, const LayerCache<T>& cache,
                              std::span<Tensor<T>> grads,
                              bool need_input_grad) const {
  const Tensor<T>& x = cache.input;
  const Geometry g{in_, x.dim(2), x.dim(3), k_, stride_, pad_, dy.dim(2),
                   dy.dim(3)};
  const int rows = in_ * k_ * k_;
  const int ncols = g.out_h * g.out_w;
  AlignedVector<T> cols(static_cast<std::size_t>(rows) * ncols);
  AlignedVector<T> dcols;
  Tensor<T> dx;
  if (need_input_grad) {
    dx = Tensor<T>(x.shape());
    dcols.resize(cols.size());
  }
  ConstMatMap<T> w(params_[0].data(), out_, rows);
  MatMap<T> dw(grads[0].data(), out_, rows);
  VecMap<T> db(grads[1].data(), out_);
  for (int n = 0; n < x.dim(0); ++n) {
    ConstMatMap<T> d(dy.data() + n * dy.stride0(), out_, ncols);
    im2col(x.data() + n * x.stride0(), g, cols.data());
    dw.noalias() += d * ConstMatMap<T>(cols.data(), rows, ncols).transpose();
    db += d.rowwise().sum();
    if (need_input_grad) {
      MatMap<T>(dcols.data(), rows, ncols).noalias() = w.transpose() * d;
      col2im(dcols.data(), g, dx.data() + n * dx.stride0());
    }
  }
  return dx;
}

// ------------------------------------------------------- ConvTranspose2d

template <typename T>
ConvTranspose2d<T>::ConvTranspose2d(int in_channels, int out_channels,
                                    int kernel, int stride)
    : in_(in_channels), out_(out_channels), k_(kernel), stride_(stride),
      pad_((kernel - 1) / 2) {
  params_.emplace_back(Shape{in_, out_, k_, k_});
  params_.emplace_back(Shape{out_});
}

template <typename T>
Shape ConvTranspose2d<T>::output_shape(const Shape& in) const {
  require_rank4(in, in_, "transposed conv");
  return {in[0], out_, in[2] * stride_, in[3] * stride_};
}

template <typename T>
void ConvTranspose2d<T>::init(Rng& rng) {
  const double fan_in =
      static_cast<double>(in_) * k_ * k_ / (stride_ * stride_);
  uniform_fill(params_[0], std::sqrt(6.0 / fan_in), rng);
  params_[1].fill(T(0));
}

// The transposed convolution is the adjoint of a strided convolution from
// the (out, H*s, W*s) output grid to the (in, H, W) input grid.
template <typename T>
Tensor<T> ConvTranspose2d<T>::forward(const Tensor<T>& x, LayerCache<T>* cache,
                                      Rng*) const {
  const Shape os = output_shape(x.shape());
  const Geometry g{out_, os[2], os[3], k_, stride_, pad_, x.dim(2), x.dim(3)};
  const int rows = out_ * k_ * k_;
  const int ncols = g.out_h * g.out_w;
  Tensor<T> y(os);
  AlignedVector<T> cols(static_cast<std::size_t>(rows) * ncols);
  ConstMatMap<T> w(params_[0].data(), in_, rows);
  for (int n = 0; n < x.dim(0); ++n) {
    MatMap<T>(cols.data(), rows, ncols).noalias() =
        w.transpose() * ConstMatMap<T>(x.data() + n * x.stride0(), in_, ncols);
    col2im(cols.data(), g, y.data() + n * y.stride0());
  }
  const std::size_t plane = static_cast<std::size_t>(os[2]) * os[3];
  for (int n = 0; n < os[0]; ++n) {
    for (int c = 0; c < out_; ++c) {
      T* p = y.data() + n * y.stride0() + c * plane;
      const T b = params_[1][static_cast<std::size_t>(c)];
      for (std::size_t i = 0; i < plane; ++i) p[i] += b;
    }
  }
  if (cache) cache->input = x;
  return y;
}

template <typename T>
Tensor<T> ConvTranspose2d<T>::backward(const Tensor<T>& dy,
                                       const LayerCache<T>& cache,
                                       std::span<Tensor<T>> grads,
                                       bool need_input_grad) const {
  const Tensor<T>& x = cache.input;
  const Geometry g{out_, dy.dim(2), dy.dim(3), k_, stride_, pad_, x.dim(2),
                   x.dim(3)};
  const int rows = out_ * k_ * k_;
  const int ncols = g.out_h * g.out_w;
  AlignedVector<T> cols(static_cast<std::size_t>(rows) * ncols);
  Tensor<T> dx;
  if (need_input_grad) dx = Tensor<T>(x.shape());
  ConstMatMap<T> w(params_[0].data(), in_, rows);
  MatMap<T> dw(grads[0].data(), in_, rows);
  const std::size_t plane = static_cast<std::size_t>(dy.dim(2)) * dy.dim(3);
  for (int n = 0; n < x.dim(0); ++n) {
    im2col(dy.data() + n * dy.stride0(), g, cols.data());
    ConstMatMap<T> c(cols.data(), rows, ncols);
    ConstMatMap<T> xn(x.data() + n * x.stride0(), in_, ncols);
    dw.noalias() += xn * c.transpose();
    if (need_input_grad) {
      MatMap<T>(dx.data() + n * dx.stride0(), in_, ncols).noalias() = w * c;
    }
    for (int ch = 0; ch < out_; ++ch) {
      const T* p = dy.data() + n * dy.stride0() + ch * plane;
      T s = 0;
      for (std::size_t i = 0; i < plane; ++i) s += p[i];
      grads[1][static_cast<std::size_t>(ch)] += s;
    }
  }
  return dx;
}

// ---------------------------------------------------------------- Linear

template <typename T>
Linear<T>::Linear(int in_features, int out_features, double gain)
    : in_(in_features), out_(out_features), gain_(gain) {
  params_.emplace_back(Shape{out_, in_});
  params_.emplace_back(Shape{out_});
}

template <typename T>
Shape Linear<T>::output_shape(const Shape& in) const {
  if (in.empty() || shape_size(in) / static_cast<std::size_t>(in[0]) !=
                        static_cast<std::size_t>(in_)) {
    throw ShapeError("fully connected: expected " + std::to_string(in_) +
                     " features per sample, got " + shape_string(in));
  }
  return {in[0], out_};
}

template <typename T>
void Linear<T>::init(Rng& rng) {
  uniform_fill(params_[0], gain_ * std::sqrt(3.0 / in_), rng);
  params_[1].fill(T(0));
}

template <typename T>
Tensor<T> Linear<T>::forward(const Tensor<T>& x, LayerCache<T>* cache,
                             Rng*) const {
  const Shape os = output_shape(x.shape());
  Tensor<T> y(os);
  ConstMatMap<T> xm(x.data(), os[0], in_);
  ConstMatMap<T> w(params_[0].data(), out_, in_);
  MatMap<T> ym(y.data(), os[0], out_);
  ym.noalias() = xm * w.transpose();
  ym.rowwise() += ConstVecMap<T>(params_[1].data(), out_).transpose();
  if (cache) cache->input = x;
  return y;
}

template <typename T>
Tensor<T> Linear<T>::backward(const Tensor<T>& dy, const LayerCache<T>& cache,
                              std::span<Tensor<T>> grads,
                              bool need_input_grad) const {
  const Tensor<T>& x = cache.input;
  const int n = dy.dim(0);
  ConstMatMap<T> d(dy.data(), n, out_);
  ConstMatMap<T> xm(x.data(), n, in_);
  MatMap<T>(grads[0].data(), out_, in_).noalias() += d.transpose() * xm;
  VecMap<T>(grads[1].data(), out_) += d.colwise().sum().transpose();
  Tensor<T> dx;
  if (need_input_grad) {
    dx = Tensor<T>(x.shape());
    MatMap<T>(dx.data(), n, in_).noalias() =
        d * ConstMatMap<T>(params_[0].data(), out_, in_);
  }
  return dx;
}

// ------------------------------------------------------------------ Relu

template <typename T>
Tensor<T> Relu<T>::forward(const Tensor<T>& x, LayerCache<T>* cache,
                           Rng*) const {
  Tensor<T> y = x;
  for (T& v : y.values()) v = v > T(0) ? v : T(0);
  if (cache) cache->output = y;
  return y;
}

template <typename T>
Tensor<T> Relu<T>::backward(const Tensor<T>& dy, const LayerCache<T>& cache,
                            std::span<Tensor<T>>, bool need_input_grad) const {
  if (!need_input_grad) return {};
  Tensor<T> dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i) {
    if (!(cache.output[i] > T(0))) dx[i] = T(0);
  }
  return dx;
}

// -------------------------------------------------------------- MaxPool2

template <typename T>
Shape MaxPool2<T>::output_shape(const Shape& in) const {
  if (in.size() != 4 || in[2] % 2 != 0 || in[3] % 2 != 0) {
    throw ShapeError("maxpool: expected (N, C, even H, even W), got " +
                     shape_string(in));
  }
  return {in[0], in[1], in[2] / 2, in[3] / 2};
}

template <typename T>
Tensor<T> MaxPool2<T>::forward(const Tensor<T>& x, LayerCache<T>* cache,
                               Rng*) const {
  const Shape os = output_shape(x.shape());
  Tensor<T> y(os);
  const int h = x.dim(2);
  const int w = x.dim(3);
  const std::size_t planes = static_cast<std::size_t>(os[0]) * os[1];
  std::vector<std::uint32_t> idx;
  if (cache) idx.resize(y.size());
  std::size_t o = 0;
  for (std::size_t p = 0; p < planes; ++p) {
    const std::size_t base = p * static_cast<std::size_t>(h) * w;
    for (int r = 0; r < os[2]; ++r) {
      for (int c = 0; c < os[3]; ++c, ++o) {
        std::size_t best = base + static_cast<std::size_t>(2 * r) * w + 2 * c;
        for (std::size_t cand :
             {best + 1, best + static_cast<std::size_t>(w),
              best + static_cast<std::size_t>(w) + 1}) {
          if (x[cand] > x[best]) best = cand;
        }
        y[o] = x[best];
        if (cache) idx[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
  if (cache) {
    cache->index = std::move(idx);
    cache->input = Tensor<T>(x.shape());  // shape holder for backward
  }
  return y;
}

template <typename T>
Tensor<T> MaxPool2<T>::backward(const Tensor<T>& dy, const LayerCache<T>& cache,
                                std::span<Tensor<T>>,
                                bool need_input_grad) const {
  if (!need_input_grad) return {};
  Tensor<T> dx(cache.input.shape());
  for (std::size_t i = 0; i < dy.size(); ++i) dx[cache.index[i]] += dy[i];
  return dx;
}

// --------------------------------------------------------------- Dropout

template <typename T>
Tensor<T> Dropout<T>::forward(const Tensor<T>& x, LayerCache<T>* cache,
                              Rng* rng) const {
  if (!cache || rate_ <= 0.0) {
    if (cache) cache->index.assign(x.size(), 1);
    return x;
  }
  if (!rng) throw std::logic_error("dropout in training mode needs an rng");
  Tensor<T> y = x;
  const T scale = static_cast<T>(1.0 / (1.0 - rate_));
  cache->index.resize(x.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const bool keep = !rng->bernoulli(rate_);
    cache->index[i] = keep ? 1u : 0u;
    y[i] = keep ? y[i] * scale : T(0);
  }
  return y;
}

template <typename T>
Tensor<T> Dropout<T>::backward(const Tensor<T>& dy, const LayerCache<T>& cache,
                               std::span<Tensor<T>>,
                               bool need_input_grad) const {
  if (!need_input_grad) return {};
  Tensor<T> dx = dy;
  const T scale = rate_ > 0.0 ? static_cast<T>(1.0 / (1.0 - rate_)) : T(1);
  for (std::size_t i = 0; i < dx.size(); ++i) {
    dx[i] = cache.index[i] ? dx[i] * scale : T(0);
  }
  return dx;
}

// --------------------------------------------------------------- Network

template <typename T>
Network<T>::Network(const Network& other) : sample_shape_(other.sample_shape_) {
  layers_.reserve(other.layers_.size());
  for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

template <typename T>
Network<T>& Network<T>::operator=(const Network& other) {
  if (this != &other) {
    Network copy(other);
    *this = std::move(copy);
  }
  return *this;
}

template <typename T>
Network<T>& Network<T>::add(std::string name, std::unique_ptr<Layer<T>> layer) {
  layer->set_name(std::move(name));
  Shape s = sample_shape_;
  s.insert(s.begin(), 1);
  for (const auto& l : layers_) s = l->output_shape(s);
  layer->output_shape(s);  // validates compatibility
  layers_.push_back(std::move(layer));
  return *this;
}

template <typename T>
Shape Network<T>::output_sample_shape() const {
  Shape s = sample_shape_;
  s.insert(s.begin(), 1);
  for (const auto& l : layers_) s = l->output_shape(s);
  s.erase(s.begin());
  return s;
}

template <typename T>
void Network<T>::check_input(const Tensor<T>& x) const {
  if (x.rank() != sample_shape_.size() + 1 ||
      !std::equal(sample_shape_.begin(), sample_shape_.end(),
                  x.shape().begin() + 1)) {
    throw ShapeError("network input " + shape_string(x.shape()) +
                     " does not match sample shape " +
                     shape_string(sample_shape_));
  }
}

template <typename T>
Tensor<T> Network<T>::infer(const Tensor<T>& x) const {
  check_input(x);
  Tensor<T> cur = x;
  for (const auto& l : layers_) cur = l->forward(cur, nullptr, nullptr);
  return cur;
}

template <typename T>
Tensor<T> Network<T>::forward(const Tensor<T>& x, Tape<T>& tape,
                              Rng* rng) const {
  check_input(x);
  tape.assign(layers_.size(), LayerCache<T>{});
  Tensor<T> cur = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    cur = layers_[i]->forward(cur, &tape[i], rng);
  }
  return cur;
}

template <typename T>
Tensor<T> Network<T>::backward(const Tensor<T>& dy, const Tape<T>& tape,
                               Gradients<T>& grads,
                               bool need_input_grad) const {
  if (tape.size() != layers_.size()) {
    throw std::logic_error("backward without a matching forward tape");
  }
  std::vector<std::size_t> offset(layers_.size() + 1, 0);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    offset[i + 1] = offset[i] + layers_[i]->params().size();
  }
  Tensor<T> cur = dy;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    const bool want = need_input_grad || i > 0;
    std::span<Tensor<T>> g(grads.data() + offset[i], offset[i + 1] - offset[i]);
    cur = layers_[i]->backward(cur, tape[i], g, want);
  }
  return cur;
}

template <typename T>
std::vector<Tensor<T>*> Network<T>::parameters() {
  std::vector<Tensor<T>*> out;
  for (auto& l : layers_) {
    for (Tensor<T>& p : l->params()) out.push_back(&p);
  }
  return out;
}

template <typename T>
std::vector<const Tensor<T>*> Network<T>::parameters() const {
  std::vector<const Tensor<T>*> out;
  for (const auto& l : layers_) {
    for (const Tensor<T>& p : std::as_const(*l).params()) out.push_back(&p);
  }
  return out;
}

template <typename T>
std::vector<std::string> Network<T>::parameter_names() const {
  std::vector<std::string> out;
  for (const auto& l : layers_) {
    for (const std::string& s : l->param_suffixes()) {
      out.push_back(l->name() + "." + s);
    }
  }
  return out;
}

template <typename T>
std::size_t Network<T>::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor<T>* p : parameters()) n += p->size();
  return n;
}

template <typename T>
Gradients<T> Network<T>::make_gradients() const {
  Gradients<T> g;
  for (const Tensor<T>* p : parameters()) g.emplace_back(p->shape());
  return g;
}

template <typename T>
void Network<T>::init(Rng& rng) {
  for (auto& l : layers_) l->init(rng);
}

template <typename T>
void Network<T>::copy_parameters_from(const Network& other) {
  auto dst = parameters();
  auto src = other.parameters();
  if (dst.size() != src.size()) {
    throw ShapeError("copy_parameters_from: architectures differ");
  }
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (dst[i]->shape() != src[i]->shape()) {
      throw ShapeError("copy_parameters_from: parameter shapes differ");
    }
    *dst[i] = *src[i];
  }
}

template <typename T>
std::uint64_t Network<T>::parameter_hash() const {
  Hasher h;
  for (const Tensor<T>* p : parameters()) h.values<T>(p->values());
  return h.digest();
}

// ----------------------------------------------------------------- Losses

template <typename T>
LossResult<T> l2_loss(const Tensor<T>& prediction, const Tensor<T>& target,
                      L2Reduction reduction) {
  if (prediction.shape() != target.shape()) {
    throw ShapeError("l2_loss: prediction " + shape_string(prediction.shape()) +
                     " vs target " + shape_string(target.shape()));
  }
  const double n = reduction == L2Reduction::kSumPerSample
                       ? prediction.dim(0)
                       : static_cast<double>(prediction.size());
  LossResult<T> r;
  r.grad = Tensor<T>(prediction.shape());
  double sum = 0.0;
  for (std::size_t i = 0; i < prediction.size(); ++i) {
    const double d = static_cast<double>(prediction[i]) - target[i];
    sum += d * d;
    r.grad[i] = static_cast<T>(d / n);
  }
  r.value = sum / (2.0 * n);
  return r;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
  if (logits.rank() != 2) throw ShapeError("softmax expects (N, K)");
  Tensor<T> p(logits.shape());
  const int n = logits.dim(0);
  const int k = logits.dim(1);
  for (int i = 0; i < n; ++i) {
    const T* row = logits.data() + static_cast<std::size_t>(i) * k;
    T* out = p.data() + static_cast<std::size_t>(i) * k;
    const double m = *std::max_element(row, row + k);
    double z = 0.0;
    for (int j = 0; j < k; ++j) z += std::exp(static_cast<double>(row[j]) - m);
    for (int j = 0; j < k; ++j) {
      out[j] = static_cast<T>(std::exp(static_cast<double>(row[j]) - m) / z);
    }
  }
  return p;
}

template <typename T>
LossResult<T> softmax_log_loss(const Tensor<T>& logits,
                               std::span<const int> labels) {
  if (logits.rank() != 2 ||
      labels.size() != static_cast<std::size_t>(logits.dim(0))) {
    throw ShapeError("softmax_log_loss: label count does not match batch");
  }
  const int n = logits.dim(0);
  const int k = logits.dim(1);
  LossResult<T> r;
  r.grad = softmax(logits);
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= k) throw ShapeError("label outside class range");
    T* row = r.grad.data() + static_cast<std::size_t>(i) * k;
    sum -= std::log(std::max(static_cast<double>(row[y]),
                             std::numeric_limits<double>::min()));
    row[y] -= T(1);
    for (int j = 0; j < k; ++j) row[j] /= static_cast<T>(n);
  }
  r.value = sum / n;
  return r;
}

template class Conv2d<float>;
template class Conv2d<double>;
template class ConvTranspose2d<float>;
template class ConvTranspose2d<double>;
template class Linear<float>;
template class Linear<double>;
template class Relu<float>;
template class Relu<double>;
template class MaxPool2<float>;
template class MaxPool2<double>;
template class Dropout<float>;
template class Dropout<double>;
template class Network<float>;
template class Network<double>;
template LossResult<float> l2_loss(const Tensor<float>&, const Tensor<float>&,
                                   L2Reduction);
template LossResult<double> l2_loss(const Tensor<double>&,
                                    const Tensor<double>&, L2Reduction);
template LossResult<float> softmax_log_loss(const Tensor<float>&,
                                            std::span<const int>);
template LossResult<double> softmax_log_loss(const Tensor<double>&,
                                             std::span<const int>);
template Tensor<float> softmax(const Tensor<float>&);
template Tensor<double> softmax(const Tensor<double>&);

}  // namespace scanpriv::nn
