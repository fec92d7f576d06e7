#include "envid/model/layers.hpp"

#include <algorithm>
#include <cmath>

#include "envid/error.hpp"

namespace envid::model {

using kernels::GemmShape;
using kernels::Trans;

namespace {

template <typename T>
void uniform_fill(std::vector<T>& v, double bound, Rng& rng) {
  for (T& x : v) x = static_cast<T>(uniform(rng, -bound, bound));
}

}  // namespace

template <typename T>
Conv2d<T>::Conv2d(kernels::ImageShape in, std::size_t out_channels, std::size_t kernel)
    : in_(in),
      out_channels_(out_channels),
      kernel_(kernel),
      weight_("conv.weight", {out_channels, in.channels * kernel * kernel}),
      bias_("conv.bias", {out_channels}) {
  if (kernel % 2 == 0) throw Error(ErrorKind::kInvalidArgument, "conv kernel must be odd");
}

template <typename T>
void Conv2d<T>::initialize(Rng& rng) {
  uniform_fill(weight_.value, std::sqrt(6.0 / static_cast<double>(weight_.shape[1])), rng);
  std::fill(bias_.value.begin(), bias_.value.end(), T(0));
}

template <typename T>
void Conv2d<T>::forward(std::span<const T> in, std::span<T> out, std::size_t batch,
                        const PassContext&) {
  const std::size_t hw = in_.height * in_.width;
  const std::size_t depth = weight_.shape[1];
  columns_.resize(depth * hw);
  for (std::size_t b = 0; b < batch; ++b) {
    kernels::im2col<T>(in_, kernel_, kernel_ / 2, in.subspan(b * in_size(), in_size()), columns_);
    auto y = out.subspan(b * out_size(), out_size());
    kernels::gemm<T>(Trans::kNo, Trans::kNo, {out_channels_, hw, depth}, weight_.value, columns_,
                     y, false);
    kernels::add_row_bias<T>(out_channels_, hw, bias_.value, y);
  }
}

template <typename T>
void Conv2d<T>::backward(std::span<const T> in, std::span<const T>, std::span<const T> grad_out,
                         std::span<T> grad_in, std::size_t batch) {
  const std::size_t hw = in_.height * in_.width;
  const std::size_t depth = weight_.shape[1];
  columns_.resize(depth * hw);
  if (!grad_in.empty()) grad_columns_.resize(depth * hw);
  for (std::size_t b = 0; b < batch; ++b) {
    auto g = grad_out.subspan(b * out_size(), out_size());
    kernels::im2col<T>(in_, kernel_, kernel_ / 2, in.subspan(b * in_size(), in_size()), columns_);
    kernels::gemm<T>(Trans::kNo, Trans::kYes, {out_channels_, depth, hw}, g, columns_,
                     weight_.grad, true);
    kernels::accumulate_row_sums<T>(out_channels_, hw, g, bias_.grad);
    if (grad_in.empty()) continue;
    kernels::gemm<T>(Trans::kYes, Trans::kNo, {depth, hw, out_channels_}, weight_.value, g,
                     grad_columns_, false);
    kernels::col2im<T>(in_, kernel_, kernel_ / 2, grad_columns_,
                       grad_in.subspan(b * in_size(), in_size()));
  }
}

template <typename T>
void Relu<T>::forward(std::span<const T> in, std::span<T> out, std::size_t batch,
                      const PassContext&) {
  kernels::relu_forward<T>(in.first(batch * size_), out.first(batch * size_));
}

template <typename T>
void Relu<T>::backward(std::span<const T>, std::span<const T> out, std::span<const T> grad_out,
                       std::span<T> grad_in, std::size_t batch) {
  if (grad_in.empty()) return;
  const std::size_t n = batch * size_;
  kernels::relu_backward<T>(out.first(n), grad_out.first(n), grad_in.first(n));
}

template <typename T>
void MaxPool2x2<T>::forward(std::span<const T> in, std::span<T> out, std::size_t batch,
                            const PassContext&) {
  const std::size_t n_out = out_size();
  argmax_.resize(batch * n_out);
  for (std::size_t b = 0; b < batch; ++b)
    kernels::maxpool2x2_forward<T>(in_, in.subspan(b * in_size(), in_size()),
                                   out.subspan(b * n_out, n_out),
                                   std::span(argmax_).subspan(b * n_out, n_out));
}

template <typename T>
void MaxPool2x2<T>::backward(std::span<const T>, std::span<const T>, std::span<const T> grad_out,
                             std::span<T> grad_in, std::size_t batch) {
  if (grad_in.empty()) return;
  const std::size_t n_out = out_size();
  std::fill_n(grad_in.begin(), batch * in_size(), T(0));
  for (std::size_t b = 0; b < batch; ++b)
    kernels::maxpool2x2_backward<T>(grad_out.subspan(b * n_out, n_out),
                                    std::span<const std::uint32_t>(argmax_).subspan(b * n_out, n_out),
                                    grad_in.subspan(b * in_size(), in_size()));
}

template <typename T>
void Dropout<T>::forward(std::span<const T> in, std::span<T> out, std::size_t batch,
                         const PassContext& ctx) {
  const std::size_t n = batch * size_;
  if (!ctx.training || rate_ <= 0.0) {
    mask_.clear();
    std::copy_n(in.begin(), n, out.begin());
    return;
  }
  if (ctx.rng == nullptr) throw Error(ErrorKind::kInvalidArgument, "dropout needs an RNG");
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate_));
  mask_.resize(n);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    mask_[i] = u(*ctx.rng) >= rate_ ? keep_scale : T(0);
    out[i] = in[i] * mask_[i];
  }
}

template <typename T>
void Dropout<T>::backward(std::span<const T>, std::span<const T>, std::span<const T> grad_out,
                          std::span<T> grad_in, std::size_t batch) {
  if (grad_in.empty()) return;
  const std::size_t n = batch * size_;
  if (mask_.empty()) {
    std::copy_n(grad_out.begin(), n, grad_in.begin());
    return;
  }
  for (std::size_t i = 0; i < n; ++i) grad_in[i] = grad_out[i] * mask_[i];
}

template <typename T>
Linear<T>::Linear(std::size_t in, std::size_t out, std::string name)
    : in_(in), out_(out), weight_(name + ".weight", {out, in}), bias_(name + ".bias", {out}) {}

template <typename T>
void Linear<T>::initialize(Rng& rng) {
  uniform_fill(weight_.value, std::sqrt(6.0 / static_cast<double>(in_)), rng);
  std::fill(bias_.value.begin(), bias_.value.end(), T(0));
}

template <typename T>
void Linear<T>::forward(std::span<const T> in, std::span<T> out, std::size_t batch,
                        const PassContext&) {
  kernels::gemm<T>(Trans::kNo, Trans::kYes, {batch, out_, in_}, in.first(batch * in_),
                   weight_.value, out.first(batch * out_), false);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t j = 0; j < out_; ++j) out[b * out_ + j] += bias_.value[j];
}

template <typename T>
void Linear<T>::backward(std::span<const T> in, std::span<const T>, std::span<const T> grad_out,
                         std::span<T> grad_in, std::size_t batch) {
  kernels::gemm<T>(Trans::kYes, Trans::kNo, {out_, in_, batch}, grad_out.first(batch * out_),
                   in.first(batch * in_), weight_.grad, true);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t j = 0; j < out_; ++j) bias_.grad[j] += grad_out[b * out_ + j];
  if (grad_in.empty()) return;
  kernels::gemm<T>(Trans::kNo, Trans::kNo, {batch, in_, out_}, grad_out.first(batch * out_),
                   weight_.value, grad_in.first(batch * in_), false);
}

template <typename T>
void Sequential<T>::add(std::unique_ptr<Layer<T>> layer) {
  if (!layers_.empty() && layers_.back()->out_size() != layer->in_size())
    throw Error(ErrorKind::kShapeMismatch, "layer " + layer->kind() + " expects " +
                                               std::to_string(layer->in_size()) + " inputs, got " +
                                               std::to_string(layers_.back()->out_size()));
  layers_.push_back(std::move(layer));
}

template <typename T>
std::size_t Sequential<T>::in_size() const {
  return layers_.empty() ? 0 : layers_.front()->in_size();
}

template <typename T>
std::size_t Sequential<T>::out_size() const {
  return layers_.empty() ? 0 : layers_.back()->out_size();
}

template <typename T>
std::span<const T> Sequential<T>::forward(std::span<const T> input, std::size_t batch,
                                          const PassContext& ctx) {
  if (input.size() != batch * in_size())
    throw Error(ErrorKind::kShapeMismatch, "expected " + std::to_string(batch * in_size()) +
                                               " inputs, got " + std::to_string(input.size()));
  acts_.resize(layers_.size() + 1);
  acts_[0].assign(input.begin(), input.end());
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    acts_[i + 1].resize(batch * layers_[i]->out_size());
    layers_[i]->forward(acts_[i], acts_[i + 1], batch, ctx);
  }
  batch_ = batch;
  recorded_ = true;
  return acts_.back();
}

template <typename T>
std::span<const T> Sequential<T>::backward(std::span<const T> grad_out, bool input_grad) {
  if (!recorded_) throw Error(ErrorKind::kGraphNotRecorded, "backward without a recorded forward");
  if (grad_out.size() != batch_ * out_size())
    throw Error(ErrorKind::kShapeMismatch, "gradient size does not match the recorded output");
  grad_a_.assign(grad_out.begin(), grad_out.end());
  for (std::size_t i = layers_.size(); i-- > 0;) {
    const bool want_input = i > 0 || input_grad;
    if (want_input) grad_b_.resize(batch_ * layers_[i]->in_size());
    layers_[i]->backward(acts_[i], acts_[i + 1], grad_a_,
                         want_input ? std::span<T>(grad_b_) : std::span<T>(), batch_);
    if (want_input) std::swap(grad_a_, grad_b_);
  }
  recorded_ = false;
  if (!input_grad) return {};
  return grad_a_;
}

template <typename T>
void Sequential<T>::forget() {
  acts_.clear();
  recorded_ = false;
}

template <typename T>
std::vector<Tensor<T>*> Sequential<T>::parameters() {
  std::vector<Tensor<T>*> out;
  for (auto& l : layers_)
    for (auto* p : l->parameters()) out.push_back(p);
  return out;
}

template <typename T>
void Sequential<T>::initialize(Rng& rng) {
  for (auto& l : layers_) l->initialize(rng);
}

#define ENVID_LAYERS(T)            \
  template class Conv2d<T>;        \
  template class Relu<T>;          \
  template class MaxPool2x2<T>;    \
  template class Dropout<T>;       \
  template class Linear<T>;        \
  template class Sequential<T>;
ENVID_LAYERS(float)
ENVID_LAYERS(double)
#undef ENVID_LAYERS

}  // namespace envid::model
