#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "envid/kernels/kernels.hpp"
#include "envid/model/tensor.hpp"
#include "envid/rng.hpp"

namespace envid::model {

struct PassContext {
  bool training = false;
  Rng* rng = nullptr;  // required by dropout in training mode
};

// A layer maps a batch of flat samples (batch x in_size) to (batch x
// out_size). State needed by backward (pool argmax, dropout mask) is kept
// from the most recent forward.
template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual std::string kind() const = 0;
  virtual std::size_t in_size() const = 0;
  virtual std::size_t out_size() const = 0;
  virtual void forward(std::span<const T> in, std::span<T> out, std::size_t batch,
                       const PassContext& ctx) = 0;
  // Accumulates parameter gradients; writes grad_in unless it is empty.
  virtual void backward(std::span<const T> in, std::span<const T> out,
                        std::span<const T> grad_out, std::span<T> grad_in,
                        std::size_t batch) = 0;
  virtual std::vector<Tensor<T>*> parameters() { return {}; }
  // Fan-in-scaled uniform weights, zero biases.
  virtual void initialize(Rng&) {}
};

// 3x3 (or k x k) stride-1 convolution, same padding.
template <typename T>
class Conv2d final : public Layer<T> {
 public:
  Conv2d(kernels::ImageShape in, std::size_t out_channels, std::size_t kernel = 3);
  std::string kind() const override { return "conv2d"; }
  std::size_t in_size() const override { return in_.size(); }
  std::size_t out_size() const override { return out_channels_ * in_.height * in_.width; }
  void forward(std::span<const T> in, std::span<T> out, std::size_t batch,
               const PassContext& ctx) override;
  void backward(std::span<const T> in, std::span<const T> out, std::span<const T> grad_out,
                std::span<T> grad_in, std::size_t batch) override;
  std::vector<Tensor<T>*> parameters() override { return {&weight_, &bias_}; }
  void initialize(Rng& rng) override;
  kernels::ImageShape output_shape() const { return {out_channels_, in_.height, in_.width}; }

 private:
  kernels::ImageShape in_;
  std::size_t out_channels_;
  std::size_t kernel_;
  Tensor<T> weight_;  // out_channels x (in_channels * k * k)
  Tensor<T> bias_;
  std::vector<T> columns_;
  std::vector<T> grad_columns_;
};

template <typename T>
class Relu final : public Layer<T> {
 public:
  explicit Relu(std::size_t size) : size_(size) {}
  std::string kind() const override { return "relu"; }
  std::size_t in_size() const override { return size_; }
  std::size_t out_size() const override { return size_; }
  void forward(std::span<const T> in, std::span<T> out, std::size_t batch,
               const PassContext& ctx) override;
  void backward(std::span<const T> in, std::span<const T> out, std::span<const T> grad_out,
                std::span<T> grad_in, std::size_t batch) override;

 private:
  std::size_t size_;
};

template <typename T>
class MaxPool2x2 final : public Layer<T> {
 public:
  explicit MaxPool2x2(kernels::ImageShape in) : in_(in) {}
  std::string kind() const override { return "maxpool2x2"; }
  std::size_t in_size() const override { return in_.size(); }
  std::size_t out_size() const override { return output_shape().size(); }
  void forward(std::span<const T> in, std::span<T> out, std::size_t batch,
               const PassContext& ctx) override;
  void backward(std::span<const T> in, std::span<const T> out, std::span<const T> grad_out,
                std::span<T> grad_in, std::size_t batch) override;
  kernels::ImageShape output_shape() const { return {in_.channels, in_.height / 2, in_.width / 2}; }

 private:
  kernels::ImageShape in_;
  std::vector<std::uint32_t> argmax_;
};

// Inverted dropout; identity outside training.
template <typename T>
class Dropout final : public Layer<T> {
 public:
  Dropout(std::size_t size, double rate) : size_(size), rate_(rate) {}
  std::string kind() const override { return "dropout"; }
  std::size_t in_size() const override { return size_; }
  std::size_t out_size() const override { return size_; }
  void forward(std::span<const T> in, std::span<T> out, std::size_t batch,
               const PassContext& ctx) override;
  void backward(std::span<const T> in, std::span<const T> out, std::span<const T> grad_out,
                std::span<T> grad_in, std::size_t batch) override;

 private:
  std::size_t size_;
  double rate_;
  std::vector<T> mask_;  // empty after an evaluation pass
};

// y = W x + b with W of shape out x in.
template <typename T>
class Linear final : public Layer<T> {
 public:
  Linear(std::size_t in, std::size_t out, std::string name = "linear");
  std::string kind() const override { return "linear"; }
  std::size_t in_size() const override { return in_; }
  std::size_t out_size() const override { return out_; }
  void forward(std::span<const T> in, std::span<T> out, std::size_t batch,
               const PassContext& ctx) override;
  void backward(std::span<const T> in, std::span<const T> out, std::span<const T> grad_out,
                std::span<T> grad_in, std::size_t batch) override;
  std::vector<Tensor<T>*> parameters() override { return {&weight_, &bias_}; }
  void initialize(Rng& rng) override;
  Tensor<T>& weight() { return weight_; }
  Tensor<T>& bias() { return bias_; }

 private:
  std::size_t in_, out_;
  Tensor<T> weight_;
  Tensor<T> bias_;
};

// Layer chain that records every intermediate activation of its last
// forward pass for the matching backward pass.
template <typename T>
class Sequential {
 public:
  void add(std::unique_ptr<Layer<T>> layer);
  std::size_t in_size() const;
  std::size_t out_size() const;
  bool empty() const { return layers_.empty(); }

  std::span<const T> forward(std::span<const T> input, std::size_t batch, const PassContext& ctx);
  // Returns the gradient w.r.t. the input (empty when !input_grad). Throws
  // kGraphNotRecorded without a preceding forward.
  std::span<const T> backward(std::span<const T> grad_out, bool input_grad);
  void forget();

  std::vector<Tensor<T>*> parameters();
  void initialize(Rng& rng);
  const std::vector<std::unique_ptr<Layer<T>>>& layers() const { return layers_; }
  Layer<T>& layer(std::size_t i) { return *layers_[i]; }

 private:
  std::vector<std::unique_ptr<Layer<T>>> layers_;
  std::vector<std::vector<T>> acts_;
  std::vector<T> grad_a_, grad_b_;
  std::size_t batch_ = 0;
  bool recorded_ = false;
};

}  // namespace envid::model
