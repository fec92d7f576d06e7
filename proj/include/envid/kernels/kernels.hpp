#pragma once

// Dense numeric kernels behind the convolutional model. Every kernel exists
// twice: a straightforward serial version in `reference` that the tests treat
// as ground truth, and an OpenMP-parallel version in `kernels` that the model
// uses. Parallel versions assign each output element to exactly one thread
// and accumulate in a fixed order, so results do not depend on thread count.

#include <cstddef>
#include <cstdint>
#include <span>

namespace envid::kernels {

enum class Trans : bool { kNo = false, kYes = true };

struct GemmShape {
  std::size_t m = 0;  // rows of op(A) and C
  std::size_t n = 0;  // cols of op(B) and C
  std::size_t k = 0;  // inner dimension
};

struct ImageShape {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t size() const { return channels * height * width; }
};

// C = op(A) * op(B) (+ C when accumulate). All matrices are dense row-major;
// A is m x k (k x m when transposed), B is k x n (n x k when transposed).
template <typename T>
void gemm(Trans ta, Trans tb, GemmShape s, std::span<const T> a, std::span<const T> b,
          std::span<T> c, bool accumulate);

// Unfolds a (C, H, W) image into a (C*kh*kw) x (H*W) column matrix for a
// stride-1 convolution with symmetric zero padding `pad`.
template <typename T>
void im2col(ImageShape in, std::size_t kernel, std::size_t pad, std::span<const T> image,
            std::span<T> columns);

// Adjoint of im2col: scatters columns back into `image` (overwrites it).
template <typename T>
void col2im(ImageShape in, std::size_t kernel, std::size_t pad, std::span<const T> columns,
            std::span<T> image);

// 2x2 max pooling with stride 2 (floor on odd sizes). `argmax` receives the
// flat input offset chosen for each output.
template <typename T>
void maxpool2x2_forward(ImageShape in, std::span<const T> input, std::span<T> output,
                        std::span<std::uint32_t> argmax);

// Adds each output gradient to the input position recorded in argmax.
// `grad_input` must be zeroed by the caller.
template <typename T>
void maxpool2x2_backward(std::span<const T> grad_output, std::span<const std::uint32_t> argmax,
                         std::span<T> grad_input);

template <typename T>
void relu_forward(std::span<const T> input, std::span<T> output);

// grad_input = grad_output where output > 0, else 0.
template <typename T>
void relu_backward(std::span<const T> output, std::span<const T> grad_output,
                   std::span<T> grad_input);

// Adds bias[r] to every element of row r of a rows x cols matrix.
template <typename T>
void add_row_bias(std::size_t rows, std::size_t cols, std::span<const T> bias, std::span<T> x);

// bias_grad[r] += sum over the row r of a rows x cols matrix.
template <typename T>
void accumulate_row_sums(std::size_t rows, std::size_t cols, std::span<const T> x,
                         std::span<T> bias_grad);

namespace reference {

template <typename T>
void gemm(Trans ta, Trans tb, GemmShape s, std::span<const T> a, std::span<const T> b,
          std::span<T> c, bool accumulate);
template <typename T>
void im2col(ImageShape in, std::size_t kernel, std::size_t pad, std::span<const T> image,
            std::span<T> columns);
template <typename T>
void col2im(ImageShape in, std::size_t kernel, std::size_t pad, std::span<const T> columns,
            std::span<T> image);
template <typename T>
void maxpool2x2_forward(ImageShape in, std::span<const T> input, std::span<T> output,
                        std::span<std::uint32_t> argmax);
template <typename T>
void maxpool2x2_backward(std::span<const T> grad_output, std::span<const std::uint32_t> argmax,
                         std::span<T> grad_input);
template <typename T>
void relu_forward(std::span<const T> input, std::span<T> output);
template <typename T>
void relu_backward(std::span<const T> output, std::span<const T> grad_output,
                   std::span<T> grad_input);

}  // namespace reference

// Sets the OpenMP team size used by the parallel kernels (0 keeps the runtime
// default). Returns the effective count.
int set_num_threads(int n);

}  // namespace envid::kernels
