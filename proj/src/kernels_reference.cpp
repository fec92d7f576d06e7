#include <algorithm>
#include <limits>

#include "envid/kernels/kernels.hpp"

namespace envid::kernels::reference {

template <typename T>
void gemm(Trans ta, Trans tb, GemmShape s, std::span<const T> a, std::span<const T> b,
          std::span<T> c, bool accumulate) {
  for (std::size_t i = 0; i < s.m; ++i) {
    for (std::size_t j = 0; j < s.n; ++j) {
      T sum = 0;
      for (std::size_t p = 0; p < s.k; ++p) {
        const T av = ta == Trans::kYes ? a[p * s.m + i] : a[i * s.k + p];
        const T bv = tb == Trans::kYes ? b[j * s.k + p] : b[p * s.n + j];
        sum += av * bv;
      }
      c[i * s.n + j] = accumulate ? c[i * s.n + j] + sum : sum;
    }
  }
}

template <typename T>
void im2col(ImageShape in, std::size_t kernel, std::size_t pad, std::span<const T> image,
            std::span<T> columns) {
  const std::size_t hw = in.height * in.width;
  for (std::size_t ch = 0; ch < in.channels; ++ch) {
    for (std::size_t ky = 0; ky < kernel; ++ky) {
      for (std::size_t kx = 0; kx < kernel; ++kx) {
        const std::size_t row = (ch * kernel + ky) * kernel + kx;
        for (std::size_t y = 0; y < in.height; ++y) {
          for (std::size_t x = 0; x < in.width; ++x) {
            const auto sy = static_cast<std::ptrdiff_t>(y + ky) - static_cast<std::ptrdiff_t>(pad);
            const auto sx = static_cast<std::ptrdiff_t>(x + kx) - static_cast<std::ptrdiff_t>(pad);
            T v = 0;
            if (sy >= 0 && sx >= 0 && sy < static_cast<std::ptrdiff_t>(in.height) &&
                sx < static_cast<std::ptrdiff_t>(in.width)) {
              v = image[ch * hw + static_cast<std::size_t>(sy) * in.width +
                        static_cast<std::size_t>(sx)];
            }
            columns[row * hw + y * in.width + x] = v;
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(ImageShape in, std::size_t kernel, std::size_t pad, std::span<const T> columns,
            std::span<T> image) {
  const std::size_t hw = in.height * in.width;
  std::fill(image.begin(), image.begin() + in.size(), T(0));
  for (std::size_t ch = 0; ch < in.channels; ++ch) {
    for (std::size_t ky = 0; ky < kernel; ++ky) {
      for (std::size_t kx = 0; kx < kernel; ++kx) {
        const std::size_t row = (ch * kernel + ky) * kernel + kx;
        for (std::size_t y = 0; y < in.height; ++y) {
          for (std::size_t x = 0; x < in.width; ++x) {
            const auto sy = static_cast<std::ptrdiff_t>(y + ky) - static_cast<std::ptrdiff_t>(pad);
            const auto sx = static_cast<std::ptrdiff_t>(x + kx) - static_cast<std::ptrdiff_t>(pad);
            if (sy >= 0 && sx >= 0 && sy < static_cast<std::ptrdiff_t>(in.height) &&
                sx < static_cast<std::ptrdiff_t>(in.width)) {
              image[ch * hw + static_cast<std::size_t>(sy) * in.width +
                    static_cast<std::size_t>(sx)] += columns[row * hw + y * in.width + x];
            }
          }
        }
      }
    }
  }
}

template <typename T>
void maxpool2x2_forward(ImageShape in, std::span<const T> input, std::span<T> output,
                        std::span<std::uint32_t> argmax) {
  const std::size_t oh = in.height / 2;
  const std::size_t ow = in.width / 2;
  for (std::size_t ch = 0; ch < in.channels; ++ch) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        T best = -std::numeric_limits<T>::infinity();
        std::size_t best_at = 0;
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t at = (ch * in.height + 2 * y + dy) * in.width + 2 * x + dx;
            if (input[at] > best) {
              best = input[at];
              best_at = at;
            }
          }
        }
        const std::size_t o = (ch * oh + y) * ow + x;
        output[o] = best;
        argmax[o] = static_cast<std::uint32_t>(best_at);
      }
    }
  }
}

template <typename T>
void maxpool2x2_backward(std::span<const T> grad_output, std::span<const std::uint32_t> argmax,
                         std::span<T> grad_input) {
  for (std::size_t o = 0; o < grad_output.size(); ++o) grad_input[argmax[o]] += grad_output[o];
}

template <typename T>
void relu_forward(std::span<const T> input, std::span<T> output) {
  for (std::size_t i = 0; i < input.size(); ++i) output[i] = input[i] > T(0) ? input[i] : T(0);
}

template <typename T>
void relu_backward(std::span<const T> output, std::span<const T> grad_output,
                   std::span<T> grad_input) {
  for (std::size_t i = 0; i < output.size(); ++i)
    grad_input[i] = output[i] > T(0) ? grad_output[i] : T(0);
}

#define ENVID_INSTANTIATE(T)                                                                   \
  template void gemm<T>(Trans, Trans, GemmShape, std::span<const T>, std::span<const T>,      \
                        std::span<T>, bool);                                                   \
  template void im2col<T>(ImageShape, std::size_t, std::size_t, std::span<const T>,           \
                          std::span<T>);                                                       \
  template void col2im<T>(ImageShape, std::size_t, std::size_t, std::span<const T>,           \
                          std::span<T>);                                                       \
  template void maxpool2x2_forward<T>(ImageShape, std::span<const T>, std::span<T>,           \
                                      std::span<std::uint32_t>);                              \
  template void maxpool2x2_backward<T>(std::span<const T>, std::span<const std::uint32_t>,    \
                                       std::span<T>);                                          \
  template void relu_forward<T>(std::span<const T>, std::span<T>);                            \
  template void relu_backward<T>(std::span<const T>, std::span<const T>, std::span<T>);

ENVID_INSTANTIATE(float)
ENVID_INSTANTIATE(double)
#undef ENVID_INSTANTIATE

}  // namespace envid::kernels::reference
