#include <omp.h>

#include <algorithm>
#include <limits>
#include <vector>

#include "envid/kernels/kernels.hpp"

namespace envid::kernels {
namespace {

constexpr std::size_t kTileRows = 4;
constexpr std::size_t kTileCols = 64;
constexpr std::size_t kDepthBlock = 256;

template <typename T>
void transpose_into(std::size_t rows, std::size_t cols, const T* src, T* dst) {
  constexpr std::size_t kBlock = 32;
#pragma omp parallel for schedule(static)
  for (std::size_t r0 = 0; r0 < rows; r0 += kBlock) {
    const std::size_t r1 = std::min(rows, r0 + kBlock);
    for (std::size_t c0 = 0; c0 < cols; c0 += kBlock) {
      const std::size_t c1 = std::min(cols, c0 + kBlock);
      for (std::size_t r = r0; r < r1; ++r)
        for (std::size_t c = c0; c < c1; ++c) dst[c * rows + r] = src[r * cols + c];
    }
  }
}

// C[i0:i0+4, j0:j0+64] += A[i0:, k0:k1] * B[k0:k1, j0:]; full tile only.
template <typename T>
inline void full_tile(const T* a, const T* b, T* c, std::size_t n, std::size_t k,
                      std::size_t i0, std::size_t j0, std::size_t k0, std::size_t k1) {
  T acc[kTileRows][kTileCols];
  for (std::size_t r = 0; r < kTileRows; ++r)
    for (std::size_t q = 0; q < kTileCols; ++q) acc[r][q] = c[(i0 + r) * n + j0 + q];
  for (std::size_t p = k0; p < k1; ++p) {
    const T* brow = b + p * n + j0;
    const T a0 = a[(i0 + 0) * k + p];
    const T a1 = a[(i0 + 1) * k + p];
    const T a2 = a[(i0 + 2) * k + p];
    const T a3 = a[(i0 + 3) * k + p];
#pragma omp simd
    for (std::size_t q = 0; q < kTileCols; ++q) {
      acc[0][q] += a0 * brow[q];
      acc[1][q] += a1 * brow[q];
      acc[2][q] += a2 * brow[q];
      acc[3][q] += a3 * brow[q];
    }
  }
  for (std::size_t r = 0; r < kTileRows; ++r)
    for (std::size_t q = 0; q < kTileCols; ++q) c[(i0 + r) * n + j0 + q] = acc[r][q];
}

template <typename T>
inline void edge_tile(const T* a, const T* b, T* c, std::size_t n, std::size_t k,
                      std::size_t i0, std::size_t i1, std::size_t j0, std::size_t j1,
                      std::size_t k0, std::size_t k1) {
  for (std::size_t i = i0; i < i1; ++i) {
    T* crow = c + i * n;
    for (std::size_t p = k0; p < k1; ++p) {
      const T av = a[i * k + p];
      const T* brow = b + p * n;
      for (std::size_t j = j0; j < j1; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace

template <typename T>
void gemm(Trans ta, Trans tb, GemmShape s, std::span<const T> a, std::span<const T> b,
          std::span<T> c, bool accumulate) {
  const std::size_t m = s.m, n = s.n, k = s.k;
  if (m == 0 || n == 0) return;

  std::vector<T> a_packed;
  std::vector<T> b_packed;
  const T* ap = a.data();
  const T* bp = b.data();
  if (ta == Trans::kYes) {
    a_packed.resize(m * k);
    transpose_into(k, m, a.data(), a_packed.data());
    ap = a_packed.data();
  }
  if (tb == Trans::kYes) {
    b_packed.resize(k * n);
    transpose_into(n, k, b.data(), b_packed.data());
    bp = b_packed.data();
  }
  T* cp = c.data();
  if (!accumulate) {
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < m * n; ++i) cp[i] = T(0);
  }
  if (k == 0) return;

  const std::size_t row_tiles = (m + kTileRows - 1) / kTileRows;
  const std::size_t col_tiles = (n + kTileCols - 1) / kTileCols;
#pragma omp parallel for collapse(2) schedule(static)
  for (std::size_t jt = 0; jt < col_tiles; ++jt) {
    for (std::size_t it = 0; it < row_tiles; ++it) {
      const std::size_t i0 = it * kTileRows, i1 = std::min(m, i0 + kTileRows);
      const std::size_t j0 = jt * kTileCols, j1 = std::min(n, j0 + kTileCols);
      for (std::size_t k0 = 0; k0 < k; k0 += kDepthBlock) {
        const std::size_t k1 = std::min(k, k0 + kDepthBlock);
        if (i1 - i0 == kTileRows && j1 - j0 == kTileCols) {
          full_tile(ap, bp, cp, n, k, i0, j0, k0, k1);
        } else {
          edge_tile(ap, bp, cp, n, k, i0, i1, j0, j1, k0, k1);
        }
      }
    }
  }
}

template <typename T>
void im2col(ImageShape in, std::size_t kernel, std::size_t pad, std::span<const T> image,
            std::span<T> columns) {
  const std::size_t hw = in.height * in.width;
  const std::size_t rows = in.channels * kernel * kernel;
  const auto h = static_cast<std::ptrdiff_t>(in.height);
  const auto w = static_cast<std::ptrdiff_t>(in.width);
#pragma omp parallel for schedule(static)
  for (std::size_t row = 0; row < rows; ++row) {
    const std::size_t ch = row / (kernel * kernel);
    const auto ky = static_cast<std::ptrdiff_t>((row / kernel) % kernel) -
                    static_cast<std::ptrdiff_t>(pad);
    const auto kx = static_cast<std::ptrdiff_t>(row % kernel) - static_cast<std::ptrdiff_t>(pad);
    const T* plane = image.data() + ch * hw;
    T* out = columns.data() + row * hw;
    for (std::ptrdiff_t y = 0; y < h; ++y) {
      const std::ptrdiff_t sy = y + ky;
      T* orow = out + y * w;
      if (sy < 0 || sy >= h) {
        std::fill(orow, orow + w, T(0));
        continue;
      }
      const T* irow = plane + sy * w;
      const std::ptrdiff_t x_lo = std::max<std::ptrdiff_t>(0, -kx);
      const std::ptrdiff_t x_hi = std::min<std::ptrdiff_t>(w, w - kx);
      for (std::ptrdiff_t x = 0; x < x_lo; ++x) orow[x] = T(0);
      for (std::ptrdiff_t x = x_lo; x < x_hi; ++x) orow[x] = irow[x + kx];
      for (std::ptrdiff_t x = std::max(x_hi, x_lo); x < w; ++x) orow[x] = T(0);
    }
  }
}

template <typename T>
void col2im(ImageShape in, std::size_t kernel, std::size_t pad, std::span<const T> columns,
            std::span<T> image) {
  const std::size_t hw = in.height * in.width;
  const auto h = static_cast<std::ptrdiff_t>(in.height);
  const auto w = static_cast<std::ptrdiff_t>(in.width);
#pragma omp parallel for schedule(static)
  for (std::size_t ch = 0; ch < in.channels; ++ch) {
    T* plane = image.data() + ch * hw;
    std::fill(plane, plane + hw, T(0));
    for (std::size_t kk = 0; kk < kernel * kernel; ++kk) {
      const std::size_t row = ch * kernel * kernel + kk;
      const auto ky = static_cast<std::ptrdiff_t>(kk / kernel) - static_cast<std::ptrdiff_t>(pad);
      const auto kx = static_cast<std::ptrdiff_t>(kk % kernel) - static_cast<std::ptrdiff_t>(pad);
      const T* src = columns.data() + row * hw;
      for (std::ptrdiff_t y = 0; y < h; ++y) {
        const std::ptrdiff_t sy = y + ky;
        if (sy < 0 || sy >= h) continue;
        T* irow = plane + sy * w;
        const T* crow = src + y * w;
        const std::ptrdiff_t x_lo = std::max<std::ptrdiff_t>(0, -kx);
        const std::ptrdiff_t x_hi = std::min<std::ptrdiff_t>(w, w - kx);
        for (std::ptrdiff_t x = x_lo; x < x_hi; ++x) irow[x + kx] += crow[x];
      }
    }
  }
}

template <typename T>
void maxpool2x2_forward(ImageShape in, std::span<const T> input, std::span<T> output,
                        std::span<std::uint32_t> argmax) {
  const std::size_t oh = in.height / 2;
  const std::size_t ow = in.width / 2;
#pragma omp parallel for collapse(2) schedule(static)
  for (std::size_t ch = 0; ch < in.channels; ++ch) {
    for (std::size_t y = 0; y < oh; ++y) {
      const std::size_t base = (ch * in.height + 2 * y) * in.width;
      for (std::size_t x = 0; x < ow; ++x) {
        const std::size_t offsets[4] = {base + 2 * x, base + 2 * x + 1, base + in.width + 2 * x,
                                        base + in.width + 2 * x + 1};
        T best = -std::numeric_limits<T>::infinity();
        std::size_t best_at = offsets[0];
        for (std::size_t at : offsets) {
          if (input[at] > best) {
            best = input[at];
            best_at = at;
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
  // Pooling windows do not overlap, so each input receives at most one write.
#pragma omp parallel for schedule(static)
  for (std::size_t o = 0; o < grad_output.size(); ++o) grad_input[argmax[o]] += grad_output[o];
}

template <typename T>
void relu_forward(std::span<const T> input, std::span<T> output) {
  const std::size_t n = input.size();
#pragma omp parallel for simd schedule(static)
  for (std::size_t i = 0; i < n; ++i) output[i] = input[i] > T(0) ? input[i] : T(0);
}

template <typename T>
void relu_backward(std::span<const T> output, std::span<const T> grad_output,
                   std::span<T> grad_input) {
  const std::size_t n = output.size();
#pragma omp parallel for simd schedule(static)
  for (std::size_t i = 0; i < n; ++i) grad_input[i] = output[i] > T(0) ? grad_output[i] : T(0);
}

template <typename T>
void add_row_bias(std::size_t rows, std::size_t cols, std::span<const T> bias, std::span<T> x) {
#pragma omp parallel for schedule(static)
  for (std::size_t r = 0; r < rows; ++r) {
    const T bv = bias[r];
    T* row = x.data() + r * cols;
    for (std::size_t q = 0; q < cols; ++q) row[q] += bv;
  }
}

template <typename T>
void accumulate_row_sums(std::size_t rows, std::size_t cols, std::span<const T> x,
                         std::span<T> bias_grad) {
#pragma omp parallel for schedule(static)
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = x.data() + r * cols;
    T sum = 0;
    for (std::size_t q = 0; q < cols; ++q) sum += row[q];
    bias_grad[r] += sum;
  }
}

int set_num_threads(int n) {
  if (n > 0) omp_set_num_threads(n);
  return omp_get_max_threads();
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
  template void relu_backward<T>(std::span<const T>, std::span<const T>, std::span<T>);       \
  template void add_row_bias<T>(std::size_t, std::size_t, std::span<const T>, std::span<T>);  \
  template void accumulate_row_sums<T>(std::size_t, std::size_t, std::span<const T>,          \
                                       std::span<T>);

ENVID_INSTANTIATE(float)
ENVID_INSTANTIATE(double)
#undef ENVID_INSTANTIATE

}  // namespace envid::kernels
