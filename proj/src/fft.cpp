#include "envid/audio/fft.hpp"

#include <fftw3.h>

#include <algorithm>
#include <mutex>

namespace envid::audio {
namespace {
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace

struct RealFft::Impl {
  double* real = nullptr;
  fftw_complex* spec = nullptr;
  fftw_plan forward_plan = nullptr;
  fftw_plan inverse_plan = nullptr;

  explicit Impl(std::size_t n) {
    std::lock_guard<std::mutex> lock(planner_mutex());
    real = fftw_alloc_real(n);
    spec = fftw_alloc_complex(n / 2 + 1);
    forward_plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), real, spec, FFTW_ESTIMATE);
    inverse_plan = fftw_plan_dft_c2r_1d(static_cast<int>(n), spec, real, FFTW_ESTIMATE);
  }
  ~Impl() {
    std::lock_guard<std::mutex> lock(planner_mutex());
    fftw_destroy_plan(forward_plan);
    fftw_destroy_plan(inverse_plan);
    fftw_free(real);
    fftw_free(spec);
  }
};

RealFft::RealFft(std::size_t size) : size_(size), impl_(std::make_unique<Impl>(size)) {}
RealFft::~RealFft() = default;
RealFft::RealFft(RealFft&&) noexcept = default;
RealFft& RealFft::operator=(RealFft&&) noexcept = default;

void RealFft::forward(std::span<const double> input, std::span<std::complex<double>> spectrum) {
  const std::size_t n = std::min(input.size(), size_);
  std::copy_n(input.begin(), n, impl_->real);
  std::fill(impl_->real + n, impl_->real + size_, 0.0);
  fftw_execute(impl_->forward_plan);
  for (std::size_t k = 0; k < bins(); ++k)
    spectrum[k] = {impl_->spec[k][0], impl_->spec[k][1]};
}

void RealFft::inverse(std::span<const std::complex<double>> spectrum, std::span<double> output) {
  for (std::size_t k = 0; k < bins(); ++k) {
    impl_->spec[k][0] = spectrum[k].real();
    impl_->spec[k][1] = spectrum[k].imag();
  }
  fftw_execute(impl_->inverse_plan);
  const double scale = 1.0 / static_cast<double>(size_);
  const std::size_t n = std::min(output.size(), size_);
  for (std::size_t i = 0; i < n; ++i) output[i] = impl_->real[i] * scale;
}

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace envid::audio
