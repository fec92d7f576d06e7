#pragma once

#include <complex>
#include <cstddef>
#include <memory>
#include <span>

namespace envid::audio {

// Real-to-complex FFT of fixed size backed by FFTW. An instance owns its
// buffers and is not shared between threads; plan creation is serialized
// internally so instances may be built concurrently.
class RealFft {
 public:
  explicit RealFft(std::size_t size);
  ~RealFft();
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;
  RealFft(RealFft&&) noexcept;
  RealFft& operator=(RealFft&&) noexcept;

  std::size_t size() const { return size_; }
  std::size_t bins() const { return size_ / 2 + 1; }

  // `input` may be shorter than size(); the rest is zero-filled.
  void forward(std::span<const double> input, std::span<std::complex<double>> spectrum);
  // Normalized inverse (round trip is the identity).
  void inverse(std::span<const std::complex<double>> spectrum, std::span<double> output);

 private:
  struct Impl;
  std::size_t size_ = 0;
  std::unique_ptr<Impl> impl_;
};

// Smallest power of two >= n.
std::size_t next_pow2(std::size_t n);

}  // namespace envid::audio
