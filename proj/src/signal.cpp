#include "envid/audio/signal.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <numeric>

#include "envid/audio/fft.hpp"
#include "envid/error.hpp"

namespace envid::audio {

double rms(std::span<const double> x) {
  if (x.empty()) return 0.0;
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return std::sqrt(acc / static_cast<double>(x.size()));
}

double peak(std::span<const double> x) {
  double p = 0.0;
  for (double v : x) p = std::max(p, std::abs(v));
  return p;
}

void normalize_if_clipping(std::vector<double>& x) {
  const double p = peak(x);
  if (p > 1.0) {
    const double g = 0.9 / p;
    for (double& v : x) v *= g;
  }
}

void fit_length(std::vector<double>& x, std::size_t length) { x.resize(length, 0.0); }

AudioClip standardize_length(AudioClip clip) {
  fit_length(clip.samples,
             static_cast<std::size_t>(std::llround(kClipSeconds * clip.sample_rate)));
  return clip;
}

std::vector<double> fft_convolve(std::span<const double> x, std::span<const double> kernel,
                                 std::size_t keep) {
  if (x.empty() || kernel.empty()) return {};
  const std::size_t full = x.size() + kernel.size() - 1;
  const std::size_t out_len = keep == 0 ? full : std::min(keep, full);
  const std::span<const double> xs = x.first(std::min(x.size(), out_len));
  const std::span<const double> ks = kernel.first(std::min(kernel.size(), out_len));
  const std::size_t n = next_pow2(xs.size() + ks.size() - 1);
  RealFft fft(n);
  std::vector<std::complex<double>> a(fft.bins()), b(fft.bins());
  fft.forward(xs, a);
  fft.forward(ks, b);
  for (std::size_t i = 0; i < a.size(); ++i) a[i] *= b[i];
  std::vector<double> y(n);
  fft.inverse(a, y);
  y.resize(out_len, 0.0);
  return y;
}

std::vector<double> resample(std::span<const double> x, int from_rate, int to_rate) {
  if (from_rate <= 0 || to_rate <= 0)
    throw Error(ErrorKind::kInvalidArgument, "sample rates must be positive");
  if (from_rate == to_rate) return {x.begin(), x.end()};
  const double ratio = static_cast<double>(to_rate) / from_rate;
  const double cutoff = std::min(1.0, ratio) * 0.95;  // relative to input Nyquist
  constexpr int kZeroCrossings = 24;
  const double half_width = kZeroCrossings / cutoff;  // in input samples
  const auto out_len =
      static_cast<std::size_t>(std::floor(static_cast<double>(x.size()) * ratio));
  std::vector<double> y(out_len, 0.0);
  const auto n_in = static_cast<std::ptrdiff_t>(x.size());
  for (std::size_t n = 0; n < out_len; ++n) {
    const double t = static_cast<double>(n) / ratio;
    const auto lo = static_cast<std::ptrdiff_t>(std::ceil(t - half_width));
    const auto hi = static_cast<std::ptrdiff_t>(std::floor(t + half_width));
    double acc = 0.0;
    for (std::ptrdiff_t k = std::max<std::ptrdiff_t>(lo, 0); k <= std::min(hi, n_in - 1); ++k) {
      const double d = static_cast<double>(k) - t;
      const double arg = std::numbers::pi * cutoff * d;
      const double sinc = std::abs(arg) < 1e-12 ? 1.0 : std::sin(arg) / arg;
      const double win = 0.5 * (1.0 + std::cos(std::numbers::pi * d / half_width));
      acc += x[static_cast<std::size_t>(k)] * cutoff * sinc * win;
    }
    y[n] = acc;
  }
  return y;
}

}  // namespace envid::audio
