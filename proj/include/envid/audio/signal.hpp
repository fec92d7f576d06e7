#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace envid::audio {

inline constexpr int kWorkingRate = 16000;
inline constexpr double kClipSeconds = 3.0;
inline constexpr std::size_t kClipSamples = 48000;

struct AudioClip {
  int sample_rate = kWorkingRate;
  std::vector<double> samples;
};

double rms(std::span<const double> x);
double peak(std::span<const double> x);

// Scales to a 0.9 peak only when the absolute peak exceeds 1.
void normalize_if_clipping(std::vector<double>& x);

// Crops or zero-pads to exactly `length` samples.
void fit_length(std::vector<double>& x, std::size_t length);

// Crops or zero-pads to kClipSeconds at the clip's rate.
AudioClip standardize_length(AudioClip clip);

// Full linear convolution (length n + m - 1) evaluated with FFTs. When
// `keep` is non-zero only the first `keep` output samples are produced and
// the kernel is truncated accordingly (samples past `keep` cannot influence
// them).
std::vector<double> fft_convolve(std::span<const double> x, std::span<const double> kernel,
                                 std::size_t keep = 0);

// Windowed-sinc band-limited resampling between arbitrary integer rates.
std::vector<double> resample(std::span<const double> x, int from_rate, int to_rate);

}  // namespace envid::audio
