#pragma once

#include <complex>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "envid/audio/signal.hpp"

namespace envid::features {

inline constexpr std::size_t kFftSize = 1024;
inline constexpr std::size_t kHop = 512;
inline constexpr std::size_t kSpectrumBins = kFftSize / 2 + 1;
inline constexpr std::size_t kMels = 256;
inline constexpr std::size_t kMfcc = 20;
inline constexpr std::size_t kFrames = 96;
inline constexpr std::size_t kBins = kMels + kMfcc;
inline constexpr double kLogFloor = 1e-10;
inline constexpr double kStdFloor = 1e-8;

// Frame-major matrix: rows are time frames.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  double& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

struct Spectrogram {
  std::size_t frames = 0;
  std::size_t bins = 0;
  std::vector<std::complex<double>> values;  // frame-major

  std::complex<double> at(std::size_t f, std::size_t k) const { return values[f * bins + k]; }
};

// Periodic Hann window of length n.
std::vector<double> hann_window(std::size_t n);

// Centered (reflect-padded) Hann STFT.
Spectrogram stft(std::span<const double> samples, std::size_t window = kFftSize,
                 std::size_t hop = kHop);

Matrix power(const Spectrogram& spec);

// HTK-scale triangular filters over [fmin, fmax], n_mels x (fft/2 + 1). Each
// weight is the triangle's mean over the FFT bin's frequency cell, so narrow
// low-frequency filters keep positive area and a bin's weights sum to <= 1.
Matrix mel_filterbank(std::size_t n_mels, std::size_t fft_size, int sample_rate,
                      double fmin = 0.0, std::optional<double> fmax = std::nullopt);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

// log(filterbank * power + floor) with floor = kLogFloor times the largest
// band energy (kLogFloor for silence), time axis forced to kFrames by
// cropping or repeating the last frame.
Matrix mel_spectrogram(const Matrix& power_spec, int sample_rate, std::size_t n_mels = kMels);

// Orthonormal DCT-II along each row, first n_coeff coefficients.
Matrix mfcc(const Matrix& log_mel, std::size_t n_coeff = kMfcc);

struct FeatureMap {
  std::vector<float> values;  // kFrames x kBins, frame-major
  std::vector<double> column_mean;
  double std = 1.0;
};

// [log-Mel | MFCC] standardized per map: every column's time mean is
// removed, then the map is divided by its global std (floored at 1e-8).
FeatureMap featurize(const audio::AudioClip& clip);

// Parallel over clips; output order follows input order.
std::vector<FeatureMap> featurize_all(std::span<const audio::AudioClip> clips);

// Content hash of a clip (rate and samples).
std::uint64_t clip_hash(const audio::AudioClip& clip);

// On-disk cache: <dir>/<hash>.f32 holding kFrames*kBins little-endian floats.
class FeatureCache {
 public:
  explicit FeatureCache(std::filesystem::path dir);

  std::optional<std::vector<float>> load(std::uint64_t key) const;
  void store(std::uint64_t key, std::span<const float> values) const;
  std::vector<float> get_or_compute(const audio::AudioClip& clip) const;

 private:
  std::filesystem::path dir_;
};

}  // namespace envid::features
