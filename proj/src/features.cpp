#include "envid/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "envid/audio/fft.hpp"
#include "envid/binary_io.hpp"
#include "envid/error.hpp"
#include "envid/rng.hpp"

namespace envid::features {
namespace {

// Integral of the unit-peak triangle (a, b, c) from -inf to x.
double triangle_cdf(double a, double b, double c, double x) {
  if (x <= a) return 0.0;
  if (x <= b) return (x - a) * (x - a) / (2.0 * (b - a));
  const double total = (c - a) / 2.0;
  if (x < c) return total - (c - x) * (c - x) / (2.0 * (c - b));
  return total;
}

const Matrix& default_filterbank(int sample_rate) {
  static const Matrix bank16k = mel_filterbank(kMels, kFftSize, audio::kWorkingRate);
  if (sample_rate == audio::kWorkingRate) return bank16k;
  thread_local Matrix other;
  thread_local int other_rate = 0;
  if (other_rate != sample_rate) {
    other = mel_filterbank(kMels, kFftSize, sample_rate);
    other_rate = sample_rate;
  }
  return other;
}

}  // namespace

std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                static_cast<double>(n));
  return w;
}

Spectrogram stft(std::span<const double> samples, std::size_t window, std::size_t hop) {
  if (window < 2 || hop == 0) throw Error(ErrorKind::kInvalidArgument, "bad STFT geometry");
  const std::size_t half = window / 2;
  const std::size_t n = samples.size();
  // Reflect padding mirrors about the edge sample.
  std::vector<double> padded(n + 2 * half, 0.0);
  for (std::size_t i = 0; i < padded.size(); ++i) {
    auto j = static_cast<std::ptrdiff_t>(i) - static_cast<std::ptrdiff_t>(half);
    if (n == 0) break;
    if (n == 1) j = 0;
    const auto last = static_cast<std::ptrdiff_t>(n) - 1;
    while (j < 0 || j > last) {
      if (j < 0) j = -j;
      if (j > last) j = 2 * last - j;
    }
    padded[i] = samples[static_cast<std::size_t>(j)];
  }
  const auto win = hann_window(window);
  Spectrogram spec;
  spec.frames = 1 + n / hop;
  spec.bins = window / 2 + 1;
  spec.values.resize(spec.frames * spec.bins);
  audio::RealFft fft(window);
  std::vector<double> frame(window);
  for (std::size_t f = 0; f < spec.frames; ++f) {
    for (std::size_t i = 0; i < window; ++i) frame[i] = padded[f * hop + i] * win[i];
    fft.forward(frame, std::span(spec.values).subspan(f * spec.bins, spec.bins));
  }
  return spec;
}

Matrix power(const Spectrogram& spec) {
  Matrix out{spec.frames, spec.bins, std::vector<double>(spec.values.size())};
  for (std::size_t i = 0; i < spec.values.size(); ++i) out.values[i] = std::norm(spec.values[i]);
  return out;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

Matrix mel_filterbank(std::size_t n_mels, std::size_t fft_size, int sample_rate, double fmin,
                      std::optional<double> fmax) {
  const double top = fmax.value_or(sample_rate / 2.0);
  if (n_mels == 0 || fft_size < 2 || !(top > fmin) || fmin < 0.0)
    throw Error(ErrorKind::kInvalidArgument, "bad filterbank geometry");
  const std::size_t bins = fft_size / 2 + 1;
  const double mel_lo = hz_to_mel(fmin);
  const double mel_hi = hz_to_mel(top);
  std::vector<double> edges(n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i)
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                      static_cast<double>(n_mels + 1));
  const double df = static_cast<double>(sample_rate) / static_cast<double>(fft_size);
  Matrix bank{n_mels, bins, std::vector<double>(n_mels * bins, 0.0)};
  for (std::size_t m = 0; m < n_mels; ++m) {
    const double a = edges[m], b = edges[m + 1], c = edges[m + 2];
    for (std::size_t k = 0; k < bins; ++k) {
      const double lo = (static_cast<double>(k) - 0.5) * df;
      const double hi = lo + df;
      if (hi <= a || lo >= c) continue;
      bank.at(m, k) = (triangle_cdf(a, b, c, hi) - triangle_cdf(a, b, c, lo)) / df;
    }
  }
  return bank;
}

Matrix mel_spectrogram(const Matrix& power_spec, int sample_rate, std::size_t n_mels) {
  const Matrix& bank = n_mels == kMels && power_spec.cols == kSpectrumBins
                           ? default_filterbank(sample_rate)
                           : mel_filterbank(n_mels, (power_spec.cols - 1) * 2, sample_rate);
  if (bank.cols != power_spec.cols)
    throw Error(ErrorKind::kShapeMismatch, "power spectrum width does not match filterbank");
  Matrix out{kFrames, n_mels, std::vector<double>(kFrames * n_mels, 0.0)};
  const std::size_t used = std::min(kFrames, power_spec.rows);
  double peak = 0.0;
  for (std::size_t f = 0; f < used; ++f) {
    for (std::size_t m = 0; m < n_mels; ++m) {
      double acc = 0.0;
      const double* w = &bank.values[m * bank.cols];
      const double* p = &power_spec.values[f * power_spec.cols];
      for (std::size_t k = 0; k < bank.cols; ++k) acc += w[k] * p[k];
      out.at(f, m) = acc;
      peak = std::max(peak, acc);
    }
  }
  // Floor relative to the loudest band so digital silence scales with gain.
  const double floor = peak > 0.0 ? kLogFloor * peak : kLogFloor;
  for (std::size_t f = 0; f < used; ++f)
    for (std::size_t m = 0; m < n_mels; ++m) out.at(f, m) = std::log(out.at(f, m) + floor);
  for (std::size_t f = used; f < kFrames; ++f)
    for (std::size_t m = 0; m < n_mels; ++m)
      out.at(f, m) = used > 0 ? out.at(used - 1, m) : std::log(kLogFloor);
  return out;
}

Matrix mfcc(const Matrix& log_mel, std::size_t n_coeff) {
  const std::size_t n = log_mel.cols;
  if (n_coeff > n) throw Error(ErrorKind::kInvalidArgument, "more coefficients than mel bands");
  std::vector<double> basis(n_coeff * n);
  for (std::size_t k = 0; k < n_coeff; ++k) {
    const double scale = std::sqrt((k == 0 ? 1.0 : 2.0) / static_cast<double>(n));
    for (std::size_t i = 0; i < n; ++i)
      basis[k * n + i] = scale * std::cos(std::numbers::pi * static_cast<double>(k) *
                                          (2.0 * static_cast<double>(i) + 1.0) /
                                          (2.0 * static_cast<double>(n)));
  }
  Matrix out{log_mel.rows, n_coeff, std::vector<double>(log_mel.rows * n_coeff)};
  for (std::size_t f = 0; f < log_mel.rows; ++f)
    for (std::size_t k = 0; k < n_coeff; ++k) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) acc += basis[k * n + i] * log_mel.at(f, i);
      out.at(f, k) = acc;
    }
  return out;
}

FeatureMap featurize(const audio::AudioClip& clip) {
  const Matrix log_mel = mel_spectrogram(power(stft(clip.samples)), clip.sample_rate);
  const Matrix cep = mfcc(log_mel);

  std::vector<double> raw(kFrames * kBins);
  for (std::size_t f = 0; f < kFrames; ++f) {
    std::copy_n(&log_mel.values[f * kMels], kMels, &raw[f * kBins]);
    std::copy_n(&cep.values[f * kMfcc], kMfcc, &raw[f * kBins + kMels]);
  }
  FeatureMap map;
  // Mean taken around the first frame, so constant columns cancel exactly.
  map.column_mean.assign(kBins, 0.0);
  for (std::size_t f = 1; f < kFrames; ++f)
    for (std::size_t c = 0; c < kBins; ++c) map.column_mean[c] += raw[f * kBins + c] - raw[c];
  for (std::size_t c = 0; c < kBins; ++c)
    map.column_mean[c] = raw[c] + map.column_mean[c] / static_cast<double>(kFrames);
  double sq = 0.0;
  for (std::size_t f = 0; f < kFrames; ++f)
    for (std::size_t c = 0; c < kBins; ++c) {
      double& v = raw[f * kBins + c];
      v -= map.column_mean[c];
      sq += v * v;
    }
  map.std = std::max(std::sqrt(sq / static_cast<double>(raw.size())), kStdFloor);
  map.values.resize(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i)
    map.values[i] = static_cast<float>(raw[i] / map.std);
  return map;
}

std::vector<FeatureMap> featurize_all(std::span<const audio::AudioClip> clips) {
  std::vector<FeatureMap> out(clips.size());
  const auto n = static_cast<std::ptrdiff_t>(clips.size());
  (void)default_filterbank(audio::kWorkingRate);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = featurize(clips[static_cast<std::size_t>(i)]);
  return out;
}

std::uint64_t clip_hash(const audio::AudioClip& clip) {
  std::uint64_t h = fnv1a("envid-features-v1");
  const auto rate = io::to_little(static_cast<std::int32_t>(clip.sample_rate));
  h = fnv1a(std::string_view(reinterpret_cast<const char*>(&rate), sizeof rate), h);
  for (double s : clip.samples) {
    const double le = io::to_little(s);
    h = fnv1a(std::string_view(reinterpret_cast<const char*>(&le), sizeof le), h);
  }
  return h;
}

FeatureCache::FeatureCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::optional<std::vector<float>> FeatureCache::load(std::uint64_t key) const {
  std::ifstream in(dir_ / (to_hex(key) + ".f32"), std::ios::binary);
  if (!in) return std::nullopt;
  std::vector<float> values(kFrames * kBins);
  if (!io::read_le_span(in, std::span<float>(values)) || in.peek() != EOF) return std::nullopt;
  return values;
}

void FeatureCache::store(std::uint64_t key, std::span<const float> values) const {
  if (values.size() != kFrames * kBins)
    throw Error(ErrorKind::kShapeMismatch, "feature map must be 96x276");
  const auto path = dir_ / (to_hex(key) + ".f32");
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    io::write_le_span(out, values);
    if (!out) throw Error(ErrorKind::kUnreadableFile, "cannot write " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

std::vector<float> FeatureCache::get_or_compute(const audio::AudioClip& clip) const {
  const auto key = clip_hash(clip);
  if (auto hit = load(key)) return std::move(*hit);
  auto map = featurize(clip);
  store(key, map.values);
  return std::move(map.values);
}

}  // namespace envid::features
