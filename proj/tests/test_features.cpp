#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "envid/features.hpp"

using namespace envid;
using namespace envid::features;
using audio::AudioClip;

namespace {

AudioClip tone(double hz, std::size_t n = audio::kClipSamples, double amp = 0.5) {
  AudioClip c{16000, std::vector<double>(n)};
  for (std::size_t i = 0; i < n; ++i) c.samples[i] = amp * std::sin(2.0 * std::numbers::pi * hz * i / 16000.0);
  return c;
}

AudioClip noise_clip(unsigned seed, std::size_t n = audio::kClipSamples) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d;
  AudioClip c{16000, std::vector<double>(n)};
  for (auto& v : c.samples) v = 0.1 * d(rng);
  return c;
}

}  // namespace

TEST(Stft, ShapeAndZeroSignal) {
  const std::vector<double> z(audio::kClipSamples, 0.0);
  const auto s = stft(z);
  EXPECT_EQ(s.bins, 513u);
  EXPECT_EQ(s.frames, 1 + audio::kClipSamples / kHop);
  for (const auto& v : s.values) EXPECT_EQ(std::abs(v), 0.0);
}

TEST(Stft, TonePeaksAtBin64) {
  // cosine phase: the reflected first frame stays a pure tone
  auto c = tone(1000.0);
  for (std::size_t i = 0; i < c.samples.size(); ++i)
    c.samples[i] = 0.5 * std::cos(2.0 * std::numbers::pi * 1000.0 * i / 16000.0);
  const auto s = stft(c.samples);
  for (std::size_t f = 0; f < s.frames; ++f) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < s.bins; ++k)
      if (std::abs(s.at(f, k)) > std::abs(s.at(f, best))) best = k;
    EXPECT_EQ(best, 64u) << "frame " << f;
  }
  // a sine has the same peak wherever the frame is not reflected
  const auto t = stft(tone(1000.0).samples);
  for (std::size_t f = 1; f < t.frames; ++f) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < t.bins; ++k)
      if (std::abs(t.at(f, k)) > std::abs(t.at(f, best))) best = k;
    EXPECT_EQ(best, 64u) << "frame " << f;
  }
}

TEST(Stft, Parseval) {
  const auto x = noise_clip(3).samples;
  const auto s = stft(x);
  const auto w = hann_window(kFftSize);
  // interior frames need no reflection: frame f is centred on sample f * hop
  for (std::size_t f = 2; f < s.frames - 2; f += 7) {
    double time = 0.0;
    for (std::size_t i = 0; i < kFftSize; ++i) {
      const double v = w[i] * x[f * kHop - kFftSize / 2 + i];
      time += v * v;
    }
    double freq = std::norm(s.at(f, 0)) + std::norm(s.at(f, s.bins - 1));
    for (std::size_t k = 1; k + 1 < s.bins; ++k) freq += 2.0 * std::norm(s.at(f, k));
    freq /= static_cast<double>(kFftSize);
    EXPECT_NEAR(freq / time, 1.0, 1e-6);
  }
}

TEST(Mel, ScaleRoundTrip) {
  for (double hz : {0.0, 100.0, 1000.0, 7999.0}) EXPECT_NEAR(mel_to_hz(hz_to_mel(hz)), hz, 1e-9);
  // HTK: 1000 Hz ~ 1000 mel
  EXPECT_NEAR(hz_to_mel(1000.0), 2595.0 * std::log10(1.0 + 1000.0 / 700.0), 1e-9);
}

TEST(Mel, FilterbankPositiveAreaAndBoundedBinWeight) {
  const auto fb = mel_filterbank(kMels, kFftSize, 16000);
  ASSERT_EQ(fb.rows, kMels);
  ASSERT_EQ(fb.cols, kSpectrumBins);
  for (std::size_t m = 0; m < fb.rows; ++m) {
    double area = 0.0;
    for (std::size_t k = 0; k < fb.cols; ++k) {
      EXPECT_GE(fb.at(m, k), 0.0);
      area += fb.at(m, k);
    }
    EXPECT_GT(area, 0.0) << "filter " << m;
  }
  for (std::size_t k = 0; k < fb.cols; ++k) {
    double total = 0.0;
    for (std::size_t m = 0; m < fb.rows; ++m) total += fb.at(m, k);
    EXPECT_LE(total, 1.0 + 1e-9);
  }
}

TEST(Mel, ZeroSignalIsLogFloor) {
  const auto p = power(stft(std::vector<double>(audio::kClipSamples, 0.0)));
  const auto m = mel_spectrogram(p, 16000);
  EXPECT_EQ(m.rows, kFrames);
  EXPECT_EQ(m.cols, kMels);
  for (double v : m.values) EXPECT_DOUBLE_EQ(v, std::log(kLogFloor));
}

TEST(Mel, FrameCountForcedTo96) {
  for (std::size_t n : {47000u, 48000u, 49500u, 60000u}) {
    const auto m = mel_spectrogram(power(stft(noise_clip(1, n).samples)), 16000);
    EXPECT_EQ(m.rows, kFrames) << n;
  }
}

TEST(Mfcc, ConstantColumn) {
  Matrix lm{2, kMels, std::vector<double>(2 * kMels, 3.0)};
  const auto c = mfcc(lm);
  EXPECT_EQ(c.cols, kMfcc);
  EXPECT_NEAR(c.at(0, 0), 3.0 * std::sqrt(256.0), 1e-9);
  for (std::size_t k = 1; k < kMfcc; ++k) EXPECT_NEAR(c.at(1, k), 0.0, 1e-9);
}

TEST(Mfcc, LinearAndCompacting) {
  Matrix a{1, kMels, {}}, b{1, kMels, {}}, ab{1, kMels, {}};
  for (std::size_t i = 0; i < kMels; ++i) {
    a.values.push_back(std::cos(i * 0.01));
    b.values.push_back(std::sin(i * 0.37));
    ab.values.push_back(2.0 * a.values[i] - b.values[i]);
  }
  const auto ca = mfcc(a), cb = mfcc(b), cab = mfcc(ab);
  for (std::size_t k = 0; k < kMfcc; ++k) EXPECT_NEAR(cab.at(0, k), 2.0 * ca.at(0, k) - cb.at(0, k), 1e-9);
  EXPECT_LT(std::abs(ca.at(0, 19)), std::abs(ca.at(0, 1)));
}

TEST(Featurize, ShapeAndStandardization) {
  for (const auto& clip : {noise_clip(4), tone(440.0), noise_clip(5, 30000)}) {
    const auto fm = featurize(clip);
    ASSERT_EQ(fm.values.size(), kFrames * kBins);
    double sum = 0.0, sq = 0.0;
    for (float v : fm.values) {
      ASSERT_TRUE(std::isfinite(v));
      sum += v;
      sq += double(v) * v;
    }
    const double mean = sum / fm.values.size();
    EXPECT_NEAR(mean, 0.0, 1e-6);
    EXPECT_NEAR(std::sqrt(sq / fm.values.size() - mean * mean), 1.0, 1e-6);
  }
}

TEST(Featurize, ZeroClipMapsToZero) {
  const auto fm = featurize(AudioClip{16000, std::vector<double>(audio::kClipSamples, 0.0)});
  for (float v : fm.values) EXPECT_EQ(v, 0.0f);
}

TEST(Featurize, SilenceGapsStayFinite) {
  auto clip = noise_clip(6);
  std::fill(clip.samples.begin() + 10000, clip.samples.begin() + 30000, 0.0);
  for (float v : featurize(clip).values) EXPECT_TRUE(std::isfinite(v));
}

TEST(Featurize, GainInvariant) {
  const auto x = noise_clip(7);
  const auto base = featurize(x);
  for (double g : {2.0, 0.5, 0.1, 7.5, 100.0}) {
    auto y = x;
    for (auto& v : y.samples) v *= g;
    const auto fy = featurize(y);
    for (std::size_t i = 0; i < base.values.size(); ++i) ASSERT_NEAR(fy.values[i], base.values[i], 1e-5) << g;
  }
}

TEST(Featurize, GainInvariantWithDigitalSilence) {
  auto x = noise_clip(12);
  std::fill(x.samples.begin(), x.samples.begin() + 4000, 0.0);
  std::fill(x.samples.end() - 6000, x.samples.end(), 0.0);
  const auto base = featurize(x);
  for (double g : {1e-3, 0.1, 7.5, 1e3}) {
    auto y = x;
    for (auto& v : y.samples) v *= g;
    const auto fy = featurize(y);
    for (std::size_t i = 0; i < base.values.size(); ++i) ASSERT_NEAR(fy.values[i], base.values[i], 1e-5) << g;
  }
}

TEST(Featurize, DeterministicAndParallelConsistent) {
  std::vector<AudioClip> clips{noise_clip(8), tone(250.0), noise_clip(9)};
  const auto all = featurize_all(clips);
  for (std::size_t i = 0; i < clips.size(); ++i) EXPECT_EQ(all[i].values, featurize(clips[i]).values);
}

TEST(FeatureCache, StoreLoadAndHash) {
  const auto dir = std::filesystem::temp_directory_path() / "envid_test_cache";
  std::filesystem::remove_all(dir);
  FeatureCache cache(dir);
  const auto clip = noise_clip(10);
  const auto key = clip_hash(clip);
  EXPECT_NE(key, clip_hash(noise_clip(11)));
  EXPECT_FALSE(cache.load(key).has_value());
  const auto v = cache.get_or_compute(clip);
  const auto loaded = cache.load(key);
  ASSERT_TRUE(loaded.has_value());
  EXPECT_EQ(*loaded, v);
  EXPECT_EQ(v, featurize(clip).values);
  std::filesystem::remove_all(dir);
}
