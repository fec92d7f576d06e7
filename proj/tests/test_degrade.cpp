#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <map>
#include <random>
#include <set>

#include "envid/audio/fft.hpp"
#include "envid/codec_bridge.hpp"
#include "envid/degrade.hpp"
#include "envid/error.hpp"

using namespace envid;
using namespace envid::degrade;
using audio::AudioClip;

namespace {

AudioClip random_clip(std::size_t n, unsigned seed, double scale = 0.1) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d;
  AudioClip c{16000, std::vector<double>(n)};
  for (auto& v : c.samples) v = scale * d(rng);
  return c;
}

double rms(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s / x.size());
}

// Mean squared difference of log magnitude spectra over 1024-sample frames.
double log_spectral_distance(const std::vector<double>& a, const std::vector<double>& b) {
  audio::RealFft fft(1024);
  std::vector<std::complex<double>> sa(fft.bins()), sb(fft.bins());
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t s = 0; s + 1024 <= a.size(); s += 1024) {
    fft.forward(std::span(a).subspan(s, 1024), sa);
    fft.forward(std::span(b).subspan(s, 1024), sb);
    for (std::size_t k = 0; k < sa.size(); ++k, ++n) {
      const double d = std::log10(std::abs(sa[k]) + 1e-9) - std::log10(std::abs(sb[k]) + 1e-9);
      acc += d * d;
    }
  }
  return acc / n;
}

ErrorKind kind_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::kInvalidArgument;
}

}  // namespace

TEST(Reverb, ImpulseIsIdentity) {
  const auto s = random_clip(48000, 1);
  const auto out = convolve_reverb(s, AudioClip{16000, {1.0}});
  ASSERT_EQ(out.samples.size(), 48000u);
  for (std::size_t i = 0; i < s.samples.size(); ++i) EXPECT_NEAR(out.samples[i], s.samples[i], 1e-12);
}

TEST(Reverb, DelayedImpulseShifts) {
  const auto s = random_clip(48000, 2);
  std::vector<double> h(11, 0.0);
  h[10] = 1.0;
  const auto out = convolve_reverb(s, AudioClip{16000, h});
  for (std::size_t i = 0; i < 10; ++i) EXPECT_NEAR(out.samples[i], 0.0, 1e-12);
  for (std::size_t i = 10; i < out.samples.size(); ++i) EXPECT_NEAR(out.samples[i], s.samples[i - 10], 1e-12);
}

TEST(Reverb, MatchesDirectConvolution) {
  const auto s = random_clip(1000, 3);
  const auto h = random_clip(1000, 4);
  std::vector<double> direct(1999, 0.0);
  for (std::size_t i = 0; i < 1000; ++i)
    for (std::size_t j = 0; j < 1000; ++j) direct[i + j] += s.samples[i] * h.samples[j];
  const auto out = convolve_reverb_raw(s, h);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < direct.size(); ++i) {
    num += (out.samples[i] - direct[i]) * (out.samples[i] - direct[i]);
    den += direct[i] * direct[i];
  }
  EXPECT_LE(std::sqrt(num / den), 1e-6);
  for (std::size_t i = direct.size(); i < out.samples.size(); ++i) EXPECT_EQ(out.samples[i], 0.0);
}

TEST(Reverb, Linear) {
  const auto a = random_clip(48000, 5), b = random_clip(48000, 6), r = random_clip(4000, 7, 0.05);
  AudioClip ab = a;
  for (std::size_t i = 0; i < ab.samples.size(); ++i) ab.samples[i] += b.samples[i];
  const auto lhs = convolve_reverb_raw(ab, r), ra = convolve_reverb_raw(a, r), rb = convolve_reverb_raw(b, r);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < lhs.samples.size(); ++i) {
    const double d = lhs.samples[i] - ra.samples[i] - rb.samples[i];
    num += d * d;
    den += lhs.samples[i] * lhs.samples[i];
  }
  EXPECT_LE(std::sqrt(num / den), 1e-9);
}

TEST(Reverb, ClippingNormalizedTo09) {
  AudioClip s{16000, std::vector<double>(48000, 0.0)};
  s.samples[100] = 0.8;
  const auto out = convolve_reverb(s, AudioClip{16000, {2.0, 1.0}});
  EXPECT_NEAR(audio::peak(out.samples), 0.9, 1e-12);
}

TEST(Reverb, RateMismatch) {
  EXPECT_EQ(kind_of([] { convolve_reverb(random_clip(100, 1), AudioClip{8000, {1.0}}); }),
            ErrorKind::kSampleRateMismatch);
}

TEST(Noise, InfiniteSnrIsIdentity) {
  const auto s = random_clip(48000, 8);
  EXPECT_EQ(mix_noise(s, random_clip(48000, 9), std::nullopt).samples, s.samples);
}

TEST(Noise, GainArithmetic) {
  std::vector<double> one(1000, 1.0), alt(1000);
  for (std::size_t i = 0; i < alt.size(); ++i) alt[i] = i % 2 ? 1.0 : -1.0;
  EXPECT_NEAR(noise_gain(one, alt, 0.0), 1.0, 1e-12);
  EXPECT_NEAR(noise_gain(one, alt, 20.0), 0.1, 1e-12);
}

TEST(Noise, RealizedSnrMatchesRequest) {
  const auto s = random_clip(48000, 10, 0.2);
  const auto n = random_clip(48000, 11, 0.7);
  for (double snr : {-10.0, -3.5, 0.0, 12.25, 50.0}) {
    const auto mixed = mix_noise(s, n, snr);
    std::vector<double> added(s.samples.size());
    for (std::size_t i = 0; i < added.size(); ++i) added[i] = mixed.samples[i] - s.samples[i];
    EXPECT_NEAR(20.0 * std::log10(rms(s.samples) / rms(added)), snr, 1e-6);
  }
}

TEST(Noise, Errors) {
  const auto s = random_clip(100, 1);
  EXPECT_EQ(kind_of([&] { mix_noise(s, AudioClip{16000, std::vector<double>(100, 0.0)}, 10.0); }),
            ErrorKind::kSilentNoiseSource);
  EXPECT_EQ(kind_of([&] { mix_noise(s, random_clip(99, 2), 10.0); }), ErrorKind::kLengthMismatch);
  EXPECT_EQ(kind_of([&] { mix_noise(s, AudioClip{8000, random_clip(100, 2).samples}, 10.0); }),
            ErrorKind::kSampleRateMismatch);
}

TEST(Noise, WhiteAndExcerptDeterministic) {
  EXPECT_EQ(white_noise(500, 16000, 3).samples, white_noise(500, 16000, 3).samples);
  EXPECT_NE(white_noise(500, 16000, 3).samples, white_noise(500, 16000, 4).samples);
  const auto src = random_clip(300, 5);
  const auto ex = noise_excerpt(src, 1000, 9);
  EXPECT_EQ(ex.samples.size(), 1000u);
  EXPECT_EQ(ex.samples, noise_excerpt(src, 1000, 9).samples);
}

TEST(Codec, EmptyChainBitIdentity) {
  const auto s = random_clip(48000, 12);
  EXPECT_EQ(apply_codec_chain(s, {}).samples, s.samples);
}

TEST(Codec, SimulatedDeterministicAndHighRateTransparent) {
  const auto s = random_clip(48000, 13);
  EXPECT_EQ(simulated_codec(s, 24).samples, simulated_codec(s, 24).samples);
  const auto hi = simulated_codec(s, 1e6);
  std::vector<double> d(s.samples.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = hi.samples[i] - s.samples[i];
  EXPECT_LT(rms(d) / rms(s.samples), 1e-2);
}

TEST(Codec, LowBitrateDistortsMore) {
  const auto s = random_clip(48000, 14);
  const double d8 = log_spectral_distance(simulated_codec(s, 8).samples, s.samples);
  const double d128 = log_spectral_distance(simulated_codec(s, 128).samples, s.samples);
  EXPECT_GT(d8, d128);
}

TEST(Codec, ChainOrderMatters) {
  const auto s = random_clip(48000, 15);
  const std::vector<CodecStep> hl{{CodecId::kSimulated, 128.0, ""}, {CodecId::kSimulated, 8.0, ""}};
  const std::vector<CodecStep> lh{{CodecId::kSimulated, 8.0, ""}, {CodecId::kSimulated, 128.0, ""}};
  EXPECT_GT(log_spectral_distance(apply_codec_chain(s, hl).samples, apply_codec_chain(s, lh).samples), 0.0);
}

TEST(Codec, ChainLengthLimit) {
  const auto s = random_clip(48000, 16);
  DegradationPlan plan;
  plan.chain.assign(3, CodecStep{CodecId::kSimulated, 64.0, ""});
  EXPECT_NO_THROW(validate(plan));
  EXPECT_EQ(apply_codec_chain(s, plan.chain).samples.size(), 48000u);
  plan.chain.push_back(CodecStep{CodecId::kSimulated, 64.0, ""});
  EXPECT_THROW(validate(plan), Error);
  EXPECT_THROW(apply_codec_chain(s, plan.chain), Error);
}

TEST(Codec, StepValidation) {
  EXPECT_NO_THROW(validate(CodecStep{CodecId::kMp3, 128.0, ""}));
  EXPECT_NO_THROW(validate(CodecStep{CodecId::kAmrNb, 4.75, ""}));
  EXPECT_THROW(validate(CodecStep{CodecId::kMp3, 100.0, ""}), Error);
  EXPECT_THROW(validate(CodecStep{CodecId::kGsm, 12.2, ""}), Error);
  EXPECT_THROW(validate(CodecStep{CodecId::kSimulated, 0.0, ""}), Error);
}

TEST(Codec, ExternalWithoutBridgeUnavailable) {
  const auto s = random_clip(48000, 17);
  const std::vector<CodecStep> chain{{CodecId::kMp3, 64.0, ""}};
  EXPECT_EQ(kind_of([&] { apply_codec_chain(s, chain); }), ErrorKind::kCodecUnavailable);
}

TEST(Codec, BridgeRunsCommandTemplates) {
  // cp round trip: the bridge itself must be transparent apart from float WAV precision
  CodecBridge bridge({{"MP3", {"cp {input} {output}", "cp {input} {output}", "bin", 16000}}});
  auto s = random_clip(48000, 18);
  for (auto& v : s.samples) v = static_cast<float>(v);
  const std::vector<CodecStep> chain{{CodecId::kMp3, 64.0, ""}};
  EXPECT_EQ(apply_codec_chain(s, chain, &bridge).samples, s.samples);

  CodecBridge missing({{"MP3", {"envid-no-such-tool {input} {output}", "cp {input} {output}", "bin", 16000}}});
  EXPECT_EQ(kind_of([&] { apply_codec_chain(s, chain, &missing); }), ErrorKind::kCodecUnavailable);
  CodecBridge failing({{"MP3", {"false", "cp {input} {output}", "bin", 16000}}});
  EXPECT_EQ(kind_of([&] { apply_codec_chain(s, chain, &failing); }), ErrorKind::kCodecFailure);
}

TEST(Codec, TemplateFill) {
  EXPECT_EQ(fill_template("x {bitrate}k {bitrate} {y}", {{"bitrate", "64"}}), "x 64k 64 {y}");
  EXPECT_EQ(codec_rate(CodecId::kAmrNb), 8000);
  EXPECT_EQ(codec_rate(CodecId::kGsm), 8000);
}

TEST(Profile, FixedPlanIsConstant) {
  DegradationProfile p;
  p.snr.fixed = true;
  p.snr.fixed_db = 0.0;
  Rng rng(1);
  for (int i = 0; i < 20; ++i) {
    const auto plan = sample_degradation(rng, p);
    ASSERT_TRUE(plan.noise.snr_db.has_value());
    EXPECT_EQ(*plan.noise.snr_db, 0.0);
    EXPECT_TRUE(plan.chain.empty());
  }
}

TEST(Profile, TrainingCoverage) {
  const auto p = DegradationProfile::training();
  Rng rng(7);
  std::set<double> mp3;
  std::size_t inf = 0, lengths[2] = {0, 0};
  for (int i = 0; i < 10000; ++i) {
    const auto plan = sample_degradation(rng, p);
    ASSERT_LE(plan.chain.size(), 1u);
    ++lengths[plan.chain.size()];
    if (!plan.noise.snr_db) {
      ++inf;
    } else {
      EXPECT_GE(*plan.noise.snr_db, -10.0);
      EXPECT_LE(*plan.noise.snr_db, 50.0);
    }
    for (const auto& s : plan.chain) {
      if (s.codec == CodecId::kMp3) mp3.insert(s.bitrate_kbps);
      if (s.codec == CodecId::kGsm) EXPECT_EQ(s.bitrate_kbps, 13.0);
      EXPECT_NO_THROW(validate(s));
    }
  }
  EXPECT_EQ(mp3.size(), bitrate_set(CodecId::kMp3).size());
  // p(inf) = 1/63: expect ~159 of 10^4
  EXPECT_GT(inf, 100u);
  EXPECT_LT(inf, 230u);
  EXPECT_GT(lengths[0], 4500u);
  EXPECT_GT(lengths[1], 4500u);
}

TEST(Profile, EmptyProfileRejected) {
  DegradationProfile p;
  p.chain_length_weights = {0.0, 1.0};
  Rng rng(1);
  EXPECT_EQ(kind_of([&] { sample_degradation(rng, p); }), ErrorKind::kEmptyProfile);
}

TEST(Plan, ReproducibleFromSeed) {
  const auto rev = random_clip(48000, 19);
  DegradationPlan plan;
  plan.noise.snr_db = 5.0;
  plan.chain = {{CodecId::kSimulated, 32.0, ""}};
  plan.seed = 1234;
  EXPECT_EQ(apply_plan(rev, plan).samples, apply_plan(rev, plan).samples);
  plan.seed = 1235;
  EXPECT_NE(apply_plan(rev, plan).samples, apply_plan(rev, DegradationPlan{plan.noise, plan.chain, 1234}).samples);
}
