#include "envid/degrade.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <numeric>

#include "envid/audio/fft.hpp"
#include "envid/codec_bridge.hpp"
#include "envid/error.hpp"

namespace envid::degrade {
namespace {

constexpr std::array<double, 12> kMp3Rates = {8, 16, 24, 32, 40, 48, 56, 64, 80, 96, 112, 128};
constexpr std::array<double, 8> kAmrRates = {4.75, 5.15, 5.9, 6.7, 7.4, 7.95, 10.2, 12.2};
constexpr std::array<double, 1> kGsmRates = {13};

constexpr std::size_t kCodecFrame = 1024;
constexpr std::size_t kCodecBands = 16;

void require_same_rate(int a, int b) {
  if (a != b)
    throw Error(ErrorKind::kSampleRateMismatch,
                "sample rates differ: " + std::to_string(a) + " vs " + std::to_string(b));
}

}  // namespace

std::string_view to_string(CodecId id) {
  switch (id) {
    case CodecId::kMp3: return "MP3";
    case CodecId::kAmrNb: return "AMR-NB";
    case CodecId::kGsm: return "GSM";
    case CodecId::kVorbis: return "VORBIS";
    case CodecId::kExternal: return "EXTERNAL";
    case CodecId::kSimulated: return "SIMULATED";
  }
  return "SIMULATED";
}

CodecId parse_codec(std::string_view name) {
  if (name == "MP3") return CodecId::kMp3;
  if (name == "AMR-NB") return CodecId::kAmrNb;
  if (name == "GSM") return CodecId::kGsm;
  if (name == "VORBIS") return CodecId::kVorbis;
  if (name == "EXTERNAL") return CodecId::kExternal;
  if (name == "SIMULATED") return CodecId::kSimulated;
  throw Error(ErrorKind::kInvalidArgument, "unknown codec '" + std::string(name) + "'");
}

std::span<const double> bitrate_set(CodecId id) {
  switch (id) {
    case CodecId::kMp3: return kMp3Rates;
    case CodecId::kAmrNb: return kAmrRates;
    case CodecId::kGsm: return kGsmRates;
    default: return {};
  }
}

void validate(const CodecStep& step) {
  if (!(step.bitrate_kbps > 0.0) || !std::isfinite(step.bitrate_kbps))
    throw Error(ErrorKind::kInvalidArgument, "bitrate must be positive");
  const auto allowed = bitrate_set(step.codec);
  if (!allowed.empty() &&
      std::none_of(allowed.begin(), allowed.end(),
                   [&](double r) { return std::abs(r - step.bitrate_kbps) < 1e-9; }))
    throw Error(ErrorKind::kInvalidArgument, std::string(to_string(step.codec)) +
                                                 " does not support " +
                                                 std::to_string(step.bitrate_kbps) + " kbps");
  if (step.codec == CodecId::kExternal && step.external_name.empty())
    throw Error(ErrorKind::kInvalidArgument, "external codec step needs a bridge name");
}

void validate(const DegradationPlan& plan) {
  if (plan.chain.size() > kMaxChainLength)
    throw Error(ErrorKind::kInvalidArgument, "codec chain longer than " +
                                                 std::to_string(kMaxChainLength) + " steps");
  for (const auto& step : plan.chain) validate(step);
}

AudioClip convolve_reverb_raw(const AudioClip& speech, const AudioClip& air) {
  require_same_rate(speech.sample_rate, air.sample_rate);
  const auto length =
      static_cast<std::size_t>(std::llround(audio::kClipSeconds * speech.sample_rate));
  AudioClip out;
  out.sample_rate = speech.sample_rate;
  out.samples = audio::fft_convolve(speech.samples, air.samples, length);
  audio::fit_length(out.samples, length);
  return out;
}

AudioClip convolve_reverb(const AudioClip& speech, const AudioClip& air) {
  AudioClip out = convolve_reverb_raw(speech, air);
  audio::normalize_if_clipping(out.samples);
  return out;
}

double noise_gain(std::span<const double> signal, std::span<const double> noise, double snr_db) {
  const double rn = audio::rms(noise);
  if (rn <= 0.0) throw Error(ErrorKind::kSilentNoiseSource, "noise source has zero RMS");
  return audio::rms(signal) / (rn * std::pow(10.0, snr_db / 20.0));
}

AudioClip mix_noise(const AudioClip& signal, const AudioClip& noise, std::optional<double> snr_db) {
  if (!snr_db) return signal;
  require_same_rate(signal.sample_rate, noise.sample_rate);
  if (signal.samples.size() != noise.samples.size())
    throw Error(ErrorKind::kLengthMismatch, "signal and noise lengths differ");
  const double alpha = noise_gain(signal.samples, noise.samples, *snr_db);
  AudioClip out = signal;
  for (std::size_t i = 0; i < out.samples.size(); ++i) out.samples[i] += alpha * noise.samples[i];
  return out;
}

AudioClip white_noise(std::size_t length, int sample_rate, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  AudioClip out;
  out.sample_rate = sample_rate;
  out.samples.resize(length);
  for (double& v : out.samples) v = dist(rng);
  return out;
}

AudioClip noise_excerpt(const AudioClip& source, std::size_t length, std::uint64_t seed) {
  if (source.samples.empty()) throw Error(ErrorKind::kSilentNoiseSource, "empty noise source");
  Rng rng(seed);
  const std::size_t start = uniform_index(rng, source.samples.size());
  AudioClip out;
  out.sample_rate = source.sample_rate;
  out.samples.resize(length);
  for (std::size_t i = 0; i < length; ++i)
    out.samples[i] = source.samples[(start + i) % source.samples.size()];
  return out;
}

AudioClip simulated_codec(const AudioClip& signal, double bitrate_kbps) {
  if (!(bitrate_kbps > 0.0)) throw Error(ErrorKind::kInvalidArgument, "bitrate must be positive");
  const double nyquist = signal.sample_rate / 2.0;
  const double cutoff = std::min(nyquist, 350.0 * bitrate_kbps);
  const double levels = std::max(2.0, std::round(bitrate_kbps));
  audio::RealFft fft(kCodecFrame);
  const std::size_t bins = fft.bins();
  const double bin_hz = static_cast<double>(signal.sample_rate) / kCodecFrame;
  const std::size_t band_width = (bins + kCodecBands - 1) / kCodecBands;

  AudioClip out;
  out.sample_rate = signal.sample_rate;
  out.samples.assign(signal.samples.size(), 0.0);
  std::vector<std::complex<double>> spec(bins);
  std::vector<double> frame(kCodecFrame);
  for (std::size_t start = 0; start < signal.samples.size(); start += kCodecFrame) {
    const std::size_t n = std::min(kCodecFrame, signal.samples.size() - start);
    fft.forward(std::span<const double>(signal.samples).subspan(start, n), spec);
    for (std::size_t k = 0; k < bins; ++k)
      if (static_cast<double>(k) * bin_hz > cutoff) spec[k] = 0.0;
    for (std::size_t b0 = 0; b0 < bins; b0 += band_width) {
      const std::size_t b1 = std::min(bins, b0 + band_width);
      double top = 0.0;
      for (std::size_t k = b0; k < b1; ++k) top = std::max(top, std::abs(spec[k]));
      if (top <= 0.0) continue;
      for (std::size_t k = b0; k < b1; ++k) {
        const double mag = std::abs(spec[k]);
        if (mag <= 0.0) continue;
        const double q = std::round(mag / top * (levels - 1.0)) / (levels - 1.0) * top;
        spec[k] *= q / mag;
      }
    }
    fft.inverse(spec, frame);
    std::copy_n(frame.begin(), n, out.samples.begin() + static_cast<std::ptrdiff_t>(start));
  }
  return out;
}

AudioClip apply_codec_chain(const AudioClip& signal, std::span<const CodecStep> chain,
                            const CodecBridge* bridge) {
  if (chain.empty()) return signal;
  if (chain.size() > kMaxChainLength)
    throw Error(ErrorKind::kInvalidArgument, "codec chain longer than 3 steps");
  AudioClip current = signal;
  for (const CodecStep& step : chain) {
    validate(step);
    if (step.codec == CodecId::kSimulated) {
      current = simulated_codec(current, step.bitrate_kbps);
    } else {
      if (bridge == nullptr)
        throw Error(ErrorKind::kCodecUnavailable,
                    "no codec bridge configured for " + bridge_key(step));
      current = bridge->apply(current, step);
    }
    current = audio::standardize_length(std::move(current));
  }
  return current;
}

DegradationProfile DegradationProfile::clean() { return {}; }

DegradationProfile DegradationProfile::training() {
  DegradationProfile p;
  p.name = "training";
  p.snr.fixed = false;
  p.snr.lo_db = -10.0;
  p.snr.hi_db = 50.0;
  p.snr.p_infinite = 1.0 / 63.0;
  for (CodecId id : {CodecId::kMp3, CodecId::kAmrNb, CodecId::kGsm}) {
    const auto rates = bitrate_set(id);
    p.codecs.push_back({id, {rates.begin(), rates.end()}, {}});
  }
  p.chain_length_weights = {0.5, 0.5};
  return p;
}

DegradationProfile DegradationProfile::multi_compression(std::size_t steps) {
  DegradationProfile p = training();
  p.name = "compression-x" + std::to_string(steps);
  p.snr = SnrLaw{};
  p.chain_length_weights.assign(steps + 1, 0.0);
  p.chain_length_weights[steps] = 1.0;
  return p;
}

DegradationProfile DegradationProfile::simulated(double bitrate_kbps) {
  DegradationProfile p;
  p.name = "simulated";
  p.codecs.push_back({CodecId::kSimulated, {bitrate_kbps}, {}});
  p.chain_length_weights = {0.0, 1.0};
  return p;
}

DegradationPlan sample_degradation(Rng& rng, const DegradationProfile& profile) {
  const auto& w = profile.chain_length_weights;
  if (w.empty() || w.size() > kMaxChainLength + 1)
    throw Error(ErrorKind::kEmptyProfile, "chain length weights must cover 1..4 lengths");
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  if (!(total > 0.0) || std::any_of(w.begin(), w.end(), [](double v) { return v < 0.0; }))
    throw Error(ErrorKind::kEmptyProfile, "chain length weights must be non-negative, not all zero");
  const bool wants_codecs = std::any_of(w.begin() + 1, w.end(), [](double v) { return v > 0.0; });
  if (wants_codecs && profile.codecs.empty())
    throw Error(ErrorKind::kEmptyProfile, "profile allows codec steps but lists no codecs");
  for (const auto& c : profile.codecs)
    if (c.bitrates.empty())
      throw Error(ErrorKind::kEmptyProfile,
                  "codec " + std::string(to_string(c.codec)) + " has no bitrates");

  DegradationPlan plan;
  plan.seed = rng();
  plan.noise.source = profile.noise_source;
  plan.noise.wav_path = profile.noise_wav;
  if (profile.snr.fixed) {
    plan.noise.snr_db = profile.snr.fixed_db;
  } else {
    if (!(profile.snr.hi_db >= profile.snr.lo_db))
      throw Error(ErrorKind::kEmptyProfile, "SNR interval is empty");
    if (uniform(rng, 0.0, 1.0) < profile.snr.p_infinite) plan.noise.snr_db = std::nullopt;
    else plan.noise.snr_db = uniform(rng, profile.snr.lo_db, profile.snr.hi_db);
  }

  std::discrete_distribution<std::size_t> length_dist(w.begin(), w.end());
  const std::size_t length = length_dist(rng);
  for (std::size_t i = 0; i < length; ++i) {
    const CodecChoice& choice = profile.codecs[uniform_index(rng, profile.codecs.size())];
    CodecStep step;
    step.codec = choice.codec;
    step.external_name = choice.external_name;
    step.bitrate_kbps = choice.bitrates[uniform_index(rng, choice.bitrates.size())];
    plan.chain.push_back(step);
  }
  validate(plan);
  return plan;
}

AudioClip apply_plan(const AudioClip& reverberant, const DegradationPlan& plan,
                     const CodecBridge* bridge, const AudioClip* noise_source) {
  validate(plan);
  AudioClip current = reverberant;
  if (plan.noise.snr_db) {
    const std::uint64_t noise_seed = derive_seed(plan.seed, 0, "noise");
    AudioClip noise;
    if (plan.noise.source == NoiseConfig::Source::kWavFile) {
      if (noise_source == nullptr)
        throw Error(ErrorKind::kMissingPool, "noise WAV requested but not loaded");
      noise = noise_excerpt(*noise_source, current.samples.size(), noise_seed);
    } else {
      noise = white_noise(current.samples.size(), current.sample_rate, noise_seed);
    }
    current = mix_noise(current, noise, plan.noise.snr_db);
    audio::normalize_if_clipping(current.samples);
  }
  if (!plan.chain.empty()) {
    current = apply_codec_chain(current, plan.chain, bridge);
    audio::normalize_if_clipping(current.samples);
  }
  return current;
}

}  // namespace envid::degrade
