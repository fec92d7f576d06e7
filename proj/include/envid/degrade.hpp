#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "envid/audio/signal.hpp"
#include "envid/rng.hpp"

namespace envid::degrade {

using audio::AudioClip;

enum class CodecId { kMp3, kAmrNb, kGsm, kVorbis, kExternal, kSimulated };

std::string_view to_string(CodecId id);
CodecId parse_codec(std::string_view name);

// Supported bitrates (kbps) for MP3, AMR-NB and GSM; empty for other codecs.
std::span<const double> bitrate_set(CodecId id);

struct CodecStep {
  CodecId codec = CodecId::kSimulated;
  double bitrate_kbps = 128.0;
  // Bridge entry for kExternal (e.g. a neural codec wrapper).
  std::string external_name;
};

// Throws kInvalidArgument for a non-positive bitrate or one outside the
// codec's fixed set.
void validate(const CodecStep& step);

struct NoiseConfig {
  enum class Source { kWhite, kWavFile };
  // nullopt means infinite SNR (no noise).
  std::optional<double> snr_db;
  Source source = Source::kWhite;
  std::string wav_path;
};

inline constexpr std::size_t kMaxChainLength = 3;

struct DegradationPlan {
  NoiseConfig noise;
  std::vector<CodecStep> chain;
  std::uint64_t seed = 0;
};

void validate(const DegradationPlan& plan);

// Reverberant speech: speech convolved with the AIR, cropped or padded to
// 3 s, peak-normalized to 0.9 when it would clip. Throws
// kSampleRateMismatch.
AudioClip convolve_reverb(const AudioClip& speech, const AudioClip& air);

// Same without the final clipping normalization.
AudioClip convolve_reverb_raw(const AudioClip& speech, const AudioClip& air);

// Noise scale for a target SNR on full-clip RMS.
double noise_gain(std::span<const double> signal, std::span<const double> noise, double snr_db);

// signal + gain * noise; returns the signal unchanged at infinite SNR.
// Throws kSilentNoiseSource, kLengthMismatch, kSampleRateMismatch.
AudioClip mix_noise(const AudioClip& signal, const AudioClip& noise, std::optional<double> snr_db);

// Deterministic white Gaussian noise of the given length.
AudioClip white_noise(std::size_t length, int sample_rate, std::uint64_t seed);

// Excerpt of `source` (looped when shorter) starting at a seed-chosen offset.
AudioClip noise_excerpt(const AudioClip& source, std::size_t length, std::uint64_t seed);

// Hermetic lossy stand-in: low-pass at min(sr/2, 350 * kbps) Hz, then
// per-frame (1024 samples) magnitude quantization to max(2, round(kbps))
// levels within each of 16 bands, phase preserved.
AudioClip simulated_codec(const AudioClip& signal, double bitrate_kbps);

class CodecBridge;

// Applies steps left to right, re-standardizing to 3 s. Non-simulated steps
// require a bridge (kCodecUnavailable otherwise).
AudioClip apply_codec_chain(const AudioClip& signal, std::span<const CodecStep> chain,
                            const CodecBridge* bridge = nullptr);

struct SnrLaw {
  // When `fixed` is set, every draw uses `fixed_db` (nullopt = infinite).
  bool fixed = true;
  std::optional<double> fixed_db;
  double lo_db = -10.0;
  double hi_db = 50.0;
  double p_infinite = 1.0 / 63.0;
};

struct CodecChoice {
  CodecId codec = CodecId::kSimulated;
  std::vector<double> bitrates;
  std::string external_name;
};

struct DegradationProfile {
  std::string name = "clean";
  SnrLaw snr;
  NoiseConfig::Source noise_source = NoiseConfig::Source::kWhite;
  std::string noise_wav;
  std::vector<CodecChoice> codecs;
  // Probability weights of chain lengths 0, 1, 2, 3.
  std::vector<double> chain_length_weights{1.0};

  static DegradationProfile clean();
  // Noise in [-10, 50] dB plus infinity, then zero or one MP3/AMR-NB/GSM
  // step with a uniformly drawn supported bitrate.
  static DegradationProfile training();
  // `steps` compressions drawn from the training codec distribution, no noise.
  static DegradationProfile multi_compression(std::size_t steps);
  // Single simulated-codec step at a fixed bitrate, no noise.
  static DegradationProfile simulated(double bitrate_kbps);
};

// Throws kEmptyProfile when the profile cannot produce a plan.
DegradationPlan sample_degradation(Rng& rng, const DegradationProfile& profile);

// Full degradation of a reverberant clip: noise (white or excerpt of
// `noise_source`), then the codec chain, then clipping normalization.
AudioClip apply_plan(const AudioClip& reverberant, const DegradationPlan& plan,
                     const CodecBridge* bridge = nullptr,
                     const AudioClip* noise_source = nullptr);

}  // namespace envid::degrade
