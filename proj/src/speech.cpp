#include "envid/pipeline/speech.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "envid/rng.hpp"

namespace envid::pipeline {
namespace {

struct Vowel {
  double f1, f2, f3;
};

constexpr std::array<Vowel, 6> kVowels = {{
    {730, 1090, 2440},  // a
    {530, 1840, 2480},  // e
    {270, 2290, 3010},  // i
    {570, 840, 2410},   // o
    {300, 870, 2240},   // u
    {490, 1350, 1690},  // schwa-ish
}};

// Two-pole resonator with unit gain at its centre frequency.
struct Resonator {
  double y1 = 0.0, y2 = 0.0;
  double step(double x, double freq, double bw, double rate) {
    const double r = std::exp(-std::numbers::pi * bw / rate);
    const double c = 2.0 * r * std::cos(2.0 * std::numbers::pi * freq / rate);
    const double gain = (1.0 - r) * std::sqrt(1.0 - 2.0 * r * std::cos(4.0 * std::numbers::pi * freq / rate) + r * r);
    const double y = gain * x + c * y1 - r * r * y2;
    y2 = y1;
    y1 = y;
    return y;
  }
};

}  // namespace

audio::AudioClip synth_speech(std::uint64_t seed, double seconds, int sample_rate) {
  Rng rng(seed);
  const auto n = static_cast<std::size_t>(std::llround(seconds * sample_rate));
  const double rate = sample_rate;
  const double f0_base = uniform(rng, 90.0, 230.0);
  const double syllable_rate = uniform(rng, 3.5, 5.5);
  const double tilt = uniform(rng, 0.8, 1.4);
  const double formant_scale = f0_base > 160.0 ? uniform(rng, 1.1, 1.2) : uniform(rng, 0.95, 1.05);

  std::vector<double> out(n, 0.0);
  std::array<Resonator, 3> res{};
  Resonator fric{};
  double phase = 0.0;
  std::size_t t = static_cast<std::size_t>(uniform(rng, 0.0, 0.15) * rate);
  while (t < n) {
    const double dur = std::max(0.08, uniform(rng, 0.6, 1.4) / syllable_rate);
    const auto len = static_cast<std::size_t>(dur * rate);
    const double kind = uniform(rng, 0.0, 1.0);
    if (kind < 0.12) {  // pause
      t += len;
      continue;
    }
    const bool voiced = kind >= 0.25;
    const Vowel a = kVowels[uniform_index(rng, kVowels.size())];
    const Vowel b = kVowels[uniform_index(rng, kVowels.size())];
    const double f0_start = f0_base * uniform(rng, 0.85, 1.2);
    const double f0_end = f0_base * uniform(rng, 0.75, 1.1);
    const double level = uniform(rng, 0.5, 1.0);
    const double fric_centre = uniform(rng, 2500.0, 6000.0);
    for (std::size_t i = 0; i < len && t + i < n; ++i) {
      const double u = static_cast<double>(i) / static_cast<double>(len);
      const double env = level * std::sin(std::numbers::pi * u) * std::sin(std::numbers::pi * u);
      double s;
      if (voiced) {
        const double f0 = f0_start + (f0_end - f0_start) * u;
        phase += 2.0 * std::numbers::pi * f0 / rate;
        if (phase > 2.0 * std::numbers::pi) phase -= 2.0 * std::numbers::pi;
        double src = 0.0;
        const int harmonics = static_cast<int>(std::min(40.0, 0.45 * rate / f0));
        for (int h = 1; h <= harmonics; ++h) src += std::sin(h * phase) / std::pow(h, tilt);
        src += 0.02 * normal(rng);
        const double f1 = formant_scale * (a.f1 + (b.f1 - a.f1) * u);
        const double f2 = formant_scale * (a.f2 + (b.f2 - a.f2) * u);
        const double f3 = formant_scale * (a.f3 + (b.f3 - a.f3) * u);
        s = res[0].step(src, f1, 80.0, rate) + 0.7 * res[1].step(src, f2, 100.0, rate) +
            0.4 * res[2].step(src, f3, 140.0, rate);
      } else {
        s = 0.5 * fric.step(normal(rng), fric_centre, 1500.0, rate);
      }
      out[t + i] += env * s;
    }
    t += len;
  }
  const double r = audio::rms(out);
  if (r > 0.0)
    for (double& v : out) v *= 0.08 / r;
  audio::normalize_if_clipping(out);
  return {sample_rate, std::move(out)};
}

std::vector<audio::AudioClip> synth_speech_pool(std::uint64_t seed, std::size_t count) {
  std::vector<audio::AudioClip> pool;
  pool.reserve(count);
  for (std::size_t i = 0; i < count; ++i) pool.push_back(synth_speech(derive_seed(seed, i, "speech")));
  return pool;
}

}  // namespace envid::pipeline
