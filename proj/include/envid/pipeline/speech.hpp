#pragma once

#include <cstdint>
#include <vector>

#include "envid/audio/signal.hpp"

namespace envid::pipeline {

// Dry speech-like test signal: syllables of a harmonic glottal source with
// moving formant resonances, fricative bursts and pauses. Deterministic in
// the seed; stands in for an anechoic corpus when none is supplied.
audio::AudioClip synth_speech(std::uint64_t seed, double seconds = audio::kClipSeconds,
                              int sample_rate = audio::kWorkingRate);

std::vector<audio::AudioClip> synth_speech_pool(std::uint64_t seed, std::size_t count);

}  // namespace envid::pipeline
