#pragma once

#include <filesystem>
#include <span>

#include "envid/audio/signal.hpp"

namespace envid::audio {

// Reads PCM (8/16/24/32-bit) or IEEE-float (32/64-bit) RIFF/WAVE files,
// including WAVE_FORMAT_EXTENSIBLE. Multi-channel audio is downmixed to mono
// by the channel mean. Throws Error(kUnreadableFile) on malformed input.
AudioClip read_wav(const std::filesystem::path& path);

// Writes mono 32-bit float WAV.
void write_wav(const std::filesystem::path& path, int sample_rate, std::span<const double> samples);

}  // namespace envid::audio
