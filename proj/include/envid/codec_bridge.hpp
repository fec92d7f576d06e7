#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "envid/degrade.hpp"

namespace envid::degrade {

// Command templates for one codec. Placeholders: {input}, {output},
// {bitrate} (kbps, shortest form), {bitrate_bps}.
struct CodecCommand {
  std::string encode;
  std::string decode;
  std::string extension = "bin";
  int sample_rate = audio::kWorkingRate;  // rate the codec is fed at
};

// Runs external encoders/decoders through shell command templates. Files are
// exchanged as WAV in, codec container in between, WAV back. Each call uses
// its own temporary directory, so concurrent calls are safe.
//
// Config file (JSON):
//   {"codecs": {"MP3": {"encode": "...", "decode": "...",
//                       "extension": "mp3", "sample_rate": 16000}, ...}}
class CodecBridge {
 public:
  CodecBridge() = default;
  explicit CodecBridge(std::map<std::string, CodecCommand> commands);

  // Throws kConfig on malformed files.
  static CodecBridge load(const std::filesystem::path& config);

  bool supports(const std::string& name) const { return commands_.contains(name); }

  // Encode, decode and resample back to the clip's rate. Throws
  // kCodecUnavailable (no entry or tool missing) and kCodecFailure.
  AudioClip apply(const AudioClip& clip, const CodecStep& step) const;

 private:
  std::map<std::string, CodecCommand> commands_;
};

// Default feed rate for a codec: 8 kHz for the narrowband speech codecs.
int codec_rate(CodecId id);

// Bridge key for a step: the external name for kExternal, else the codec name.
std::string bridge_key(const CodecStep& step);

// "{bitrate}"-style substitution.
std::string fill_template(std::string tmpl, const std::map<std::string, std::string>& values);

}  // namespace envid::degrade
