#include "envid/audio/wav.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

#include "envid/error.hpp"

namespace envid::audio {
namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint32_t le32(const unsigned char* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
         (std::uint32_t(p[3]) << 24);
}
std::uint16_t le16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put32(std::ostream& os, std::uint32_t v) {
  const std::array<char, 4> b = {char(v & 0xFF), char((v >> 8) & 0xFF), char((v >> 16) & 0xFF),
                                 char((v >> 24) & 0xFF)};
  os.write(b.data(), 4);
}
void put16(std::ostream& os, std::uint16_t v) {
  const std::array<char, 2> b = {char(v & 0xFF), char((v >> 8) & 0xFF)};
  os.write(b.data(), 2);
}

double decode_sample(const unsigned char* p, std::uint16_t format, std::uint16_t bits) {
  if (format == kFormatFloat) {
    if (bits == 32) {
      const std::uint32_t u = le32(p);
      return static_cast<double>(std::bit_cast<float>(u));
    }
    const std::uint64_t u = std::uint64_t(le32(p)) | (std::uint64_t(le32(p + 4)) << 32);
    return std::bit_cast<double>(u);
  }
  switch (bits) {
    case 8: return (static_cast<double>(p[0]) - 128.0) / 128.0;
    case 16: return static_cast<double>(static_cast<std::int16_t>(le16(p))) / 32768.0;
    case 24: {
      std::int32_t v = std::int32_t(p[0]) | (std::int32_t(p[1]) << 8) | (std::int32_t(p[2]) << 16);
      if (v & 0x800000) v -= 0x1000000;
      return static_cast<double>(v) / 8388608.0;
    }
    default: return static_cast<double>(static_cast<std::int32_t>(le32(p))) / 2147483648.0;
  }
}

}  // namespace

AudioClip read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kUnreadableFile, "cannot open " + path.string());
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                         std::istreambuf_iterator<char>());
  auto fail = [&](const std::string& why) {
    return Error(ErrorKind::kUnreadableFile, path.string() + ": " + why);
  };
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw fail("not a RIFF/WAVE file");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t size = le32(chunk + 4);
    const std::size_t body = pos + 8;
    const std::size_t avail = bytes.size() - body;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16 || avail < 16) throw fail("truncated fmt chunk");
      format = le16(chunk + 8);
      channels = le16(chunk + 10);
      rate = le32(chunk + 12);
      bits = le16(chunk + 22);
      if (format == kFormatExtensible && size >= 40 && avail >= 40) format = le16(chunk + 32);
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = chunk + 8;
      data_size = std::min<std::size_t>(size, avail);
    }
    pos = body + size + (size & 1u);
  }
  if (format == 0 || data == nullptr) throw fail("missing fmt or data chunk");
  const bool pcm_ok = format == kFormatPcm && (bits == 8 || bits == 16 || bits == 24 || bits == 32);
  const bool float_ok = format == kFormatFloat && (bits == 32 || bits == 64);
  if (!pcm_ok && !float_ok) throw fail("unsupported sample format");
  if (channels == 0 || rate == 0) throw fail("invalid channel count or rate");

  const std::size_t frame_bytes = std::size_t(bits / 8) * channels;
  const std::size_t frames = data_size / frame_bytes;
  AudioClip clip;
  clip.sample_rate = static_cast<int>(rate);
  clip.samples.resize(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c)
      acc += decode_sample(data + f * frame_bytes + c * (bits / 8), format, bits);
    clip.samples[f] = acc / channels;
  }
  return clip;
}

void write_wav(const std::filesystem::path& path, int sample_rate, std::span<const double> samples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kUnreadableFile, "cannot write " + path.string());
  const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 4);
  out.write("RIFF", 4);
  put32(out, 36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  put32(out, 16);
  put16(out, kFormatFloat);
  put16(out, 1);
  put32(out, static_cast<std::uint32_t>(sample_rate));
  put32(out, static_cast<std::uint32_t>(sample_rate) * 4);
  put16(out, 4);
  put16(out, 32);
  out.write("data", 4);
  put32(out, data_bytes);
  for (double s : samples) put32(out, std::bit_cast<std::uint32_t>(static_cast<float>(s)));
}

}  // namespace envid::audio
