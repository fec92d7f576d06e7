#include "envid/model/checkpoint.hpp"

#include <fstream>

#include "envid/binary_io.hpp"
#include "envid/error.hpp"

namespace envid::model {
namespace {

constexpr char kMagic[5] = {'E', 'N', 'V', 'I', 'D'};

void write_floats(std::ostream& out, const std::vector<float>& v) {
  io::write_le_span(out, std::span<const float>(v));
}

std::vector<float> read_floats(std::istream& in, std::uint64_t n, const std::string& what) {
  std::vector<float> v(n);
  if (!io::read_le_span(in, std::span<float>(v)))
    throw Error(ErrorKind::kCorruptFile, "checkpoint truncated in " + what);
  return v;
}

template <typename U>
U read_or_throw(std::istream& in, const std::string& what) {
  U v{};
  if (!io::read_le(in, v)) throw Error(ErrorKind::kCorruptFile, "checkpoint truncated at " + what);
  return v;
}

std::string read_text(std::istream& in, std::uint32_t n, const std::string& what) {
  std::string s(n, '\0');
  if (!in.read(s.data(), n)) throw Error(ErrorKind::kCorruptFile, "checkpoint truncated in " + what);
  return s;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  if (c.adam_m.size() != c.parameters.size() || c.adam_v.size() != c.parameters.size())
    throw Error(ErrorKind::kShapeMismatch, "optimizer moments do not match parameters");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kUnreadableFile, "cannot write " + path.string());
  out.write(kMagic, sizeof kMagic);
  io::write_le(out, kCheckpointVersion);
  io::write_le(out, static_cast<std::uint32_t>(c.config_json.size()));
  out.write(c.config_json.data(), static_cast<std::streamsize>(c.config_json.size()));
  io::write_le(out, c.epoch);
  io::write_le(out, c.val_metric);
  io::write_le(out, static_cast<std::uint32_t>(c.rng_state.size()));
  out.write(c.rng_state.data(), static_cast<std::streamsize>(c.rng_state.size()));
  io::write_le(out, static_cast<std::uint64_t>(c.parameters.size()));
  write_floats(out, c.parameters);
  io::write_le(out, c.adam_step);
  write_floats(out, c.adam_m);
  write_floats(out, c.adam_v);
  if (!out) throw Error(ErrorKind::kUnreadableFile, "write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kUnreadableFile, "cannot open " + path.string());
  char magic[sizeof kMagic];
  if (!in.read(magic, sizeof magic) || !std::equal(magic, magic + sizeof magic, kMagic))
    throw Error(ErrorKind::kCorruptFile, path.string() + " is not a checkpoint");
  const auto version = read_or_throw<std::uint32_t>(in, "version");
  if (version != kCheckpointVersion)
    throw Error(ErrorKind::kCorruptFile, "unsupported checkpoint version " + std::to_string(version));
  Checkpoint c;
  c.config_json = read_text(in, read_or_throw<std::uint32_t>(in, "config length"), "config");
  c.epoch = read_or_throw<std::uint64_t>(in, "epoch");
  c.val_metric = read_or_throw<double>(in, "metric");
  c.rng_state = read_text(in, read_or_throw<std::uint32_t>(in, "rng length"), "rng state");
  const auto n = read_or_throw<std::uint64_t>(in, "parameter count");
  if (n > (std::uint64_t{1} << 32)) throw Error(ErrorKind::kCorruptFile, "implausible parameter count");
  c.parameters = read_floats(in, n, "parameters");
  c.adam_step = read_or_throw<std::uint64_t>(in, "optimizer step");
  c.adam_m = read_floats(in, n, "first moments");
  c.adam_v = read_floats(in, n, "second moments");
  if (in.peek() != EOF) throw Error(ErrorKind::kCorruptFile, "trailing bytes in checkpoint");
  return c;
}

}  // namespace envid::model
