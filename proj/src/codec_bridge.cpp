#include "envid/codec_bridge.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "envid/audio/wav.hpp"
#include "envid/error.hpp"

namespace envid::degrade {
namespace {

class TempDir {
 public:
  TempDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "envid-codec-XXXXXX").string();
    if (mkdtemp(tmpl.data()) == nullptr)
      throw Error(ErrorKind::kCodecFailure, "cannot create temporary directory");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

std::string quote(const std::filesystem::path& p) {
  std::string out = "'";
  for (char c : p.string()) {
    if (c == '\'') out += "'\\''";
    else out += c;
  }
  return out + "'";
}

std::string format_kbps(double kbps) {
  std::ostringstream os;
  os << kbps;
  return os.str();
}

bool tool_exists(const std::string& command) {
  std::istringstream is(command);
  std::string tool;
  is >> tool;
  if (tool.empty()) return false;
  if (tool.find('/') != std::string::npos) return access(tool.c_str(), X_OK) == 0;
  const char* path = std::getenv("PATH");
  if (path == nullptr) return false;
  std::stringstream dirs(path);
  std::string dir;
  while (std::getline(dirs, dir, ':')) {
    if (dir.empty()) continue;
    if (access((std::filesystem::path(dir) / tool).c_str(), X_OK) == 0) return true;
  }
  return false;
}

void run(const std::string& command) {
  if (!tool_exists(command))
    throw Error(ErrorKind::kCodecUnavailable, "codec tool not found for: " + command);
  const std::string silenced = command + " >/dev/null 2>&1";
  const int status = std::system(silenced.c_str());
  if (status == -1) throw Error(ErrorKind::kCodecFailure, "cannot spawn: " + command);
  if (WIFEXITED(status)) {
    const int code = WEXITSTATUS(status);
    if (code == 127) throw Error(ErrorKind::kCodecUnavailable, "command not found: " + command);
    if (code != 0)
      throw Error(ErrorKind::kCodecFailure,
                  "exit status " + std::to_string(code) + " from: " + command);
    return;
  }
  throw Error(ErrorKind::kCodecFailure, "abnormal termination: " + command);
}

}  // namespace

std::string fill_template(std::string tmpl, const std::map<std::string, std::string>& values) {
  for (const auto& [key, value] : values) {
    const std::string needle = "{" + key + "}";
    for (std::size_t pos = tmpl.find(needle); pos != std::string::npos;
         pos = tmpl.find(needle, pos + value.size()))
      tmpl.replace(pos, needle.size(), value);
  }
  return tmpl;
}

int codec_rate(CodecId id) {
  return id == CodecId::kAmrNb || id == CodecId::kGsm ? 8000 : audio::kWorkingRate;
}

std::string bridge_key(const CodecStep& step) {
  return step.codec == CodecId::kExternal ? step.external_name : std::string(to_string(step.codec));
}

CodecBridge::CodecBridge(std::map<std::string, CodecCommand> commands)
    : commands_(std::move(commands)) {}

CodecBridge CodecBridge::load(const std::filesystem::path& config) {
  std::ifstream in(config);
  if (!in) throw Error(ErrorKind::kConfig, "cannot open codec bridge config " + config.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kConfig, "codec bridge config: " + std::string(e.what()));
  }
  if (!j.contains("codecs") || !j["codecs"].is_object())
    throw Error(ErrorKind::kConfig, "codec bridge config needs a 'codecs' object");
  std::map<std::string, CodecCommand> commands;
  for (const auto& [name, entry] : j["codecs"].items()) {
    if (!entry.contains("encode") || !entry.contains("decode"))
      throw Error(ErrorKind::kConfig, "codec '" + name + "' needs encode and decode templates");
    CodecCommand c;
    c.encode = entry["encode"].get<std::string>();
    c.decode = entry["decode"].get<std::string>();
    c.extension = entry.value("extension", std::string("bin"));
    int default_rate = audio::kWorkingRate;
    try {
      default_rate = codec_rate(parse_codec(name));
    } catch (const Error&) {
    }
    c.sample_rate = entry.value("sample_rate", default_rate);
    commands.emplace(name, std::move(c));
  }
  return CodecBridge(std::move(commands));
}

AudioClip CodecBridge::apply(const AudioClip& clip, const CodecStep& step) const {
  const std::string key = bridge_key(step);
  const auto it = commands_.find(key);
  if (it == commands_.end())
    throw Error(ErrorKind::kCodecUnavailable, "no bridge entry for codec " + key);
  const CodecCommand& cmd = it->second;

  TempDir dir;
  const auto wav_in = dir.path() / "input.wav";
  const auto encoded = dir.path() / ("encoded." + cmd.extension);
  const auto wav_out = dir.path() / "decoded.wav";
  audio::write_wav(wav_in, cmd.sample_rate,
                   audio::resample(clip.samples, clip.sample_rate, cmd.sample_rate));

  const std::map<std::string, std::string> enc_values = {
      {"input", quote(wav_in)},
      {"output", quote(encoded)},
      {"bitrate", format_kbps(step.bitrate_kbps)},
      {"bitrate_bps", std::to_string(std::llround(step.bitrate_kbps * 1000.0))}};
  run(fill_template(cmd.encode, enc_values));
  std::map<std::string, std::string> dec_values = enc_values;
  dec_values["input"] = quote(encoded);
  dec_values["output"] = quote(wav_out);
  run(fill_template(cmd.decode, dec_values));

  AudioClip decoded;
  try {
    decoded = audio::read_wav(wav_out);
  } catch (const Error& e) {
    throw Error(ErrorKind::kCodecFailure, "undecodable codec output: " + std::string(e.what()));
  }
  AudioClip out;
  out.sample_rate = clip.sample_rate;
  out.samples = audio::resample(decoded.samples, decoded.sample_rate, clip.sample_rate);
  return out;
}

}  // namespace envid::degrade
