#include "envid/pipeline/ingest.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>

#include "envid/audio/signal.hpp"
#include "envid/audio/wav.hpp"
#include "envid/error.hpp"
#include "envid/pipeline/config.hpp"

namespace envid::pipeline {

CorpusKind parse_corpus_kind(const std::string& name) {
  if (name == "speech") return CorpusKind::kSpeech;
  if (name == "air") return CorpusKind::kAir;
  if (name == "noise") return CorpusKind::kNoise;
  throw Error(ErrorKind::kConfig, "unknown corpus kind '" + name + "'");
}

std::string to_string(CorpusKind k) {
  switch (k) {
    case CorpusKind::kSpeech: return "speech";
    case CorpusKind::kAir: return "air";
    case CorpusKind::kNoise: return "noise";
  }
  return "speech";
}

std::size_t quietest_frame(std::span<const double> x, int sample_rate) {
  const auto frame = static_cast<std::size_t>(sample_rate / 50);
  if (x.size() <= frame) return 0;
  std::size_t best = 0;
  double best_e = std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s + frame <= x.size(); s += frame) {
    double e = 0.0;
    for (std::size_t i = s; i < s + frame; ++i) e += x[i] * x[i];
    if (e < best_e) {
      best_e = e;
      best = s;
    }
  }
  return best;
}

std::vector<double> extend_by_concatenation(std::span<const double> x, std::size_t length,
                                            int sample_rate) {
  if (x.empty()) throw Error(ErrorKind::kUnreadableFile, "cannot extend an empty clip");
  std::vector<double> out(x.begin(), x.end());
  const std::size_t p = quietest_frame(x, sample_rate);
  while (out.size() < length) out.insert(out.end(), x.begin() + static_cast<std::ptrdiff_t>(p), x.end());
  out.resize(length);
  return out;
}

nlohmann::json ingest_corpus(const std::filesystem::path& dir, CorpusKind kind,
                             const std::filesystem::path& out, const std::string& pool) {
  if (!std::filesystem::is_directory(dir))
    throw Error(ErrorKind::kEmptyDirectory, dir.string() + " is not a directory");
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
    auto ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (e.is_regular_file() && ext == ".wav") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw Error(ErrorKind::kEmptyDirectory, "no WAV files in " + dir.string());

  const std::string name = to_string(kind) + "-" + pool;
  std::filesystem::create_directories(out / name);
  nlohmann::json entries = nlohmann::json::array();
  for (std::size_t f = 0; f < files.size(); ++f) {
    auto clip = audio::read_wav(files[f]);
    if (clip.sample_rate != audio::kWorkingRate)
      clip = {audio::kWorkingRate, audio::resample(clip.samples, clip.sample_rate, audio::kWorkingRate)};
    const std::string source = std::filesystem::relative(files[f], dir).string();
    auto emit = [&](std::span<const double> samples, std::size_t segment, nlohmann::json extra) {
      char buf[48];
      std::snprintf(buf, sizeof buf, "%05zu_%03zu.wav", f, segment);
      const std::string rel = name + "/" + buf;
      audio::write_wav(out / rel, audio::kWorkingRate, samples);
      nlohmann::json e = {{"path", rel}, {"source", source}, {"segment", segment},
                          {"seconds", static_cast<double>(samples.size()) / audio::kWorkingRate}};
      e.update(extra);
      entries.push_back(e);
    };
    if (kind == CorpusKind::kSpeech) {
      const std::size_t seg = audio::kClipSamples;
      if (clip.samples.size() < seg) {
        emit(extend_by_concatenation(clip.samples, seg, audio::kWorkingRate), 0, {{"extended", true}});
      } else {
        for (std::size_t s = 0; s + seg <= clip.samples.size(); s += seg)
          emit(std::span<const double>(clip.samples).subspan(s, seg), s / seg, {{"extended", false}});
      }
    } else {
      nlohmann::json labels = nlohmann::json::object();
      auto sidecar = files[f];
      sidecar.replace_extension(".json");
      if (kind == CorpusKind::kAir && std::filesystem::exists(sidecar)) labels = read_json(sidecar);
      if (kind == CorpusKind::kAir && !labels.contains("room_id"))
        labels["room_id"] = files[f].parent_path().filename().string();
      emit(clip.samples, 0, kind == CorpusKind::kAir ? nlohmann::json{{"labels", labels}} : nlohmann::json::object());
    }
  }
  nlohmann::json index = {{"kind", to_string(kind)}, {"pool", pool}, {"source_dir", dir.string()},
                          {"entries", entries}};
  write_json(out / (name + ".json"), index);
  return index;
}

}  // namespace envid::pipeline
