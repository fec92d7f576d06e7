#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "envid/audio/signal.hpp"
#include "envid/codec_bridge.hpp"
#include "envid/degrade.hpp"
#include "envid/pipeline/config.hpp"
#include "envid/room_sim.hpp"

namespace envid::pipeline {

inline constexpr int kManifestVersion = 1;

struct RoomEntry {
  room::RoomSpec room;
  std::size_t class_id = 0;
  std::string split;
};

struct RecordLabels {
  double volume = 0.0;
  double rt60 = 0.0;  // Schroeder estimate on the clean AIR; 0 until rendered
  double rt60_sabine = 0.0;
};

struct SampleRecord {
  std::size_t index = 0;
  std::string split;
  std::size_t class_id = 0;
  std::string room_id;
  std::string category;
  room::GridIndex grid;
  std::string speech_pool;
  std::size_t speech_index = 0;
  degrade::DegradationPlan plan;
  RecordLabels labels;
  std::uint64_t seed = 0;
  std::string air_path;
  std::string clip_path;
  std::string feature_key;
};

struct DatasetManifest {
  int version = kManifestVersion;
  std::uint64_t seed = 0;
  GenerateConfig config;
  std::vector<RoomEntry> rooms;  // position = class id
  std::vector<SampleRecord> records;

  std::vector<std::size_t> split_records(const std::string& split) const;
  bool has_split(const std::string& split) const;
};

nlohmann::json to_json(const DatasetManifest& m);
DatasetManifest manifest_from_json(const nlohmann::json& j);
void write_manifest(const std::filesystem::path& path, const DatasetManifest& m);
DatasetManifest read_manifest(const std::filesystem::path& path);

// Rooms and records with sampled degradation plans and geometric labels;
// nothing is rendered. Record i carries seed derive_seed(seed, i, "record").
DatasetManifest plan_dataset(const GenerateConfig& config);

// Dry speech for a pool: synthetic, or segments listed by an ingest index.
class SpeechSource {
 public:
  explicit SpeechSource(const GenerateConfig& config);
  const audio::AudioClip& get(const std::string& pool, std::size_t index);

 private:
  static constexpr std::size_t kMinSyntheticPool = 32;

  std::uint64_t seed_;
  std::string source_;
  std::map<std::string, std::size_t> synthetic_sizes_;
  std::map<std::string, std::vector<audio::AudioClip>> pools_;
};

struct RenderContext {
  const degrade::CodecBridge* bridge = nullptr;
  const audio::AudioClip* noise = nullptr;
};

room::Air render_air(const DatasetManifest& m, std::size_t class_id, room::GridIndex grid);

// Regenerates one record's degraded clip from the manifest alone (samples
// rounded to float precision, matching the stored WAV).
audio::AudioClip render_record(const DatasetManifest& m, const SampleRecord& r,
                               SpeechSource& speech, const RenderContext& ctx = {});

// Features for a subset of records, row-major (records x 96*276).
struct FeatureSet {
  std::vector<std::size_t> records;
  std::vector<float> values;
  std::size_t row_size() const;
  const float* row(std::size_t i) const { return values.data() + i * row_size(); }
};

struct Dataset {
  DatasetManifest manifest;
  std::map<std::string, FeatureSet> features;  // by split
};

// Renders every record: AIRs (labels filled in), degraded clips, features.
// When `out_dir` is non-empty also writes manifest.json, AIR WAVs,
// optional clip WAVs and the per-clip feature cache.
Dataset generate_dataset(const GenerateConfig& config, const std::filesystem::path& out_dir = {},
                         const RenderContext& ctx = {});

// Features of one split from a generated directory; missing cache entries
// are recomputed from the clip WAV or by re-rendering.
FeatureSet load_features(const DatasetManifest& m, const std::filesystem::path& dir,
                         const std::string& split, const RenderContext& ctx = {});

// Loads the noise WAV named in the config (resampled to 16 kHz), if any.
std::optional<audio::AudioClip> load_noise(const GenerateConfig& config);

}  // namespace envid::pipeline
