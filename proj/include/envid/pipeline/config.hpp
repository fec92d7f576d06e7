#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "envid/degrade.hpp"
#include "envid/model/network.hpp"
#include "envid/room_sim.hpp"

namespace envid::pipeline {

struct SplitConfig {
  std::string name = "train";
  std::size_t rooms = 0;
  // "volume": one room per stratum of [volume_lo, volume_hi], categories
  // cycled; "uniform": sample_room over the full length range.
  std::string sampling = "volume";
  double volume_lo = 10.0;
  double volume_hi = 3750.0;
  std::optional<double> absorption;  // fixed c_a, otherwise uniform [0.1, 0.8]
  // Reuse the rooms (and class ids) of an earlier split.
  std::string same_rooms_as;
  std::string profile = "clean";
  std::string speech_pool = "train";
  std::size_t speech_clips = 8;
  // When larger than speech_clips, each AIR draws its clips without
  // replacement from this many pool entries; otherwise every AIR uses
  // entries 0 .. speech_clips-1.
  std::size_t speech_pool_size = 0;
};

struct GenerateConfig {
  std::uint64_t seed = 0;
  std::vector<SplitConfig> splits;
  std::vector<std::string> categories{"corridor", "rectangle", "square"};
  room::GridSpec grid;
  int sample_rate = audio::kWorkingRate;
  // Upper bound on rendered AIR length in seconds (0 = room default).
  double max_air_seconds = 0.0;
  // "synthetic" or the path of a speech pool index written by `ingest`.
  std::string speech_source = "synthetic";
  std::string noise_wav;
  bool write_airs = true;
  bool write_clips = false;
};

struct TrainConfig {
  std::size_t n_way = 10;
  std::size_t k_shot = 15;
  std::size_t query_cap = 8;
  std::size_t episodes_per_epoch = 100;
  std::size_t max_epochs = 300;
  std::size_t patience = 30;
  double lr = 1e-4;
  bool regression = true;
  std::uint64_t seed = 0;
  std::size_t val_episodes = 50;
  std::size_t val_samples_per_class = 24;
  bool allow_fallback = true;
  model::ModelConfig model;
};

struct EvalConfig {
  std::size_t n_way = 10;
  std::size_t k_shot = 15;
  std::size_t query_cap = 8;
  std::size_t episodes = 200;
  std::size_t open_trials = 2000;
  std::size_t k_max = 15;
  std::uint64_t seed = 0;
  std::string split = "test";
};

// "clean", "training", "simulated:<kbps>", "compression:<steps>",
// "noise:<snr dB>". Throws kConfig.
degrade::DegradationProfile parse_profile(const std::string& spec, const std::string& noise_wav);

nlohmann::json to_json(const GenerateConfig& c);
nlohmann::json to_json(const TrainConfig& c);
nlohmann::json to_json(const EvalConfig& c);
GenerateConfig generate_config_from_json(const nlohmann::json& j);
TrainConfig train_config_from_json(const nlohmann::json& j);
EvalConfig eval_config_from_json(const nlohmann::json& j);

void validate(const GenerateConfig& c);
void validate(const TrainConfig& c);

// Reads a JSON file; throws kConfig when missing or malformed.
nlohmann::json read_json(const std::filesystem::path& path);
// Deterministic pretty print with a trailing newline.
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

// FNV-1a of the canonical dump.
std::uint64_t json_hash(const nlohmann::json& j);

}  // namespace envid::pipeline
