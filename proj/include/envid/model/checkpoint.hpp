#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace envid::model {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// File layout (little-endian): "ENVID", u32 version, u32 config length,
// config JSON text, u64 epoch, f64 validation metric, u32 RNG state length,
// RNG state text, u64 parameter count, f32 parameters, u64 optimizer step,
// f32 first moments, f32 second moments.
struct Checkpoint {
  std::string config_json;
  std::uint64_t epoch = 0;
  double val_metric = 0.0;
  std::string rng_state;
  std::vector<float> parameters;
  std::uint64_t adam_step = 0;
  std::vector<float> adam_m;
  std::vector<float> adam_v;

  bool operator==(const Checkpoint&) const = default;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
// Throws kUnreadableFile or kCorruptFile.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace envid::model
