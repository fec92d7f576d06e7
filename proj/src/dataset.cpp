#include "envid/pipeline/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "envid/audio/wav.hpp"
#include "envid/error.hpp"
#include "envid/features.hpp"
#include "envid/parallel.hpp"
#include "envid/pipeline/speech.hpp"

namespace envid::pipeline {
namespace {

using nlohmann::json;

json plan_to_json(const degrade::DegradationPlan& p) {
  json chain = json::array();
  for (const auto& s : p.chain)
    chain.push_back({{"codec", std::string(degrade::to_string(s.codec))},
                     {"bitrate_kbps", s.bitrate_kbps},
                     {"external_name", s.external_name}});
  return {{"snr_db", p.noise.snr_db ? json(*p.noise.snr_db) : json("inf")},
          {"noise_source", p.noise.source == degrade::NoiseConfig::Source::kWhite ? "white" : "wav"},
          {"noise_wav", p.noise.wav_path},
          {"chain", chain},
          {"seed", p.seed}};
}

degrade::DegradationPlan plan_from_json(const json& j) {
  degrade::DegradationPlan p;
  const auto& snr = j.at("snr_db");
  if (snr.is_number()) p.noise.snr_db = snr.get<double>();
  p.noise.source = j.value("noise_source", std::string("white")) == "wav"
                       ? degrade::NoiseConfig::Source::kWavFile
                       : degrade::NoiseConfig::Source::kWhite;
  p.noise.wav_path = j.value("noise_wav", std::string());
  for (const auto& s : j.at("chain"))
    p.chain.push_back({degrade::parse_codec(s.at("codec").get<std::string>()),
                       s.at("bitrate_kbps").get<double>(), s.value("external_name", std::string())});
  p.seed = j.at("seed").get<std::uint64_t>();
  return p;
}

std::string room_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "room-%03zu", i);
  return buf;
}

std::string air_file(const SampleRecord& r) {
  return "airs/" + r.room_id + "_r" + std::to_string(r.grid.row) + "c" + std::to_string(r.grid.col) + ".wav";
}

room::RoomSpec draw_room(const GenerateConfig& c, const SplitConfig& s, std::size_t i,
                         std::size_t global) {
  Rng rng(derive_seed(c.seed, global, "room"));
  const auto cat = room::parse_category(c.categories[i % c.categories.size()]);
  const double width = (s.volume_hi - s.volume_lo) / static_cast<double>(s.rooms);
  for (int attempt = 0; attempt < 256; ++attempt) {
    room::RoomSpec r;
    if (s.sampling == "volume") {
      const double target = s.volume_lo + (static_cast<double>(i) + uniform(rng, 0.0, 1.0)) * width;
      r = room::sample_room_for_volume(cat, target, rng, s.absorption);
    } else {
      room::RoomOverrides o;
      o.absorption = s.absorption;
      r = room::sample_room(cat, rng, o);
    }
    if (room::fits_grid(r, c.grid)) return r;
  }
  throw Error(ErrorKind::kRoomTooSmall, "could not draw a room that fits the grid");
}

}  // namespace

std::vector<std::size_t> DatasetManifest::split_records(const std::string& split) const {
  std::vector<std::size_t> out;
  for (const auto& r : records)
    if (r.split == split) out.push_back(r.index);
  return out;
}

bool DatasetManifest::has_split(const std::string& split) const {
  return std::any_of(records.begin(), records.end(), [&](const auto& r) { return r.split == split; });
}

std::size_t FeatureSet::row_size() const { return features::kFrames * features::kBins; }

json to_json(const DatasetManifest& m) {
  json rooms = json::array();
  for (const auto& e : m.rooms)
    rooms.push_back({{"room_id", e.room.room_id},
                     {"class_id", e.class_id},
                     {"split", e.split},
                     {"category", std::string(room::to_string(e.room.category))},
                     {"length", e.room.length},
                     {"width", e.room.width},
                     {"height", e.room.height},
                     {"absorption", e.room.absorption}});
  json records = json::array();
  for (const auto& r : m.records)
    records.push_back({{"index", r.index},
                       {"split", r.split},
                       {"class_id", r.class_id},
                       {"room_id", r.room_id},
                       {"category", r.category},
                       {"grid", {r.grid.row, r.grid.col}},
                       {"speech_pool", r.speech_pool},
                       {"speech_index", r.speech_index},
                       {"plan", plan_to_json(r.plan)},
                       {"labels",
                        {{"volume", r.labels.volume},
                         {"rt60", r.labels.rt60},
                         {"rt60_sabine", r.labels.rt60_sabine}}},
                       {"seed", r.seed},
                       {"air_path", r.air_path},
                       {"clip_path", r.clip_path},
                       {"feature_key", r.feature_key}});
  return {{"version", m.version}, {"seed", m.seed},       {"config", to_json(m.config)},
          {"rooms", rooms},       {"records", records}};
}

DatasetManifest manifest_from_json(const json& j) {
  try {
    DatasetManifest m;
    m.version = j.at("version").get<int>();
    if (m.version != kManifestVersion)
      throw Error(ErrorKind::kCorruptFile, "unsupported manifest version " + std::to_string(m.version));
    m.seed = j.at("seed").get<std::uint64_t>();
    m.config = generate_config_from_json(j.at("config"));
    for (const auto& e : j.at("rooms")) {
      RoomEntry r;
      r.room.room_id = e.at("room_id").get<std::string>();
      r.room.category = room::parse_category(e.at("category").get<std::string>());
      r.room.length = e.at("length").get<double>();
      r.room.width = e.at("width").get<double>();
      r.room.height = e.at("height").get<double>();
      r.room.absorption = e.at("absorption").get<double>();
      r.class_id = e.at("class_id").get<std::size_t>();
      r.split = e.at("split").get<std::string>();
      m.rooms.push_back(r);
    }
    for (const auto& e : j.at("records")) {
      SampleRecord r;
      r.index = e.at("index").get<std::size_t>();
      r.split = e.at("split").get<std::string>();
      r.class_id = e.at("class_id").get<std::size_t>();
      r.room_id = e.at("room_id").get<std::string>();
      r.category = e.at("category").get<std::string>();
      r.grid = {e.at("grid").at(0).get<std::size_t>(), e.at("grid").at(1).get<std::size_t>()};
      r.speech_pool = e.at("speech_pool").get<std::string>();
      r.speech_index = e.at("speech_index").get<std::size_t>();
      r.plan = plan_from_json(e.at("plan"));
      const auto& l = e.at("labels");
      r.labels = {l.at("volume").get<double>(), l.at("rt60").get<double>(),
                  l.at("rt60_sabine").get<double>()};
      r.seed = e.at("seed").get<std::uint64_t>();
      r.air_path = e.value("air_path", std::string());
      r.clip_path = e.value("clip_path", std::string());
      r.feature_key = e.value("feature_key", std::string());
      if (r.index != m.records.size() || r.class_id >= m.rooms.size())
        throw Error(ErrorKind::kCorruptFile, "manifest records out of order");
      m.records.push_back(std::move(r));
    }
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kCorruptFile, std::string("manifest: ") + e.what());
  }
}

void write_manifest(const std::filesystem::path& path, const DatasetManifest& m) {
  write_json(path, to_json(m));
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kUnreadableFile, "cannot open manifest " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kCorruptFile, path.string() + ": " + e.what());
  }
  return manifest_from_json(j);
}

DatasetManifest plan_dataset(const GenerateConfig& config) {
  validate(config);
  DatasetManifest m;
  m.seed = config.seed;
  m.config = config;
  std::map<std::string, std::vector<std::size_t>> split_rooms;
  for (const auto& s : config.splits) {
    auto& ids = split_rooms[s.name];
    if (!s.same_rooms_as.empty()) {
      ids = split_rooms.at(s.same_rooms_as);
      continue;
    }
    for (std::size_t i = 0; i < s.rooms; ++i) {
      RoomEntry e;
      e.class_id = m.rooms.size();
      e.split = s.name;
      e.room = draw_room(config, s, i, e.class_id);
      e.room.room_id = room_name(e.class_id);
      ids.push_back(e.class_id);
      m.rooms.push_back(e);
    }
  }
  for (const auto& s : config.splits) {
    const auto profile = parse_profile(s.profile, config.noise_wav);
    for (std::size_t cls : split_rooms.at(s.name)) {
      const auto& room = m.rooms[cls].room;
      for (std::size_t row = 0; row < config.grid.rows; ++row)
        for (std::size_t col = 0; col < config.grid.cols; ++col) {
          std::vector<std::size_t> clips(std::max(s.speech_clips, s.speech_pool_size));
          std::iota(clips.begin(), clips.end(), std::size_t{0});
          if (s.speech_pool_size > s.speech_clips) {
            const auto air_index = (cls * config.grid.rows + row) * config.grid.cols + col;
            Rng draw(derive_seed(config.seed, air_index, "speech-draw/" + s.name));
            for (std::size_t j = 0; j < s.speech_clips; ++j)
              std::swap(clips[j], clips[j + uniform_index(draw, clips.size() - j)]);
          }
          for (std::size_t j = 0; j < s.speech_clips; ++j) {
            SampleRecord r;
            r.index = m.records.size();
            r.split = s.name;
            r.class_id = cls;
            r.room_id = room.room_id;
            r.category = std::string(room::to_string(room.category));
            r.grid = {row, col};
            r.speech_pool = s.speech_pool;
            r.speech_index = clips[j];
            r.seed = derive_seed(config.seed, r.index, "record");
            Rng rng(r.seed);
            r.plan = degrade::sample_degradation(rng, profile);
            r.labels.volume = room.volume();
            r.labels.rt60_sabine = room::sabine_rt60(room);
            m.records.push_back(std::move(r));
          }
        }
    }
  }
  return m;
}

SpeechSource::SpeechSource(const GenerateConfig& config)
    : seed_(config.seed), source_(config.speech_source) {
  for (const auto& s : config.splits) {
    auto& n = synthetic_sizes_[s.speech_pool];
    n = std::max({n, kMinSyntheticPool, s.speech_clips, s.speech_pool_size});
  }
}

const audio::AudioClip& SpeechSource::get(const std::string& pool, std::size_t index) {
  auto it = pools_.find(pool);
  if (it == pools_.end()) {
    std::vector<audio::AudioClip> clips;
    if (source_ == "synthetic") {
      // Enough clips for any split; generated once per pool.
      const auto size = synthetic_sizes_.contains(pool) ? synthetic_sizes_.at(pool) : kMinSyntheticPool;
      clips = synth_speech_pool(derive_seed(seed_, 0, "speech/" + pool), size);
    } else {
      const auto index_path = std::filesystem::path(source_) / ("speech-" + pool + ".json");
      if (!std::filesystem::exists(index_path))
        throw Error(ErrorKind::kMissingPool, "speech pool index " + index_path.string() + " not found");
      const auto j = read_json(index_path);
      for (const auto& e : j.at("entries")) {
        auto clip = audio::read_wav(index_path.parent_path() / e.at("path").get<std::string>());
        clips.push_back(audio::standardize_length(std::move(clip)));
      }
    }
    it = pools_.emplace(pool, std::move(clips)).first;
  }
  if (index >= it->second.size())
    throw Error(ErrorKind::kMissingPool, "speech pool '" + pool + "' has only " +
                                             std::to_string(it->second.size()) + " clips");
  return it->second[index];
}

room::Air render_air(const DatasetManifest& m, std::size_t class_id, room::GridIndex grid) {
  const auto& room = m.rooms.at(class_id).room;
  const auto placements = room::grid_placements(room, m.config.grid);
  const auto& p = placements.at(grid.row * m.config.grid.cols + grid.col);
  std::optional<double> max_time;
  if (m.config.max_air_seconds > 0.0)
    max_time = std::min(room::default_max_time(room), m.config.max_air_seconds);
  return room::simulate_air(room, p, m.config.sample_rate, max_time);
}

namespace {

audio::AudioClip degrade_with_air(const room::Air& air, const SampleRecord& r,
                                  const audio::AudioClip& speech, const RenderContext& ctx) {
  auto rev = degrade::convolve_reverb(speech, audio::AudioClip{air.sample_rate, air.samples});
  auto out = degrade::apply_plan(rev, r.plan, ctx.bridge, ctx.noise);
  for (double& v : out.samples) v = static_cast<double>(static_cast<float>(v));
  return out;
}

}  // namespace

audio::AudioClip render_record(const DatasetManifest& m, const SampleRecord& r,
                               SpeechSource& speech, const RenderContext& ctx) {
  const auto air = render_air(m, r.class_id, r.grid);
  return degrade_with_air(air, r, speech.get(r.speech_pool, r.speech_index), ctx);
}

std::optional<audio::AudioClip> load_noise(const GenerateConfig& config) {
  if (config.noise_wav.empty()) return std::nullopt;
  auto clip = audio::read_wav(config.noise_wav);
  if (clip.sample_rate != audio::kWorkingRate)
    clip = {audio::kWorkingRate, audio::resample(clip.samples, clip.sample_rate, audio::kWorkingRate)};
  return clip;
}

Dataset generate_dataset(const GenerateConfig& config, const std::filesystem::path& out_dir,
                         const RenderContext& ctx) {
#if defined(__GLIBC__)
  // Large transient buffers go to mmap at a fixed threshold.
  mallopt(M_MMAP_THRESHOLD, 256 * 1024);
#endif
  Dataset ds;
  ds.manifest = plan_dataset(config);
  auto& m = ds.manifest;
  const bool write = !out_dir.empty();
  std::optional<features::FeatureCache> cache;
  if (write) {
    std::filesystem::create_directories(out_dir);
    if (config.write_airs) std::filesystem::create_directories(out_dir / "airs");
    if (config.write_clips) std::filesystem::create_directories(out_dir / "clips");
    cache.emplace(out_dir / "features");
  }

  SpeechSource speech(config);
  for (const auto& r : m.records) (void)speech.get(r.speech_pool, r.speech_index);

  for (const auto& split : config.splits) {
    const auto ids = m.split_records(split.name);
    FeatureSet& fs = ds.features[split.name];
    fs.records = ids;
    fs.values.assign(ids.size() * fs.row_size(), 0.0f);
    // Records of one AIR are contiguous (room, position, speech order).
    std::vector<std::pair<std::size_t, std::size_t>> units;  // [begin, end) into ids
    for (std::size_t i = 0; i < ids.size();) {
      std::size_t j = i + 1;
      while (j < ids.size() && m.records[ids[j]].class_id == m.records[ids[i]].class_id &&
             m.records[ids[j]].grid == m.records[ids[i]].grid)
        ++j;
      units.emplace_back(i, j);
      i = j;
    }
    parallel_for(units.size(), [&](std::size_t u) {
      const auto [begin, end] = units[u];
      const auto& first = m.records[ids[begin]];
      const auto air = render_air(m, first.class_id, first.grid);
      const double rt60 = room::schroeder_rt60(air.samples, air.sample_rate);
      if (write && config.write_airs)
        audio::write_wav(out_dir / air_file(first), air.sample_rate, air.samples);
      for (std::size_t k = begin; k < end; ++k) {
        auto& r = m.records[ids[k]];
        r.labels.rt60 = rt60;
        if (write && config.write_airs) r.air_path = air_file(r);
        const auto clip = degrade_with_air(air, r, speech.get(r.speech_pool, r.speech_index), ctx);
        const auto map = features::featurize(clip);
        std::copy(map.values.begin(), map.values.end(), fs.values.begin() + static_cast<std::ptrdiff_t>(k * fs.row_size()));
        if (!write) continue;
        if (config.write_clips) {
          r.clip_path = "clips/" + std::to_string(r.index) + ".wav";
          audio::write_wav(out_dir / r.clip_path, clip.sample_rate, clip.samples);
        }
        const auto key = features::clip_hash(clip);
        cache->store(key, map.values);
        r.feature_key = to_hex(key);
      }
    });
  }
  if (write) write_manifest(out_dir / "manifest.json", m);
  return ds;
}

FeatureSet load_features(const DatasetManifest& m, const std::filesystem::path& dir,
                         const std::string& split, const RenderContext& ctx) {
  if (!m.has_split(split))
    throw Error(ErrorKind::kProtocolMismatch, "manifest has no '" + split + "' split");
  FeatureSet fs;
  fs.records = m.split_records(split);
  fs.values.assign(fs.records.size() * fs.row_size(), 0.0f);
  const features::FeatureCache cache(dir / "features");
  SpeechSource speech(m.config);
  bool need_speech = false;
  for (std::size_t id : fs.records) {
    const auto& r = m.records[id];
    if (r.feature_key.empty() && r.clip_path.empty()) need_speech = true;
  }
  if (need_speech)
    for (std::size_t id : fs.records) (void)speech.get(m.records[id].speech_pool, m.records[id].speech_index);
  parallel_for(fs.records.size(), [&](std::size_t i) {
    const auto& r = m.records[fs.records[i]];
    std::optional<std::vector<float>> values;
    if (!r.feature_key.empty()) values = cache.load(std::stoull(r.feature_key, nullptr, 16));
    if (!values) {
      audio::AudioClip clip;
      if (!r.clip_path.empty() && std::filesystem::exists(dir / r.clip_path))
        clip = audio::read_wav(dir / r.clip_path);
      else
        clip = render_record(m, r, speech, ctx);
      values = cache.get_or_compute(clip);
    }
    std::copy(values->begin(), values->end(), fs.values.begin() + static_cast<std::ptrdiff_t>(i * fs.row_size()));
  });
  return fs;
}

}  // namespace envid::pipeline
