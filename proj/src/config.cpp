#include "envid/pipeline/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "envid/error.hpp"

namespace envid::pipeline {
namespace {

double parse_number(const std::string& text, const std::string& spec) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  throw Error(ErrorKind::kConfig, "bad number in profile '" + spec + "'");
}

template <typename F>
auto guarded(const char* what, F&& f) {
  try {
    return f();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kConfig, std::string(what) + ": " + e.what());
  }
}

}  // namespace

degrade::DegradationProfile parse_profile(const std::string& spec, const std::string& noise_wav) {
  using degrade::DegradationProfile;
  const auto colon = spec.find(':');
  const std::string head = spec.substr(0, colon);
  const std::string arg = colon == std::string::npos ? "" : spec.substr(colon + 1);
  DegradationProfile p;
  if (head == "clean" && arg.empty()) {
    p = DegradationProfile::clean();
  } else if (head == "training" && arg.empty()) {
    p = DegradationProfile::training();
  } else if (head == "simulated") {
    const double kbps = arg.empty() ? 128.0 : parse_number(arg, spec);
    if (!(kbps > 0.0)) throw Error(ErrorKind::kConfig, "simulated bitrate must be positive");
    p = DegradationProfile::simulated(kbps);
  } else if (head == "compression") {
    const double steps = parse_number(arg, spec);
    if (steps < 1 || steps > 3 || steps != std::floor(steps))
      throw Error(ErrorKind::kConfig, "compression steps must be 1, 2 or 3");
    p = DegradationProfile::multi_compression(static_cast<std::size_t>(steps));
  } else if (head == "noise") {
    p.name = spec;
    p.snr.fixed = true;
    p.snr.fixed_db = parse_number(arg, spec);
  } else {
    throw Error(ErrorKind::kConfig, "unknown degradation profile '" + spec + "'");
  }
  if (!noise_wav.empty()) {
    p.noise_source = degrade::NoiseConfig::Source::kWavFile;
    p.noise_wav = noise_wav;
  }
  return p;
}

nlohmann::json to_json(const GenerateConfig& c) {
  nlohmann::json splits = nlohmann::json::array();
  for (const auto& s : c.splits) {
    nlohmann::json j = {{"name", s.name},
                        {"rooms", s.rooms},
                        {"sampling", s.sampling},
                        {"volume_lo", s.volume_lo},
                        {"volume_hi", s.volume_hi},
                        {"same_rooms_as", s.same_rooms_as},
                        {"profile", s.profile},
                        {"speech_pool", s.speech_pool},
                        {"speech_clips", s.speech_clips},
                        {"speech_pool_size", s.speech_pool_size}};
    j["absorption"] = s.absorption ? nlohmann::json(*s.absorption) : nlohmann::json(nullptr);
    splits.push_back(j);
  }
  return {{"seed", c.seed},
          {"splits", splits},
          {"categories", c.categories},
          {"grid",
           {{"rows", c.grid.rows},
            {"cols", c.grid.cols},
            {"edge_margin", c.grid.edge_margin},
            {"mic_height", c.grid.mic_height},
            {"source_mic_distance", c.grid.source_mic_distance}}},
          {"sample_rate", c.sample_rate},
          {"max_air_seconds", c.max_air_seconds},
          {"speech_source", c.speech_source},
          {"noise_wav", c.noise_wav},
          {"write_airs", c.write_airs},
          {"write_clips", c.write_clips}};
}

GenerateConfig generate_config_from_json(const nlohmann::json& j) {
  return guarded("generate config", [&] {
    GenerateConfig c;
    c.seed = j.value("seed", c.seed);
    if (j.contains("splits"))
      for (const auto& s : j.at("splits")) {
        SplitConfig sc;
        sc.name = s.value("name", sc.name);
        sc.rooms = s.value("rooms", sc.rooms);
        sc.sampling = s.value("sampling", sc.sampling);
        sc.volume_lo = s.value("volume_lo", sc.volume_lo);
        sc.volume_hi = s.value("volume_hi", sc.volume_hi);
        if (s.contains("absorption") && !s.at("absorption").is_null())
          sc.absorption = s.at("absorption").get<double>();
        sc.same_rooms_as = s.value("same_rooms_as", sc.same_rooms_as);
        sc.profile = s.value("profile", sc.profile);
        sc.speech_pool = s.value("speech_pool", sc.speech_pool);
        sc.speech_clips = s.value("speech_clips", sc.speech_clips);
        sc.speech_pool_size = s.value("speech_pool_size", sc.speech_pool_size);
        c.splits.push_back(sc);
      }
    if (j.contains("categories")) c.categories = j.at("categories").get<std::vector<std::string>>();
    if (j.contains("grid")) {
      const auto& g = j.at("grid");
      c.grid.rows = g.value("rows", c.grid.rows);
      c.grid.cols = g.value("cols", c.grid.cols);
      c.grid.edge_margin = g.value("edge_margin", c.grid.edge_margin);
      c.grid.mic_height = g.value("mic_height", c.grid.mic_height);
      c.grid.source_mic_distance = g.value("source_mic_distance", c.grid.source_mic_distance);
    }
    c.sample_rate = j.value("sample_rate", c.sample_rate);
    c.max_air_seconds = j.value("max_air_seconds", c.max_air_seconds);
    c.speech_source = j.value("speech_source", c.speech_source);
    c.noise_wav = j.value("noise_wav", c.noise_wav);
    c.write_airs = j.value("write_airs", c.write_airs);
    c.write_clips = j.value("write_clips", c.write_clips);
    validate(c);
    return c;
  });
}

void validate(const GenerateConfig& c) {
  if (c.splits.empty()) throw Error(ErrorKind::kConfig, "generate config lists no splits");
  if (c.sample_rate != audio::kWorkingRate)
    throw Error(ErrorKind::kConfig, "working sample rate is fixed at 16000 Hz");
  if (c.categories.empty()) throw Error(ErrorKind::kConfig, "no room categories");
  for (const auto& cat : c.categories) {
    try {
      (void)room::parse_category(cat);
    } catch (const Error& e) {
      throw Error(ErrorKind::kConfig, e.what());
    }
  }
  std::vector<std::string> seen;
  for (const auto& s : c.splits) {
    if (std::find(seen.begin(), seen.end(), s.name) != seen.end())
      throw Error(ErrorKind::kConfig, "duplicate split '" + s.name + "'");
    if (!s.same_rooms_as.empty() &&
        std::find(seen.begin(), seen.end(), s.same_rooms_as) == seen.end())
      throw Error(ErrorKind::kConfig, "split '" + s.name + "' reuses unknown split '" +
                                          s.same_rooms_as + "'");
    if (s.same_rooms_as.empty() && s.rooms == 0)
      throw Error(ErrorKind::kConfig, "split '" + s.name + "' has no rooms");
    if (s.sampling != "volume" && s.sampling != "uniform")
      throw Error(ErrorKind::kConfig, "unknown room sampling '" + s.sampling + "'");
    if (!(s.volume_hi > s.volume_lo) || s.volume_lo <= 0.0)
      throw Error(ErrorKind::kConfig, "bad volume range in split '" + s.name + "'");
    if (s.absorption && (*s.absorption < 0.1 || *s.absorption > 0.8))
      throw Error(ErrorKind::kConfig, "absorption must be in [0.1, 0.8]");
    if (s.speech_clips == 0) throw Error(ErrorKind::kConfig, "split needs speech clips");
    if (s.speech_pool_size != 0 && s.speech_pool_size < s.speech_clips)
      throw Error(ErrorKind::kConfig, "speech_pool_size smaller than speech_clips in split '" + s.name + "'");
    (void)parse_profile(s.profile, c.noise_wav);
    seen.push_back(s.name);
  }
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"n_way", c.n_way},
          {"k_shot", c.k_shot},
          {"query_cap", c.query_cap},
          {"episodes_per_epoch", c.episodes_per_epoch},
          {"max_epochs", c.max_epochs},
          {"patience", c.patience},
          {"lr", c.lr},
          {"regression", c.regression},
          {"seed", c.seed},
          {"val_episodes", c.val_episodes},
          {"val_samples_per_class", c.val_samples_per_class},
          {"allow_fallback", c.allow_fallback},
          {"model", model::to_json(c.model)}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  return guarded("train config", [&] {
    TrainConfig c;
    c.n_way = j.value("n_way", c.n_way);
    c.k_shot = j.value("k_shot", c.k_shot);
    c.query_cap = j.value("query_cap", c.query_cap);
    c.episodes_per_epoch = j.value("episodes_per_epoch", c.episodes_per_epoch);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.patience = j.value("patience", c.patience);
    c.lr = j.value("lr", c.lr);
    c.regression = j.value("regression", c.regression);
    c.seed = j.value("seed", c.seed);
    c.val_episodes = j.value("val_episodes", c.val_episodes);
    c.val_samples_per_class = j.value("val_samples_per_class", c.val_samples_per_class);
    c.allow_fallback = j.value("allow_fallback", c.allow_fallback);
    if (j.contains("model")) c.model = model::model_config_from_json(j.at("model"));
    validate(c);
    return c;
  });
}

void validate(const TrainConfig& c) {
  if (c.n_way < 2 || c.k_shot == 0 || c.query_cap == 0)
    throw Error(ErrorKind::kConfig, "episodes need n_way >= 2, k_shot >= 1 and queries");
  if (c.episodes_per_epoch == 0 || c.max_epochs == 0 || c.val_episodes == 0)
    throw Error(ErrorKind::kConfig, "epoch and episode counts must be positive");
  if (c.patience > c.max_epochs) throw Error(ErrorKind::kConfig, "patience exceeds max epochs");
  if (!(c.lr > 0.0)) throw Error(ErrorKind::kConfig, "learning rate must be positive");
  if (c.val_samples_per_class <= c.k_shot)
    throw Error(ErrorKind::kConfig, "validation subset must exceed k_shot per class");
  model::validate(c.model);
}

nlohmann::json to_json(const EvalConfig& c) {
  return {{"n_way", c.n_way},           {"k_shot", c.k_shot},
          {"query_cap", c.query_cap},   {"episodes", c.episodes},
          {"open_trials", c.open_trials}, {"k_max", c.k_max},
          {"seed", c.seed},             {"split", c.split}};
}

EvalConfig eval_config_from_json(const nlohmann::json& j) {
  return guarded("eval config", [&] {
    EvalConfig c;
    c.n_way = j.value("n_way", c.n_way);
    c.k_shot = j.value("k_shot", c.k_shot);
    c.query_cap = j.value("query_cap", c.query_cap);
    c.episodes = j.value("episodes", c.episodes);
    c.open_trials = j.value("open_trials", c.open_trials);
    c.k_max = j.value("k_max", c.k_max);
    c.seed = j.value("seed", c.seed);
    c.split = j.value("split", c.split);
    if (c.n_way < 2 || c.k_shot == 0 || c.episodes == 0 || c.k_max == 0)
      throw Error(ErrorKind::kConfig, "eval needs n_way >= 2 and positive counts");
    return c;
  });
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kConfig, "cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kConfig, path.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::kUnreadableFile, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::uint64_t json_hash(const nlohmann::json& j) { return fnv1a(j.dump()); }

}  // namespace envid::pipeline
