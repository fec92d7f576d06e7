// Command-line front end: room simulation, dataset generation, corpus
// ingestion, training, evaluation and reporting.

#include <omp.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "envid/audio/wav.hpp"
#include "envid/codec_bridge.hpp"
#include "envid/error.hpp"
#include "envid/model/checkpoint.hpp"
#include "envid/parallel.hpp"
#include "envid/pipeline/config.hpp"
#include "envid/pipeline/dataset.hpp"
#include "envid/pipeline/evaluate.hpp"
#include "envid/pipeline/ingest.hpp"
#include "envid/pipeline/train.hpp"
#include "envid/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace envid;
using namespace envid::pipeline;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitMissingTool = 3;
constexpr int kExitData = 4;

struct Common {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string codec_bridge;
  std::string out = "out";
  int jobs = 0;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--seed", c.seed, "Global seed (overrides the config)");
  app->add_option("--config", c.config, "JSON config file");
  app->add_option("--codec-bridge", c.codec_bridge, "Codec command config (JSON)");
  app->add_option("--out", c.out, "Output directory");
  app->add_option("--jobs", c.jobs, "Worker threads (0 = OpenMP default)");
}

// A config file may hold one section per subcommand or just the section.
json config_section(const std::string& path, const std::string& key) {
  if (path.empty()) return json::object();
  auto j = read_json(path);
  if (j.is_object() && j.contains(key)) return j.at(key);
  return j;
}

json require_config(const std::string& path, const std::string& key) {
  if (path.empty()) throw Error(ErrorKind::kConfig, "--config is required");
  return config_section(path, key);
}

std::optional<degrade::CodecBridge> load_bridge(const std::string& path) {
  if (path.empty()) return std::nullopt;
  return degrade::CodecBridge::load(path);
}

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::kConfig:
    case ErrorKind::kInvalidArgument:
    case ErrorKind::kEmptyProfile:
      return kExitConfig;
    case ErrorKind::kCodecUnavailable:
      return kExitMissingTool;
    default:
      return kExitData;
  }
}

GenerateConfig load_generate(const Common& c) {
  auto cfg = generate_config_from_json(require_config(c.config, "generate"));
  if (c.seed) cfg.seed = *c.seed;
  validate(cfg);
  return cfg;
}

int cmd_simulate_rooms(const Common& c) {
  const auto cfg = load_generate(c);
  const auto m = plan_dataset(cfg);
  const fs::path out = c.out;
  fs::create_directories(out / "airs");
  const std::size_t cells = cfg.grid.rows * cfg.grid.cols;
  std::vector<json> rows(m.rooms.size() * cells);
  parallel_for(rows.size(), [&](std::size_t u) {
    const std::size_t cls = u / cells;
    const room::GridIndex g{(u % cells) / cfg.grid.cols, (u % cells) % cfg.grid.cols};
    const auto air = render_air(m, cls, g);
    char name[64];
    std::snprintf(name, sizeof name, "airs/%s_r%zu_c%zu.wav", m.rooms[cls].room.room_id.c_str(), g.row, g.col);
    audio::write_wav(out / name, air.sample_rate, air.samples);
    rows[u] = {{"room_id", m.rooms[cls].room.room_id},
               {"split", m.rooms[cls].split},
               {"grid", {g.row, g.col}},
               {"path", name},
               {"volume", air.labels.volume},
               {"rt60_sabine", air.labels.rt60_sabine},
               {"rt60_schroeder", air.labels.rt60_schroeder}};
  });
  json rooms = to_json(m).at("rooms");
  write_json(out / "rooms.json", {{"seed", cfg.seed}, {"rooms", rooms}, {"airs", rows}});
  std::cout << "simulated " << rows.size() << " AIRs in " << m.rooms.size() << " rooms -> " << out.string()
            << "\n";
  return 0;
}

int cmd_generate(const Common& c) {
  const auto cfg = load_generate(c);
  const auto bridge = load_bridge(c.codec_bridge);
  const auto noise = load_noise(cfg);
  RenderContext ctx{bridge ? &*bridge : nullptr, noise ? &*noise : nullptr};
  const auto ds = generate_dataset(cfg, c.out, ctx);
  std::cout << "generated " << ds.manifest.records.size() << " records in " << ds.manifest.rooms.size()
            << " rooms -> " << c.out << "\n";
  return 0;
}

int cmd_ingest(const Common& c, const std::string& input, const std::string& kind, const std::string& pool) {
  const auto index = ingest_corpus(input, parse_corpus_kind(kind), c.out, pool);
  std::cout << "ingested " << index.at("entries").size() << " " << kind << " entries -> " << c.out << "\n";
  return 0;
}

RenderContext data_context(const DatasetManifest& m, const Common& c,
                           std::optional<degrade::CodecBridge>& bridge, std::optional<audio::AudioClip>& noise) {
  bridge = load_bridge(c.codec_bridge);
  noise = load_noise(m.config);
  return {bridge ? &*bridge : nullptr, noise ? &*noise : nullptr};
}

int cmd_train(const Common& c, const std::string& data) {
  auto cfg = train_config_from_json(config_section(c.config, "train"));
  if (c.seed) cfg.seed = *c.seed;
  validate(cfg);
  const auto m = read_manifest(fs::path(data) / "manifest.json");
  std::optional<degrade::CodecBridge> bridge;
  std::optional<audio::AudioClip> noise;
  const auto ctx = data_context(m, c, bridge, noise);
  const auto train_set = load_features(m, data, "train", ctx);
  const auto val_set = load_features(m, data, "val", ctx);
  fs::create_directories(c.out);
  std::ofstream log(fs::path(c.out) / "train_log.jsonl");
  const auto result = train(m, train_set, val_set, cfg, &log);
  model::save_checkpoint(fs::path(c.out) / "model.ckpt", result.best);
  std::cout << "trained " << result.log.size() << " epochs, best epoch " << result.best_epoch
            << " val accuracy " << result.best.val_metric << "\n";
  return 0;
}

int cmd_evaluate(const Common& c, const std::string& data, const std::string& model_path,
                 const std::string& protocol) {
  auto cfg = eval_config_from_json(config_section(c.config, "eval"));
  if (c.seed) cfg.seed = *c.seed;
  const auto p = parse_protocol(protocol);
  const auto ckpt = model::load_checkpoint(model_path);
  auto net = load_network(ckpt);
  const auto tcfg = checkpoint_train_config(ckpt);
  const auto m = read_manifest(fs::path(data) / "manifest.json");
  if (!m.has_split(cfg.split)) throw Error(ErrorKind::kConfig, "dataset has no split '" + cfg.split + "'");
  std::optional<degrade::CodecBridge> bridge;
  std::optional<audio::AudioClip> noise;
  const auto ctx = data_context(m, c, bridge, noise);
  const auto set = embed(*net, load_features(m, data, cfg.split, ctx));
  const std::vector<std::string> targets = tcfg.regression ? tcfg.model.targets : std::vector<std::string>{};
  const auto summary = evaluate(m, set, p, cfg, targets, c.out);
  std::cout << summary.at("results").dump(2) << "\n";
  return 0;
}

int cmd_report(const Common& c, const std::string& in) {
  const std::string dir = in.empty() ? c.out : in;
  const auto text = render_report(dir);
  std::ofstream(fs::path(dir) / "report.txt") << text;
  std::cout << text;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"envid: few-shot acoustic environment identification"};
  app.require_subcommand(1);

  Common common;
  std::string input, kind = "speech", pool = "train", data = "out", model_path = "out/model.ckpt",
              protocol = "closed", report_in;

  auto* sim = app.add_subcommand("simulate-rooms", "Render the AIR grid of every planned room");
  add_common(sim, common);
  auto* gen = app.add_subcommand("generate", "Build a labeled, degraded dataset");
  add_common(gen, common);
  auto* ing = app.add_subcommand("ingest", "Import a directory of WAV files");
  add_common(ing, common);
  ing->add_option("--input", input, "Directory of WAV files")->required();
  ing->add_option("--kind", kind, "speech | air | noise")->check(CLI::IsMember({"speech", "air", "noise"}));
  ing->add_option("--pool", pool, "Pool name written to the index");
  auto* trn = app.add_subcommand("train", "Episodic training");
  add_common(trn, common);
  trn->add_option("--data", data, "Generated dataset directory");
  auto* ev = app.add_subcommand("evaluate", "Run one evaluation protocol");
  add_common(ev, common);
  ev->add_option("--data", data, "Generated dataset directory");
  ev->add_option("--model", model_path, "Checkpoint file");
  ev->add_option("--protocol", protocol, "closed | open | ksweep | positions | regress")
      ->check(CLI::IsMember({"closed", "open", "ksweep", "positions", "regress"}));
  auto* rep = app.add_subcommand("report", "Summarize evaluation outputs");
  add_common(rep, common);
  rep->add_option("--in", report_in, "Directory of evaluation summaries (default: --out)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  if (common.jobs > 0) omp_set_num_threads(common.jobs);
  try {
    if (*sim) return cmd_simulate_rooms(common);
    if (*gen) return cmd_generate(common);
    if (*ing) return cmd_ingest(common, input, kind, pool);
    if (*trn) return cmd_train(common, data);
    if (*ev) return cmd_evaluate(common, data, model_path, protocol);
    if (*rep) return cmd_report(common, report_in);
  } catch (const Error& e) {
    std::cerr << "envid: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "envid: " << e.what() << "\n";
    return kExitData;
  }
  return 0;
}
