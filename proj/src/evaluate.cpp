#include "envid/pipeline/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <numeric>
#include <sstream>

#include "envid/error.hpp"
#include "envid/eval.hpp"
#include "envid/pipeline/train.hpp"

namespace envid::pipeline {
namespace {

using nlohmann::json;

struct ClosedResult {
  std::vector<double> top_n;  // n = 1, 2, 3
  double episode_std = 0.0;
  eval::ConfusionTally tally;
  std::size_t n_way = 0;
};

ClosedResult closed_set(const EmbeddedSet& set, const ClassRows& grouped, std::size_t n_way,
                        std::size_t k_shot, std::size_t query_cap, std::size_t episodes,
                        std::uint64_t seed) {
  Rng rng(seed);
  const fewshot::EpisodeConfig ec{n_way, k_shot, query_cap, true};
  ClosedResult res;
  res.tally = eval::ConfusionTally(grouped.class_ids.size());
  std::vector<std::vector<std::size_t>> rankings;
  std::vector<std::size_t> truths;
  std::vector<double> per_episode;
  for (std::size_t e = 0; e < episodes; ++e) {
    const auto ep = fewshot::sample_episode(grouped.rows, ec, rng);
    res.n_way = ep.n_way;
    std::vector<std::vector<fewshot::Vec>> support(ep.n_way);
    for (std::size_t w = 0; w < ep.n_way; ++w)
      for (std::size_t s : ep.support[w]) support[w].push_back(set.embeddings[s]);
    const auto protos = fewshot::prototypes(support);
    std::size_t hits = 0;
    for (const auto& q : ep.queries) {
      const auto d = fewshot::distances(set.embeddings[q.sample], protos);
      const auto rank = eval::ranking_from_distances(d);
      const std::size_t pred = fewshot::predict(fewshot::class_likelihood(d));
      if (pred == q.label) ++hits;
      // Dense class positions keep the tally independent of episode layout.
      res.tally.add(ep.classes[q.label], ep.classes[pred]);
      rankings.push_back(rank);
      truths.push_back(q.label);
    }
    per_episode.push_back(static_cast<double>(hits) / static_cast<double>(ep.queries.size()));
  }
  for (std::size_t n = 1; n <= 3; ++n) res.top_n.push_back(eval::top_n_accuracy(rankings, truths, n));
  const double mean = std::accumulate(per_episode.begin(), per_episode.end(), 0.0) /
                      static_cast<double>(per_episode.size());
  double var = 0.0;
  for (double a : per_episode) var += (a - mean) * (a - mean);
  res.episode_std = std::sqrt(var / static_cast<double>(per_episode.size()));
  return res;
}

std::vector<std::string> class_names(const DatasetManifest& m, const ClassRows& g) {
  std::vector<std::string> names;
  for (std::size_t c : g.class_ids) names.push_back(m.rooms[c].room.room_id);
  return names;
}

json closed_protocol(const DatasetManifest& m, const EmbeddedSet& set, const EvalConfig& c,
                     const std::filesystem::path& out) {
  const auto g = group_by_class(m, FeatureSet{set.records, {}});
  auto r = closed_set(set, g, c.n_way, c.k_shot, c.query_cap, c.episodes,
                      derive_seed(c.seed, 0, "closed"));
  const auto scores = eval::prf1(r.tally);
  json per_class = json::array();
  const auto names = class_names(m, g);
  for (std::size_t i = 0; i < scores.size(); ++i)
    per_class.push_back({{"class", names[i]},
                         {"precision", scores[i].precision},
                         {"recall", scores[i].recall},
                         {"f1", scores[i].f1}});
  if (!out.empty()) eval::write_class_csv(out / "closed_classes.csv", r.tally, names);
  return {{"n_way", r.n_way},
          {"k_shot", c.k_shot},
          {"episodes", c.episodes},
          {"top1", r.top_n[0]},
          {"top2", r.top_n[1]},
          {"top3", r.top_n[2]},
          {"episode_std", r.episode_std},
          {"micro_accuracy", r.tally.accuracy()},
          {"per_class", per_class}};
}

json open_protocol(const DatasetManifest& m, const EmbeddedSet& set, const EvalConfig& c,
                   const std::filesystem::path& out) {
  eval::EmbeddedPool pool;
  pool.embeddings = set.embeddings;
  for (std::size_t id : set.records) pool.classes.push_back(m.records[id].class_id);
  std::set<std::size_t> distinct(pool.classes.begin(), pool.classes.end());
  eval::OpenSetConfig oc;
  oc.n_way = std::min(c.n_way, distinct.size() - 1);
  oc.k_shot = c.k_shot;
  oc.trials = c.open_trials;
  oc.exclude_query = true;
  Rng rng(derive_seed(c.seed, 0, "open"));
  const auto scores = eval::open_set_trial(pool, pool, oc, rng);
  const auto roc = eval::roc_auc(scores);
  if (!out.empty()) eval::write_roc_csv(out / "open_roc.csv", roc);
  json curve = json::array();
  for (const auto& p : roc.points) curve.push_back({p.fpr, p.tpr});
  const auto known = std::count_if(scores.begin(), scores.end(), [](const auto& s) { return s.known; });
  return {{"n_way", oc.n_way},
          {"k_shot", oc.k_shot},
          {"trials", oc.trials},
          {"known_fraction", static_cast<double>(known) / static_cast<double>(scores.size())},
          {"auc", roc.auc},
          {"curve", curve}};
}

json ksweep_protocol(const DatasetManifest& m, const EmbeddedSet& set, const EvalConfig& c,
                     const std::filesystem::path& out) {
  const auto g = group_by_class(m, FeatureSet{set.records, {}});
  json rows = json::array();
  std::ofstream csv;
  if (!out.empty()) {
    std::filesystem::create_directories(out);
    csv.open(out / "ksweep.csv");
    csv << "k,top1,top2,top3,episode_std\n" << std::fixed << std::setprecision(6);
  }
  for (std::size_t k = 1; k <= c.k_max; ++k) {
    const auto r = closed_set(set, g, c.n_way, k, c.query_cap, c.episodes,
                              derive_seed(c.seed, k, "ksweep"));
    rows.push_back({{"k", k}, {"top1", r.top_n[0]}, {"top2", r.top_n[1]}, {"top3", r.top_n[2]},
                    {"episode_std", r.episode_std}});
    if (csv.is_open())
      csv << k << ',' << r.top_n[0] << ',' << r.top_n[1] << ',' << r.top_n[2] << ','
          << r.episode_std << '\n';
  }
  return {{"n_way", std::min(c.n_way, g.class_ids.size())}, {"rows", rows}};
}

json positions_protocol(const DatasetManifest& m, const EmbeddedSet& set, const EvalConfig& c,
                        const std::filesystem::path& out) {
  const auto g = group_by_class(m, FeatureSet{set.records, {}});
  const std::size_t n_classes = g.class_ids.size();
  const std::size_t n_way = std::min(c.n_way, n_classes);
  Rng rng(derive_seed(c.seed, 0, "positions"));
  std::vector<eval::PositionResult> results;
  auto draw = [&](std::vector<std::size_t> pool, std::size_t k) {
    k = std::min(k, pool.size());
    for (std::size_t i = 0; i < k; ++i) std::swap(pool[i], pool[i + uniform_index(rng, pool.size() - i)]);
    std::vector<fewshot::Vec> s;
    for (std::size_t i = 0; i < k; ++i) s.push_back(set.embeddings[pool[i]]);
    return s;
  };
  for (std::size_t cls = 0; cls < n_classes; ++cls) {
    std::map<std::pair<std::size_t, std::size_t>, std::vector<std::size_t>> by_pos;
    for (std::size_t row : g.rows[cls]) {
      const auto& r = m.records[set.records[row]];
      by_pos[{r.grid.row, r.grid.col}].push_back(row);
    }
    for (const auto& [pos, queries] : by_pos) {
      // Own-class references come only from the other positions.
      std::vector<std::size_t> own;
      for (const auto& [p2, rows] : by_pos)
        if (p2 != pos) own.insert(own.end(), rows.begin(), rows.end());
      for (std::size_t q : queries) {
        std::vector<std::size_t> others;
        for (std::size_t o = 0; o < n_classes; ++o)
          if (o != cls) others.push_back(o);
        for (std::size_t i = 0; i + 1 < n_way; ++i)
          std::swap(others[i], others[i + uniform_index(rng, others.size() - i)]);
        std::vector<std::vector<fewshot::Vec>> support{draw(own, c.k_shot)};
        for (std::size_t i = 0; i + 1 < n_way; ++i) support.push_back(draw(g.rows[others[i]], c.k_shot));
        const auto d = fewshot::distances(set.embeddings[q], fewshot::prototypes(support));
        const auto& r = m.records[set.records[q]];
        results.push_back({r.grid.row, r.grid.col,
                           fewshot::predict(fewshot::class_likelihood(d)) == 0, r.category});
      }
    }
  }
  const auto maps = eval::position_accuracy_maps(results, m.config.grid.rows, m.config.grid.cols);
  if (!out.empty()) eval::write_position_csv(out / "positions.csv", maps);
  json j = {{"n_way", n_way}, {"k_shot", c.k_shot}, {"queries", results.size()}};
  for (const auto& [cat, pm] : maps)
    j["categories"][cat] = {{"mean", pm.mean},       {"std", pm.std},
                            {"center", pm.center},   {"corners", pm.corners},
                            {"middle_row", pm.middle_row}, {"middle_col", pm.middle_col},
                            {"map", pm.accuracy}};
  return j;
}

double stddev(const std::vector<double>& v) {
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  return std::sqrt(var / static_cast<double>(v.size()));
}

json regress_protocol(const DatasetManifest& m, const EmbeddedSet& set,
                      const std::vector<std::string>& targets, const std::filesystem::path& out) {
  if (targets.empty() || set.regression.empty() || set.regression.front().size() != targets.size())
    throw Error(ErrorKind::kProtocolMismatch, "model has no regression heads");
  json j;
  std::ofstream csv;
  if (!out.empty()) {
    std::filesystem::create_directories(out);
    csv.open(out / "regression.csv");
    csv << "target,category,count,rmse,target_mean,target_std\n" << std::fixed << std::setprecision(6);
  }
  for (std::size_t t = 0; t < targets.size(); ++t) {
    const auto& name = targets[t];
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> groups;
    for (std::size_t i = 0; i < set.records.size(); ++i) {
      const auto& r = m.records[set.records[i]];
      const double pred = decode_target(name, set.regression[i][t]);
      const double truth = name == "volume" ? r.labels.volume : decode_target(name, encode_target(r, name));
      for (const std::string& key : {std::string("all"), r.category}) {
        groups[key].first.push_back(pred);
        groups[key].second.push_back(truth);
      }
    }
    json tj;
    for (const auto& [cat, pt] : groups) {
      const double e = eval::rmse(pt.first, pt.second);
      const double mean = std::accumulate(pt.second.begin(), pt.second.end(), 0.0) /
                          static_cast<double>(pt.second.size());
      const double sd = stddev(pt.second);
      tj[cat] = {{"rmse", e}, {"target_mean", mean}, {"target_std", sd}, {"count", pt.second.size()}};
      if (csv.is_open())
        csv << name << ',' << cat << ',' << pt.second.size() << ',' << e << ',' << mean << ',' << sd << '\n';
    }
    if (name == "volume") {
      const auto& all = groups.at("all");
      for (std::size_t bins : {2, 3, 5, 10})
        tj["bins"][std::to_string(bins)] = eval::volume_bin_classify(all.first, all.second, bins);
    }
    j[name] = tj;
  }
  return j;
}

}  // namespace

Protocol parse_protocol(const std::string& name) {
  if (name == "closed") return Protocol::kClosed;
  if (name == "open") return Protocol::kOpen;
  if (name == "ksweep") return Protocol::kKSweep;
  if (name == "positions") return Protocol::kPositions;
  if (name == "regress") return Protocol::kRegress;
  throw Error(ErrorKind::kConfig, "unknown protocol '" + name + "'");
}

std::string to_string(Protocol p) {
  switch (p) {
    case Protocol::kClosed: return "closed";
    case Protocol::kOpen: return "open";
    case Protocol::kKSweep: return "ksweep";
    case Protocol::kPositions: return "positions";
    case Protocol::kRegress: return "regress";
  }
  return "closed";
}

EmbeddedSet embed(model::Network<float>& net, const FeatureSet& fs) {
  EmbeddedSet out;
  out.records = fs.records;
  const auto res = net.infer(fs.values, fs.records.size());
  const std::size_t e = net.embed_dim(), t = net.num_targets();
  for (std::size_t i = 0; i < fs.records.size(); ++i) {
    out.embeddings.emplace_back(res.embeddings.begin() + static_cast<std::ptrdiff_t>(i * e),
                                res.embeddings.begin() + static_cast<std::ptrdiff_t>((i + 1) * e));
    out.regression.emplace_back(res.regression.begin() + static_cast<std::ptrdiff_t>(i * t),
                                res.regression.begin() + static_cast<std::ptrdiff_t>((i + 1) * t));
  }
  return out;
}

json evaluate(const DatasetManifest& m, const EmbeddedSet& set, Protocol protocol,
              const EvalConfig& config, const std::vector<std::string>& targets,
              const std::filesystem::path& out_dir) {
  if (set.records.empty()) throw Error(ErrorKind::kProtocolMismatch, "no records to evaluate");
  json body;
  switch (protocol) {
    case Protocol::kClosed: body = closed_protocol(m, set, config, out_dir); break;
    case Protocol::kOpen: body = open_protocol(m, set, config, out_dir); break;
    case Protocol::kKSweep: body = ksweep_protocol(m, set, config, out_dir); break;
    case Protocol::kPositions: body = positions_protocol(m, set, config, out_dir); break;
    case Protocol::kRegress: body = regress_protocol(m, set, targets, out_dir); break;
  }
  json summary = {{"protocol", to_string(protocol)},
                  {"split", config.split},
                  {"config_hash", to_hex(json_hash(to_json(config)))},
                  {"manifest_config_hash", to_hex(json_hash(to_json(m.config)))},
                  {"seeds", {{"eval", config.seed}, {"dataset", m.seed}}},
                  {"results", body}};
  if (!out_dir.empty()) write_json(out_dir / (to_string(protocol) + ".json"), summary);
  return summary;
}

std::string render_report(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir))
    throw Error(ErrorKind::kEmptyDirectory, dir.string() + " is not a directory");
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::ostringstream s;
  s << std::fixed << std::setprecision(4);
  std::size_t used = 0;
  for (const auto& f : files) {
    const auto j = read_json(f);
    if (!j.contains("protocol") || !j.contains("results")) continue;
    ++used;
    const auto& r = j.at("results");
    const std::string p = j.at("protocol");
    s << "[" << p << "] split=" << j.value("split", std::string("?")) << "\n";
    if (p == "closed") {
      s << "  " << r.at("n_way").get<std::size_t>() << "-way " << r.at("k_shot").get<std::size_t>()
        << "-shot  top1 " << r.at("top1").get<double>() << "  top2 " << r.at("top2").get<double>()
        << "  top3 " << r.at("top3").get<double>() << "\n";
    } else if (p == "open") {
      s << "  AUC " << r.at("auc").get<double>() << "  known fraction "
        << r.at("known_fraction").get<double>() << "\n";
    } else if (p == "ksweep") {
      for (const auto& row : r.at("rows"))
        s << "  K=" << row.at("k").get<std::size_t>() << "  top1 " << row.at("top1").get<double>() << "\n";
    } else if (p == "positions") {
      for (const auto& [cat, v] : r.at("categories").items())
        s << "  " << cat << "  mean " << v.at("mean").get<double>() << "  corners "
          << v.at("corners").get<double>() << "  center " << v.at("center").get<double>() << "\n";
    } else if (p == "regress") {
      for (const auto& [name, v] : r.items()) {
        s << "  " << name << "  RMSE " << v.at("all").at("rmse").get<double>() << "  target std "
          << v.at("all").at("target_std").get<double>() << "\n";
        if (v.contains("bins"))
          for (const auto& [b, acc] : v.at("bins").items())
            s << "    " << b << "-bin accuracy " << acc.get<double>() << "\n";
      }
    }
  }
  if (used == 0) throw Error(ErrorKind::kEmptyDirectory, "no evaluation summaries in " + dir.string());
  return s.str();
}

}  // namespace envid::pipeline
