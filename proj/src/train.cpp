#include "envid/pipeline/train.hpp"

#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "envid/error.hpp"
#include "envid/model/adam.hpp"

namespace envid::pipeline {
namespace {

std::string rng_state(const Rng& rng) {
  std::ostringstream s;
  s << rng;
  return s.str();
}

std::vector<float> gather(const FeatureSet& fs, std::span<const std::size_t> rows) {
  const std::size_t n = fs.row_size();
  std::vector<float> out(rows.size() * n);
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy_n(fs.row(rows[i]), n, out.begin() + static_cast<std::ptrdiff_t>(i * n));
  return out;
}

std::vector<double> targets_for(const DatasetManifest& m, const FeatureSet& fs,
                                std::span<const std::size_t> rows,
                                const std::vector<std::string>& names) {
  std::vector<double> t;
  t.reserve(rows.size() * names.size());
  for (std::size_t r : rows)
    for (const auto& name : names) t.push_back(encode_target(m.records[fs.records[r]], name));
  return t;
}

struct ValidationSet {
  std::vector<std::size_t> rows;  // into the validation FeatureSet
  std::vector<fewshot::Episode> episodes;  // sample ids index `rows`
};

ValidationSet build_validation(const DatasetManifest& m, const FeatureSet& val,
                               const TrainConfig& c) {
  const auto grouped = group_by_class(m, val);
  Rng rng(derive_seed(c.seed, 0, "val-subset"));
  ValidationSet vs;
  fewshot::ClassIndex local;
  for (auto rows : grouped.rows) {
    for (std::size_t i = 0; i < rows.size(); ++i) std::swap(rows[i], rows[i + uniform_index(rng, rows.size() - i)]);
    rows.resize(std::min(rows.size(), c.val_samples_per_class));
    std::vector<std::size_t> ids;
    for (std::size_t r : rows) {
      ids.push_back(vs.rows.size());
      vs.rows.push_back(r);
    }
    local.push_back(std::move(ids));
  }
  fewshot::EpisodeConfig ec{c.n_way, c.k_shot, c.query_cap, c.allow_fallback};
  Rng ep_rng(derive_seed(c.seed, 0, "val-episodes"));
  for (std::size_t e = 0; e < c.val_episodes; ++e) vs.episodes.push_back(fewshot::sample_episode(local, ec, ep_rng));
  return vs;
}

std::pair<double, double> validate_epoch(model::Network<float>& net, const ValidationSet& vs,
                                         const FeatureSet& val) {
  const auto input = gather(val, vs.rows);
  const auto out = net.infer(input, vs.rows.size());
  const std::size_t e = net.embed_dim();
  double acc = 0.0, loss = 0.0;
  for (const auto& ep : vs.episodes) {
    const auto order = ep.batch_order();
    std::vector<double> emb(order.size() * e);
    for (std::size_t i = 0; i < order.size(); ++i)
      std::copy_n(&out.embeddings[order[i] * e], e, &emb[i * e]);
    std::vector<std::size_t> labels;
    for (const auto& q : ep.queries) labels.push_back(q.label);
    const auto l = fewshot::episode_loss(emb, e, ep.n_way, ep.k_shot, labels);
    acc += l.accuracy;
    loss += l.classification;
  }
  const double n = static_cast<double>(vs.episodes.size());
  return {acc / n, loss / n};
}

model::Linear<float>& head_output(model::Network<float>& net, std::size_t h) {
  return dynamic_cast<model::Linear<float>&>(net.head(h).layer(2));
}

}  // namespace

double encode_target(const SampleRecord& r, const std::string& name) {
  if (name == "rt60") return r.labels.rt60;
  if (name == "rt60_sabine") return r.labels.rt60_sabine;
  if (name == "volume") return std::log10(r.labels.volume);
  throw Error(ErrorKind::kConfig, "unknown regression target '" + name + "'");
}

double decode_target(const std::string& name, double value) {
  return name == "volume" ? std::pow(10.0, value) : value;
}

ClassRows group_by_class(const DatasetManifest& m, const FeatureSet& fs) {
  std::map<std::size_t, std::vector<std::size_t>> by;
  for (std::size_t i = 0; i < fs.records.size(); ++i) by[m.records.at(fs.records[i]).class_id].push_back(i);
  ClassRows out;
  for (auto& [cls, rows] : by) {
    out.class_ids.push_back(cls);
    out.rows.push_back(std::move(rows));
  }
  return out;
}

nlohmann::json to_json(const EpochLog& e) {
  return {{"epoch", e.epoch},
          {"train_loss", e.train_loss},
          {"train_class_loss", e.train_class_loss},
          {"train_reg_loss", e.train_reg_loss},
          {"train_accuracy", e.train_accuracy},
          {"val_loss", e.val_loss},
          {"val_accuracy", e.val_accuracy},
          {"best_val_accuracy", e.best_val_accuracy},
          {"best_val_loss", e.best_val_loss},
          {"improved", e.improved}};
}

TrainResult train(const DatasetManifest& m, const FeatureSet& train_set, const FeatureSet& val_set,
                  const TrainConfig& c, std::ostream* log_out) {
  validate(c);
  if (train_set.records.empty() || val_set.records.empty())
    throw Error(ErrorKind::kProtocolMismatch, "training needs train and validation records");
  const auto grouped = group_by_class(m, train_set);
  const std::vector<std::string> targets = c.regression ? c.model.targets : std::vector<std::string>{};

  model::Network<float> net(c.model);
  net.initialize(derive_seed(c.seed, 0, "init"));
  // Start each head at the mean training target.
  for (std::size_t h = 0; h < net.num_targets(); ++h) {
    double mean = 0.0;
    for (std::size_t id : train_set.records) mean += encode_target(m.records[id], c.model.targets[h]);
    head_output(net, h).bias().value[0] = static_cast<float>(mean / static_cast<double>(train_set.records.size()));
  }
  model::Adam<float> adam({c.lr, 0.9, 0.999, 1e-8}, net.parameter_count());
  Rng rng(derive_seed(c.seed, 0, "episodes"));
  const auto vs = build_validation(m, val_set, c);
  const fewshot::EpisodeConfig ec{c.n_way, c.k_shot, c.query_cap, c.allow_fallback};

  nlohmann::json config_json = {{"model", model::to_json(c.model)}, {"train", to_json(c)}};
  TrainResult result;
  double best_acc = -1.0, best_loss = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  for (std::size_t epoch = 1; epoch <= c.max_epochs; ++epoch) {
    EpochLog log;
    log.epoch = epoch;
    for (std::size_t e = 0; e < c.episodes_per_epoch; ++e) {
      const auto ep = fewshot::sample_episode(grouped.rows, ec, rng);
      const auto rows = ep.batch_order();
      const auto input = gather(train_set, rows);
      const auto out = net.forward(input, rows.size(), {true, &rng});
      std::vector<std::size_t> labels;
      for (const auto& q : ep.queries) labels.push_back(q.label);
      const auto t = targets_for(m, train_set, rows, targets);
      std::vector<double> reg;
      if (!targets.empty()) reg = out.regression;
      const auto loss = fewshot::episode_loss(out.embeddings, net.embed_dim(), ep.n_way, ep.k_shot,
                                              labels, reg, t);
      net.zero_grad();
      net.backward(loss.grad_embeddings, loss.grad_regression);
      adam.step(net.parameters());
      log.train_loss += loss.total;
      log.train_class_loss += loss.classification;
      log.train_reg_loss += loss.regression;
      log.train_accuracy += loss.accuracy;
    }
    const double n = static_cast<double>(c.episodes_per_epoch);
    log.train_loss /= n;
    log.train_class_loss /= n;
    log.train_reg_loss /= n;
    log.train_accuracy /= n;
    std::tie(log.val_accuracy, log.val_loss) = validate_epoch(net, vs, val_set);
    best_loss = std::min(best_loss, log.val_loss);
    log.best_val_loss = best_loss;
    if (log.val_accuracy > best_acc) {
      best_acc = log.val_accuracy;
      since_best = 0;
      log.improved = true;
      result.best_epoch = epoch;
      auto& b = result.best;
      b.config_json = config_json.dump();
      b.epoch = epoch;
      b.val_metric = log.val_accuracy;
      b.rng_state = rng_state(rng);
      b.parameters = net.flat_parameters();
      b.adam_step = adam.steps();
      b.adam_m = adam.first_moment();
      b.adam_v = adam.second_moment();
    } else {
      ++since_best;
    }
    log.best_val_accuracy = best_acc;
    result.log.push_back(log);
    if (log_out) *log_out << to_json(log).dump() << std::endl;
    if (since_best >= c.patience) break;
  }
  return result;
}

TrainConfig checkpoint_train_config(const model::Checkpoint& ckpt) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(ckpt.config_json);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kCorruptFile, std::string("checkpoint config: ") + e.what());
  }
  auto c = train_config_from_json(j.at("train"));
  c.model = model::model_config_from_json(j.at("model"));
  return c;
}

std::unique_ptr<model::Network<float>> load_network(const model::Checkpoint& ckpt) {
  auto net = std::make_unique<model::Network<float>>(checkpoint_train_config(ckpt).model);
  net->set_flat_parameters(ckpt.parameters);
  return net;
}

}  // namespace envid::pipeline
