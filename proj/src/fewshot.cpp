#include "envid/fewshot.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "envid/error.hpp"

namespace envid::fewshot {

std::vector<std::size_t> Episode::batch_order() const {
  std::vector<std::size_t> order;
  for (const auto& s : support) order.insert(order.end(), s.begin(), s.end());
  for (const auto& q : queries) order.push_back(q.sample);
  return order;
}

Episode sample_episode(const ClassIndex& data, const EpisodeConfig& config, Rng& rng) {
  if (config.n_way == 0 || config.k_shot == 0)
    throw Error(ErrorKind::kInvalidArgument, "n_way and k_shot must be positive");
  std::size_t n_way = config.n_way;
  if (data.size() < n_way) {
    if (!config.allow_fallback || data.size() < 2)
      throw Error(ErrorKind::kInsufficientClasses,
                  "need " + std::to_string(n_way) + " classes, have " + std::to_string(data.size()));
    n_way = data.size();
  }
  for (std::size_t c = 0; c < data.size(); ++c)
    if (data[c].size() <= config.k_shot)
      throw Error(ErrorKind::kInsufficientSamples,
                  "class " + std::to_string(c) + " has " + std::to_string(data[c].size()) +
                      " samples, need more than " + std::to_string(config.k_shot));

  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), 0);
  // Partial Fisher-Yates: the first n_way entries are a uniform draw.
  for (std::size_t i = 0; i < n_way; ++i) std::swap(all[i], all[i + uniform_index(rng, all.size() - i)]);

  Episode ep;
  ep.n_way = n_way;
  ep.k_shot = config.k_shot;
  ep.classes.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_way));
  ep.support.resize(n_way);
  for (std::size_t w = 0; w < n_way; ++w) {
    std::vector<std::size_t> pool = data[ep.classes[w]];
    const std::size_t take = std::min(pool.size(), config.k_shot + config.query_cap);
    for (std::size_t i = 0; i < take; ++i) std::swap(pool[i], pool[i + uniform_index(rng, pool.size() - i)]);
    ep.support[w].assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(config.k_shot));
    for (std::size_t i = config.k_shot; i < take; ++i) ep.queries.push_back({pool[i], w});
  }
  return ep;
}

std::vector<Vec> prototypes(const std::vector<std::vector<Vec>>& support) {
  std::vector<Vec> out;
  out.reserve(support.size());
  std::size_t dim = 0;
  for (const auto& cls : support) {
    if (cls.empty()) throw Error(ErrorKind::kEmptySupport, "class without support samples");
    if (dim == 0) dim = cls.front().size();
    Vec mean(dim, 0.0);
    for (const auto& e : cls) {
      if (e.size() != dim) throw Error(ErrorKind::kDimensionMismatch, "support dimensions differ");
      for (std::size_t i = 0; i < dim; ++i) mean[i] += e[i];
    }
    for (double& m : mean) m /= static_cast<double>(cls.size());
    out.push_back(std::move(mean));
  }
  return out;
}

Vec distances(std::span<const double> query, const std::vector<Vec>& protos) {
  Vec d(protos.size());
  for (std::size_t c = 0; c < protos.size(); ++c) {
    if (protos[c].size() != query.size())
      throw Error(ErrorKind::kDimensionMismatch, "query and prototype dimensions differ");
    double acc = 0.0;
    for (std::size_t i = 0; i < query.size(); ++i) {
      const double diff = protos[c][i] - query[i];
      acc += diff * diff;
    }
    d[c] = std::sqrt(acc);
  }
  return d;
}

Vec class_likelihood(std::span<const double> d) {
  if (d.empty()) return {};
  const double lo = *std::min_element(d.begin(), d.end());
  Vec p(d.size());
  double z = 0.0;
  for (std::size_t c = 0; c < d.size(); ++c) z += p[c] = std::exp(-(d[c] - lo));
  for (double& v : p) v /= z;
  return p;
}

double class_loss(std::span<const double> likelihoods, std::size_t true_class) {
  if (true_class >= likelihoods.size())
    throw Error(ErrorKind::kInvalidArgument, "true class out of range");
  return -std::log(std::max(likelihoods[true_class], kProbabilityFloor));
}

double reg_loss(double target, double estimate) { return std::abs(target - estimate); }

double total_loss(double class_term, double reg_term, bool regression_enabled) {
  return regression_enabled ? class_term + reg_term : class_term;
}

std::size_t predict(std::span<const double> likelihoods) {
  if (likelihoods.empty()) throw Error(ErrorKind::kInvalidArgument, "no classes to predict");
  std::size_t best = 0;
  for (std::size_t c = 1; c < likelihoods.size(); ++c)
    if (likelihoods[c] > likelihoods[best]) best = c;
  return best;
}

Decision reject_unknown(std::span<const double> d, const RejectionRule& rule) {
  if (rule.threshold < 0.0) throw Error(ErrorKind::kInvalidArgument, "negative threshold");
  if (d.empty()) return {true, 0};
  std::size_t best = 0;
  for (std::size_t c = 1; c < d.size(); ++c)
    if (d[c] < d[best]) best = c;
  return {d[best] > rule.threshold, best};
}

EpisodeLoss episode_loss(std::span<const double> embeddings, std::size_t dim, std::size_t n_way,
                         std::size_t k_shot, std::span<const std::size_t> query_labels,
                         std::span<const double> regression, std::span<const double> targets) {
  const std::size_t n_support = n_way * k_shot;
  const std::size_t n_query = query_labels.size();
  const std::size_t rows = n_support + n_query;
  if (dim == 0 || embeddings.size() != rows * dim)
    throw Error(ErrorKind::kDimensionMismatch, "embedding block does not match the episode");
  if (n_way == 0 || k_shot == 0) throw Error(ErrorKind::kEmptySupport, "empty episode support");
  if (n_query == 0) throw Error(ErrorKind::kInsufficientSamples, "episode has no queries");

  EpisodeLoss out;
  out.grad_embeddings.assign(rows * dim, 0.0);

  std::vector<Vec> protos(n_way, Vec(dim, 0.0));
  for (std::size_t w = 0; w < n_way; ++w) {
    for (std::size_t s = 0; s < k_shot; ++s) {
      const double* e = &embeddings[(w * k_shot + s) * dim];
      for (std::size_t i = 0; i < dim; ++i) protos[w][i] += e[i];
    }
    for (double& v : protos[w]) v /= static_cast<double>(k_shot);
  }

  std::vector<Vec> grad_protos(n_way, Vec(dim, 0.0));
  std::size_t correct = 0;
  const double inv_q = 1.0 / static_cast<double>(n_query);
  for (std::size_t q = 0; q < n_query; ++q) {
    const std::size_t y = query_labels[q];
    if (y >= n_way) throw Error(ErrorKind::kInvalidArgument, "query label out of range");
    const auto row = embeddings.subspan((n_support + q) * dim, dim);
    const Vec d = distances(row, protos);
    const Vec p = class_likelihood(d);
    out.classification += class_loss(p, y) * inv_q;
    if (predict(p) == y) ++correct;
    double* gq = &out.grad_embeddings[(n_support + q) * dim];
    for (std::size_t c = 0; c < n_way; ++c) {
      // d/dd_c of -log softmax(-d)_y.
      const double g = ((c == y ? 1.0 : 0.0) - p[c]) * inv_q;
      if (d[c] < 1e-12 || g == 0.0) continue;
      for (std::size_t i = 0; i < dim; ++i) {
        const double unit = (row[i] - protos[c][i]) / d[c];
        gq[i] += g * unit;
        grad_protos[c][i] -= g * unit;
      }
    }
  }
  for (std::size_t w = 0; w < n_way; ++w)
    for (std::size_t s = 0; s < k_shot; ++s) {
      double* g = &out.grad_embeddings[(w * k_shot + s) * dim];
      for (std::size_t i = 0; i < dim; ++i) g[i] += grad_protos[w][i] / static_cast<double>(k_shot);
    }
  out.accuracy = static_cast<double>(correct) * inv_q;

  const bool with_reg = !targets.empty();
  if (with_reg) {
    if (regression.size() != targets.size() || targets.size() % rows != 0)
      throw Error(ErrorKind::kDimensionMismatch, "regression block does not match the episode");
    const double inv_rows = 1.0 / static_cast<double>(rows);
    out.grad_regression.assign(regression.size(), 0.0);
    for (std::size_t i = 0; i < regression.size(); ++i) {
      out.regression += reg_loss(targets[i], regression[i]) * inv_rows;
      const double diff = regression[i] - targets[i];
      out.grad_regression[i] = diff > 0.0 ? inv_rows : diff < 0.0 ? -inv_rows : 0.0;
    }
  }
  out.total = total_loss(out.classification, out.regression, with_reg);
  return out;
}

}  // namespace envid::fewshot
