#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "envid/error.hpp"
#include "envid/eval.hpp"
#include "envid/fewshot.hpp"
#include "envid/model/adam.hpp"
#include "envid/model/layers.hpp"

using namespace envid;
using namespace envid::fewshot;

namespace {

ClassIndex make_index(std::size_t classes, std::size_t per_class) {
  ClassIndex idx(classes);
  std::size_t next = 0;
  for (auto& c : idx)
    for (std::size_t i = 0; i < per_class; ++i) c.push_back(next++);
  return idx;
}

ErrorKind kind_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::kInvalidArgument;
}

std::vector<double> random_vec(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d;
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

}  // namespace

TEST(Episode, OneQueryPerClassWhenSizesAreKPlusOne) {
  Rng rng(1);
  const auto ep = sample_episode(make_index(10, 16), {10, 15, 8, false}, rng);
  EXPECT_EQ(ep.classes.size(), 10u);
  EXPECT_EQ(ep.queries.size(), 10u);
  for (const auto& s : ep.support) EXPECT_EQ(s.size(), 15u);
}

TEST(Episode, FallbackToAvailableClasses) {
  Rng rng(2);
  EXPECT_EQ(kind_of([&] { sample_episode(make_index(7, 20), {10, 5, 8, false}, rng); }),
            ErrorKind::kInsufficientClasses);
  const auto ep = sample_episode(make_index(7, 20), {10, 5, 8, true}, rng);
  EXPECT_EQ(ep.n_way, 7u);
  EXPECT_EQ(kind_of([&] { sample_episode(make_index(5, 5), {3, 5, 8, false}, rng); }),
            ErrorKind::kInsufficientSamples);
}

TEST(Episode, NoOverlapAndDistinctClasses) {
  Rng rng(3);
  const auto idx = make_index(12, 20);
  for (int t = 0; t < 1000; ++t) {
    const auto ep = sample_episode(idx, {5, 4, 3, false}, rng);
    std::set<std::size_t> classes(ep.classes.begin(), ep.classes.end());
    ASSERT_EQ(classes.size(), 5u);
    std::set<std::size_t> support;
    for (std::size_t w = 0; w < ep.n_way; ++w)
      for (std::size_t s : ep.support[w]) {
        ASSERT_TRUE(support.insert(s).second);
        ASSERT_EQ(s / 20, ep.classes[w]);
      }
    EXPECT_EQ(ep.queries.size(), 15u);
    for (const auto& q : ep.queries) {
      ASSERT_FALSE(support.count(q.sample));
      ASSERT_EQ(q.sample / 20, ep.classes[q.label]);
    }
    EXPECT_EQ(ep.batch_order().size(), 5u * 4u + 15u);
  }
}

TEST(Prototypes, MeanAndPermutation) {
  const auto p = prototypes({{{0, 0}, {2, 0}}, {{5, 5}}});
  EXPECT_EQ(p[0], (Vec{1, 0}));
  EXPECT_EQ(p[1], (Vec{5, 5}));
  const auto a = prototypes({{{1, 2}, {3, 4}, {5, 7}}});
  const auto b = prototypes({{{5, 7}, {1, 2}, {3, 4}}});
  for (int i = 0; i < 2; ++i) EXPECT_NEAR(a[0][i], b[0][i], 1e-12);
  EXPECT_EQ(kind_of([] { prototypes({{}}); }), ErrorKind::kEmptySupport);
  EXPECT_EQ(kind_of([] { prototypes({{{1, 2}, {1}}}); }), ErrorKind::kDimensionMismatch);
}

TEST(Distances, Basics) {
  const std::vector<Vec> protos{{0, 0}, {3, 4}};
  EXPECT_EQ(distances(Vec{0, 0}, protos), (Vec{0, 5}));
  EXPECT_EQ(kind_of([&] { distances(Vec{0, 0, 0}, protos); }), ErrorKind::kDimensionMismatch);
}

TEST(Likelihood, ClosedForm) {
  const auto p = class_likelihood(Vec{0, 2});
  EXPECT_NEAR(p[0], 0.8808, 1e-4);
  EXPECT_NEAR(p[1], 0.1192, 1e-4);
  EXPECT_NEAR(p[0], 1.0 / (1.0 + std::exp(-2.0)), 1e-12);
  const auto u = class_likelihood(Vec(4, 3.3));
  for (double v : u) EXPECT_NEAR(v, 0.25, 1e-12);
}

TEST(Likelihood, NormalizedForRandomDistances) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 800.0);
  for (int t = 0; t < 500; ++t) {
    Vec d(1 + t % 12);
    for (auto& v : d) v = u(rng);
    const auto p = class_likelihood(d);
    EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-9);
    for (double v : p) EXPECT_GE(v, 0.0);
  }
}

TEST(Losses, ClassLoss) {
  EXPECT_EQ(class_loss(Vec{1.0, 0.0}, 0), 0.0);
  EXPECT_NEAR(class_loss(Vec(10, 0.1), 3), std::log(10.0), 1e-9);
  EXPECT_NEAR(class_loss(Vec{1.0, 0.0}, 1), -std::log(kProbabilityFloor), 1e-9);
  double prev = std::numeric_limits<double>::infinity();
  for (double d0 : {5.0, 3.0, 1.0, 0.0}) {
    const double l = class_loss(class_likelihood(Vec{d0, 2.0, 4.0}), 0);
    EXPECT_LT(l, prev);
    prev = l;
  }
}

TEST(Losses, RegAndTotal) {
  EXPECT_EQ(reg_loss(2.0, 2.0), 0.0);
  EXPECT_EQ(reg_loss(1.0, 0.25), 0.75);
  EXPECT_EQ(reg_loss(0.25, 1.0), reg_loss(1.0, 0.25));
  EXPECT_EQ(total_loss(2.0, 0.5, true), 2.5);
  EXPECT_EQ(total_loss(2.0, 0.5, false), 2.0);
}

TEST(Predict, ArgmaxAndTies) {
  EXPECT_EQ(predict(Vec{0.7, 0.3}), 0u);
  EXPECT_EQ(predict(Vec{0.5, 0.5}), 0u);
  EXPECT_EQ(predict(Vec{0.1, 0.6, 0.3}), 1u);
  const Vec p{0.2, 0.5, 0.3};
  Vec lp(p.size());
  std::transform(p.begin(), p.end(), lp.begin(), [](double v) { return std::log(v) * 3.0 + 1.0; });
  EXPECT_EQ(predict(lp), predict(p));
}

TEST(Reject, ThresholdRule) {
  const Vec d{2.0, 1.5, 3.0};
  EXPECT_FALSE(reject_unknown(d, {std::numeric_limits<double>::infinity()}).rejected);
  EXPECT_EQ(reject_unknown(d, {1.5}).cls, 1u);
  EXPECT_FALSE(reject_unknown(d, {1.5}).rejected);
  EXPECT_TRUE(reject_unknown(d, {0.0}).rejected);
}

TEST(Reject, SweepTracesRoc) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 4.0);
  std::vector<eval::OpenSetScore> scores;
  for (int i = 0; i < 60; ++i) scores.push_back({u(rng) + (i % 2 ? 1.0 : 0.0), i % 2 == 0});
  const auto roc = eval::roc_auc(scores);
  for (const auto& pt : roc.points) {
    if (!std::isfinite(pt.threshold) || pt.threshold < 0.0) continue;
    double rej_known = 0, rej_unknown = 0, known = 0, unknown = 0;
    for (const auto& s : scores) {
      const bool rej = reject_unknown(Vec{s.distance}, {pt.threshold}).rejected;
      (s.known ? known : unknown) += 1;
      (s.known ? rej_known : rej_unknown) += rej ? 1 : 0;
    }
    EXPECT_NEAR(pt.fpr, rej_known / known, 1e-12);
    EXPECT_NEAR(pt.tpr, rej_unknown / unknown, 1e-12);
  }
}

TEST(Invariance, TranslationAndScale) {
  const std::size_t dim = 6;
  std::vector<std::vector<Vec>> support(3);
  for (std::size_t c = 0; c < 3; ++c)
    for (int k = 0; k < 4; ++k) support[c].push_back(random_vec(dim, 10 + 7 * c + k));
  const auto q = random_vec(dim, 99);
  const auto d = distances(q, prototypes(support));
  const auto shift = random_vec(dim, 123);
  auto moved = support;
  for (auto& c : moved)
    for (auto& v : c)
      for (std::size_t i = 0; i < dim; ++i) v[i] += shift[i];
  Vec q2 = q;
  for (std::size_t i = 0; i < dim; ++i) q2[i] += shift[i];
  const auto d2 = distances(q2, prototypes(moved));
  for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(d2[c], d[c], 1e-6);
  EXPECT_EQ(predict(class_likelihood(d2)), predict(class_likelihood(d)));

  auto scaled = support;
  for (auto& c : scaled)
    for (auto& v : c)
      for (auto& x : v) x *= 2.5;
  Vec q3 = q;
  for (auto& x : q3) x *= 2.5;
  const auto d3 = distances(q3, prototypes(scaled));
  for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(d3[c], 2.5 * d[c], 1e-9);
  EXPECT_EQ(predict(class_likelihood(d3)), predict(class_likelihood(d)));
}

// Independent oracle: the loss rebuilt from the public pieces, differentiated
// numerically.
TEST(EpisodeLoss, MatchesPiecesAndFiniteDifferences) {
  const std::size_t dim = 4, n_way = 3, k = 2, nq = 4;
  const std::vector<std::size_t> labels{0, 2, 1, 2};
  auto emb = random_vec((n_way * k + nq) * dim, 21);
  const auto reg = random_vec((n_way * k + nq) * 2, 22);
  const auto tgt = random_vec((n_way * k + nq) * 2, 23);
  auto oracle = [&](const std::vector<double>& e) {
    std::vector<std::vector<Vec>> sup(n_way);
    for (std::size_t c = 0; c < n_way; ++c)
      for (std::size_t s = 0; s < k; ++s) sup[c].emplace_back(e.begin() + (c * k + s) * dim, e.begin() + (c * k + s + 1) * dim);
    const auto protos = prototypes(sup);
    double lc = 0.0;
    for (std::size_t q = 0; q < nq; ++q) {
      const Vec qv(e.begin() + (n_way * k + q) * dim, e.begin() + (n_way * k + q + 1) * dim);
      lc += class_loss(class_likelihood(distances(qv, protos)), labels[q]);
    }
    return lc / nq;
  };
  const auto l = episode_loss(emb, dim, n_way, k, labels, reg, tgt);
  EXPECT_NEAR(l.classification, oracle(emb), 1e-12);
  double lr = 0.0;
  for (std::size_t r = 0; r < n_way * k + nq; ++r)
    for (std::size_t t = 0; t < 2; ++t) lr += reg_loss(tgt[r * 2 + t], reg[r * 2 + t]);
  lr /= static_cast<double>(n_way * k + nq);
  EXPECT_NEAR(l.regression, lr, 1e-12);
  EXPECT_NEAR(l.total, total_loss(l.classification, lr, true), 1e-12);
  for (std::size_t i = 0; i < reg.size(); ++i)
    EXPECT_NEAR(l.grad_regression[i], (reg[i] > tgt[i] ? 1.0 : -1.0) / (n_way * k + nq), 1e-12);

  const double h = 1e-6;
  for (std::size_t i = 0; i < emb.size(); ++i) {
    const double keep = emb[i];
    emb[i] = keep + h;
    const double up = oracle(emb);
    emb[i] = keep - h;
    const double down = oracle(emb);
    emb[i] = keep;
    EXPECT_NEAR(l.grad_embeddings[i], (up - down) / (2 * h), 1e-6);
  }
  const auto no_reg = episode_loss(emb, dim, n_way, k, labels);
  EXPECT_EQ(no_reg.total, no_reg.classification);
  EXPECT_TRUE(no_reg.grad_regression.empty() ||
              std::all_of(no_reg.grad_regression.begin(), no_reg.grad_regression.end(), [](double g) { return g == 0.0; }));
}

TEST(EpisodeLoss, GradientReachesBothHeads) {
  const auto emb = random_vec(10 * 3, 31);
  const auto reg = random_vec(10, 32), tgt = random_vec(10, 33);
  const std::vector<std::size_t> labels{0, 1, 1, 0};
  const auto l = episode_loss(emb, 3, 2, 3, labels, reg, tgt);
  auto norm = [](const std::vector<double>& v) { return std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0)); };
  EXPECT_GT(norm(l.grad_embeddings), 0.0);
  EXPECT_GT(norm(l.grad_regression), 0.0);
}

// A linear embedding trained on three Gaussian blobs for one epoch of
// 3-way 5-shot episodes lowers the loss on a fixed set of episodes.
TEST(Training, OneEpochReducesBlobLoss) {
  const std::size_t in = 8, dim = 4, per_class = 20;
  std::vector<double> data;
  std::mt19937_64 gen(41);
  std::normal_distribution<double> n;
  for (std::size_t c = 0; c < 3; ++c) {
    const auto centre = random_vec(in, 50 + c);
    for (std::size_t i = 0; i < per_class; ++i)
      for (std::size_t j = 0; j < in; ++j) data.push_back(centre[j] + 0.7 * n(gen));
  }
  const auto idx = make_index(3, per_class);
  model::Linear<double> f(in, dim);
  Rng init(42);
  f.initialize(init);
  model::Adam<double> opt({1e-2}, in * dim + dim);
  const EpisodeConfig cfg{3, 5, 5, false};

  auto run = [&](const Episode& ep, bool update) {
    const auto order = ep.batch_order();
    std::vector<double> x, y(order.size() * dim);
    for (std::size_t s : order) x.insert(x.end(), data.begin() + s * in, data.begin() + (s + 1) * in);
    f.forward(x, y, order.size(), {});
    std::vector<std::size_t> labels;
    for (const auto& q : ep.queries) labels.push_back(q.label);
    const auto l = episode_loss(y, dim, ep.n_way, ep.k_shot, labels);
    if (update) {
      for (auto* p : f.parameters()) p->zero_grad();
      f.backward(x, y, l.grad_embeddings, {}, order.size());
      opt.step(f.parameters());
    }
    return l.total;
  };
  Rng eval_rng(7);
  std::vector<Episode> fixed;
  for (int i = 0; i < 20; ++i) fixed.push_back(sample_episode(idx, cfg, eval_rng));
  auto mean_loss = [&] {
    double s = 0.0;
    for (const auto& ep : fixed) s += run(ep, false);
    return s / fixed.size();
  };
  const double before = mean_loss();
  Rng train_rng(8);
  for (int i = 0; i < 30; ++i) run(sample_episode(idx, cfg, train_rng), true);
  EXPECT_LT(mean_loss(), before);
}
