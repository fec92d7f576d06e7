#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>

#include "envid/error.hpp"
#include "envid/fewshot.hpp"
#include "envid/model/adam.hpp"
#include "envid/model/checkpoint.hpp"
#include "envid/model/layers.hpp"
#include "envid/model/network.hpp"

using namespace envid;
using namespace envid::model;

namespace {

std::vector<double> random_vec(std::size_t n, unsigned seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8}); }

// Checks a layer against central differences of L = <w, layer(x)>.
void check_layer(Layer<double>& layer, std::size_t batch, unsigned seed) {
  Rng rng(seed);
  layer.initialize(rng);
  auto x = random_vec(batch * layer.in_size(), seed + 1);
  const auto w = random_vec(batch * layer.out_size(), seed + 2);
  std::vector<double> y(w.size()), gx(x.size());
  const PassContext ctx{false, nullptr};
  auto loss = [&] {
    std::vector<double> out(w.size());
    layer.forward(x, out, batch, ctx);
    double s = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * out[i];
    return s;
  };
  layer.forward(x, y, batch, ctx);
  for (auto* p : layer.parameters()) p->zero_grad();
  layer.backward(x, y, w, gx, batch);
  const double h = 1e-6;
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); i += std::max<std::size_t>(1, x.size() / 40)) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = loss();
    x[i] = keep - h;
    const double down = loss();
    x[i] = keep;
    worst = std::max(worst, rel_err((up - down) / (2 * h), gx[i]));
  }
  for (auto* p : layer.parameters())
    for (std::size_t i = 0; i < p->value.size(); i += std::max<std::size_t>(1, p->value.size() / 40)) {
      const double keep = p->value[i];
      p->value[i] = keep + h;
      const double up = loss();
      p->value[i] = keep - h;
      const double down = loss();
      p->value[i] = keep;
      worst = std::max(worst, rel_err((up - down) / (2 * h), p->grad[i]));
    }
  EXPECT_LT(worst, 1e-4) << layer.kind();
}

ModelConfig tiny_config(std::vector<std::string> targets = {"rt60"}) {
  ModelConfig c;
  c.backbone.in_height = 8;
  c.backbone.in_width = 12;
  c.backbone.blocks = {{3}, {4}};
  c.backbone.dense_dim = 6;
  c.backbone.dropout = 0.5;
  c.embed_dim = 5;
  c.head_hidden = 4;
  c.targets = std::move(targets);
  return c;
}

}  // namespace

TEST(Layers, ConvGradient) {
  Conv2d<double> conv({2, 5, 6}, 3);
  check_layer(conv, 2, 10);
}

TEST(Layers, LinearGradient) {
  Linear<double> lin(7, 4);
  check_layer(lin, 3, 20);
}

TEST(Layers, ReluGradient) {
  Relu<double> r(11);
  check_layer(r, 2, 30);
}

TEST(Layers, MaxPoolGradient) {
  MaxPool2x2<double> p({2, 6, 5});
  check_layer(p, 2, 40);
}

TEST(Layers, DropoutEvalIsIdentityAndTrainScales) {
  Dropout<double> d(1000, 0.5);
  const auto x = random_vec(1000, 1);
  std::vector<double> y(1000);
  d.forward(x, y, 1, {false, nullptr});
  EXPECT_EQ(y, x);
  Rng rng(3);
  d.forward(x, y, 1, {true, &rng});
  std::size_t zeros = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (y[i] == 0.0) ++zeros;
    else EXPECT_DOUBLE_EQ(y[i], 2.0 * x[i]);
  }
  EXPECT_GT(zeros, 400u);
  EXPECT_LT(zeros, 600u);
  std::vector<double> g(1000), ones(1000, 1.0);
  d.backward(x, y, ones, g, 1);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_DOUBLE_EQ(g[i], y[i] == 0.0 ? 0.0 : 2.0);
}

TEST(Layers, LinearAffine) {
  Linear<double> lin(3, 2);
  const PassContext ctx;
  std::vector<double> y(2);
  lin.forward(std::vector<double>{1, 2, 3}, y, 1, ctx);
  EXPECT_EQ(y, (std::vector<double>{0, 0}));  // zero weights and bias
  lin.bias().value = {0.5, -1.0};
  lin.forward(std::vector<double>{1, 2, 3}, y, 1, ctx);
  EXPECT_EQ(y, (std::vector<double>{0.5, -1.0}));
  Rng rng(4);
  lin.initialize(rng);
  lin.bias().value = {0.25, 0.75};
  const std::vector<double> a{0.1, -0.2, 0.3}, b{1.0, 0.5, -0.5}, ab{1.1, 0.3, -0.2};
  std::vector<double> ya(2), yb(2), yab(2);
  lin.forward(a, ya, 1, ctx);
  lin.forward(b, yb, 1, ctx);
  lin.forward(ab, yab, 1, ctx);
  for (int i = 0; i < 2; ++i) EXPECT_NEAR(yab[i], ya[i] + yb[i] - lin.bias().value[i], 1e-12);
}

TEST(Sequential, SumGradientIsOnes) {
  Sequential<double> s;
  s.add(std::make_unique<Relu<double>>(4));
  const std::vector<double> x{1, 2, 3, 4};
  s.forward(x, 1, {});
  const auto g = s.backward(std::vector<double>(4, 1.0), true);
  EXPECT_EQ(std::vector<double>(g.begin(), g.end()), (std::vector<double>(4, 1.0)));
}

TEST(Sequential, BackwardWithoutForwardThrows) {
  Sequential<double> s;
  s.add(std::make_unique<Relu<double>>(4));
  try {
    s.backward(std::vector<double>(4, 1.0), true);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kGraphNotRecorded);
  }
}

TEST(Sequential, ShapeMismatchRejected) {
  Sequential<double> s;
  s.add(std::make_unique<Relu<double>>(4));
  EXPECT_THROW(s.add(std::make_unique<Relu<double>>(5)), Error);
}

TEST(Network, DefaultParameterCount) {
  // conv (c_in*9+1)*c_out per block; 96x276 pools to 3x8 after five blocks
  const std::size_t conv = (1 * 9 + 1) * 32 + (32 * 9 + 1) * 64 + (64 * 9 + 1) * 128 +
                           (128 * 9 + 1) * 128 + (128 * 9 + 1) * 256;
  const std::size_t dense = 256 * 3 * 8 * 512 + 512;
  const std::size_t proj = 512 * 256 + 256;
  const std::size_t head = 256 * 256 + 256 + 256 + 1;
  Network<float> net(ModelConfig{});
  EXPECT_EQ(net.parameter_count(), conv + dense + proj + head);
  EXPECT_EQ(net.parameter_count(), 3879041u);
  EXPECT_GE(net.parameter_count(), 3000000u);
  EXPECT_LE(net.parameter_count(), 4600000u);
  EXPECT_EQ(net.feature_dim(), 512u);
  EXPECT_EQ(net.embed_dim(), 256u);
  std::size_t by_shape = 0;
  for (auto* p : net.parameters()) by_shape += p->numel();
  EXPECT_EQ(by_shape, net.parameter_count());
}

TEST(Network, ZeroMapGivesFiniteFeatures) {
  Network<float> net(ModelConfig{});
  net.initialize(1);
  const std::vector<float> x(net.input_size(), 0.0f);
  const auto out = net.infer(x, 1);
  ASSERT_EQ(out.embeddings.size(), 256u);
  for (double v : out.embeddings) EXPECT_TRUE(std::isfinite(v));
}

TEST(Network, BatchPermutationEquivariant) {
  Network<double> net(tiny_config());
  net.initialize(2);
  const std::size_t n = net.input_size();
  const auto a = random_vec(n, 1), b = random_vec(n, 2);
  std::vector<double> ab(a), ba(b);
  ab.insert(ab.end(), b.begin(), b.end());
  ba.insert(ba.end(), a.begin(), a.end());
  const auto o1 = net.infer(ab, 2), o2 = net.infer(ba, 2);
  const std::size_t e = net.embed_dim();
  for (std::size_t i = 0; i < e; ++i) {
    EXPECT_EQ(o1.embeddings[i], o2.embeddings[e + i]);
    EXPECT_EQ(o1.embeddings[e + i], o2.embeddings[i]);
  }
}

TEST(Network, EvalPassesIdentical) {
  Network<float> net(tiny_config());
  net.initialize(3);
  std::vector<float> x(net.input_size());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::sin(0.1f * i);
  const auto a = net.infer(x, 1), b = net.infer(x, 1);
  EXPECT_EQ(a.embeddings, b.embeddings);
  EXPECT_EQ(a.regression, b.regression);
}

TEST(Network, HeadWithZeroWeightsOutputsBias) {
  Network<double> net(tiny_config());
  net.initialize(4);
  auto& out = dynamic_cast<Linear<double>&>(net.head(0).layer(2));
  std::fill(out.weight().value.begin(), out.weight().value.end(), 0.0);
  out.bias().value[0] = 1.25;
  const auto o = net.infer(random_vec(net.input_size(), 5), 1);
  EXPECT_DOUBLE_EQ(o.regression[0], 1.25);
  // scaling a positive final row moves the output monotonically
  std::fill(out.weight().value.begin(), out.weight().value.end(), 1.0);
  const auto x = random_vec(net.input_size(), 6);
  double prev = net.infer(x, 1).regression[0];
  for (double s : {2.0, 3.0}) {
    std::fill(out.weight().value.begin(), out.weight().value.end(), s);
    const double v = net.infer(x, 1).regression[0];
    EXPECT_GE(v, prev);
    prev = v;
  }
}

TEST(Network, BackwardWithoutForwardThrows) {
  Network<double> net(tiny_config());
  EXPECT_THROW(net.backward(std::vector<double>(5, 0.0), {}), Error);
}

TEST(Network, ZeroLossGradientIsZero) {
  Network<double> net(tiny_config());
  net.initialize(7);
  const auto x = random_vec(2 * net.input_size(), 8);
  net.zero_grad();
  net.forward(x, 2, {});
  net.backward(std::vector<double>(2 * net.embed_dim(), 0.0), std::vector<double>(2, 0.0));
  for (double g : net.flat_gradients()) EXPECT_EQ(g, 0.0);
}

// 2-way 1-shot episode with one query per class, classification and
// regression losses, differentiated end to end against central differences.
TEST(Network, FullModelGradientCheck) {
  Network<double> net(tiny_config({"rt60", "volume"}));
  net.initialize(9);
  const std::size_t batch = 4;
  const auto x = random_vec(batch * net.input_size(), 10);
  const std::vector<std::size_t> labels{0, 1};
  const std::vector<double> targets{0.5, 2.0, 1.0, 1.5, 0.7, 2.2, 0.9, 1.4};
  const PassContext ctx{false, nullptr};
  auto loss_at = [&] {
    const auto o = net.infer(x, batch);
    return fewshot::episode_loss(o.embeddings, net.embed_dim(), 2, 1, labels, o.regression, targets).total;
  };
  net.zero_grad();
  const auto o = net.forward(x, batch, ctx);
  const auto l = fewshot::episode_loss(o.embeddings, net.embed_dim(), 2, 1, labels, o.regression, targets);
  net.backward(l.grad_embeddings, l.grad_regression);
  const auto grads = net.flat_gradients();
  auto params = net.flat_parameters();
  const double h = 1e-6;
  double worst = 0.0;
  std::size_t checked = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double keep = params[i];
    params[i] = keep + h;
    net.set_flat_parameters(params);
    const double up = loss_at();
    params[i] = keep - h;
    net.set_flat_parameters(params);
    const double down = loss_at();
    params[i] = keep;
    const double fd = (up - down) / (2 * h);
    if (std::abs(fd) < 1e-7 && std::abs(grads[i]) < 1e-7) continue;
    worst = std::max(worst, rel_err(fd, grads[i]));
    ++checked;
  }
  net.set_flat_parameters(params);
  EXPECT_GT(checked, params.size() / 2);
  EXPECT_LT(worst, 1e-4);
}

TEST(Network, ConfigValidation) {
  auto c = tiny_config();
  c.backbone.blocks[0].kernel = 5;
  EXPECT_THROW(validate(c), Error);
  c = tiny_config();
  c.backbone.activation = "tanh";
  EXPECT_THROW(validate(c), Error);
  c = tiny_config();
  c.backbone.blocks = {{2}, {2}, {2}, {2}};  // 8x12 pools to nothing
  EXPECT_THROW(validate(c), Error);
  const auto ok = tiny_config({"rt60", "volume"});
  const auto back = model_config_from_json(to_json(ok));
  EXPECT_EQ(to_json(back), to_json(ok));
}

TEST(Adam, ZeroGradientLeavesParameters) {
  Tensor<double> p("p", {3});
  p.value = {1.0, -2.0, 3.0};
  Adam<double> opt({}, 3);
  opt.step({&p});
  EXPECT_EQ(p.value, (std::vector<double>{1.0, -2.0, 3.0}));
}

TEST(Adam, FirstStepIsSignTimesLr) {
  Tensor<double> p("p", {3});
  p.grad = {5.0, -0.3, 100.0};
  Adam<double> opt({1e-3}, 3);
  opt.step({&p});
  // m_hat = g, v_hat = g^2 after bias correction: step = lr * g / (|g| + eps)
  EXPECT_NEAR(p.value[0], -1e-3, 1e-9);
  EXPECT_NEAR(p.value[1], 1e-3, 1e-9);
  EXPECT_NEAR(p.value[2], -1e-3, 1e-9);
  EXPECT_EQ(opt.steps(), 1u);
}

TEST(Adam, MatchesHandComputedSecondStep) {
  Tensor<double> p("p", {1});
  Adam<double> opt({0.1, 0.9, 0.999, 1e-8}, 1);
  p.grad = {1.0};
  opt.step({&p});
  p.grad = {-2.0};
  opt.step({&p});
  double m = 0.0, v = 0.0, x = 0.0;
  for (int t = 1; t <= 2; ++t) {
    const double g = t == 1 ? 1.0 : -2.0;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1 - std::pow(0.9, t)), vh = v / (1 - std::pow(0.999, t));
    x -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
  }
  EXPECT_NEAR(p.value[0], x, 1e-12);
}

TEST(Adam, DeterministicAndRestorable) {
  Tensor<float> a("a", {4}), b("b", {4});
  Adam<float> oa({}, 4), ob({}, 4);
  for (int s = 0; s < 3; ++s) {
    a.grad = b.grad = {0.1f * s, -0.2f, 0.3f, 0.0f};
    oa.step({&a});
    ob.step({&b});
  }
  EXPECT_EQ(a.value, b.value);
  Adam<float> oc({}, 4);
  oc.restore(oa.steps(), oa.first_moment(), oa.second_moment());
  Tensor<float> c = a;
  c.grad = a.grad = {1.0f, 1.0f, 1.0f, 1.0f};
  oa.step({&a});
  oc.step({&c});
  EXPECT_EQ(a.value, c.value);
}

TEST(Checkpoint, RoundTripBitExact) {
  Network<float> net(tiny_config({"rt60", "volume"}));
  net.initialize(11);
  Checkpoint ck;
  ck.config_json = to_json(net.config()).dump();
  ck.epoch = 7;
  ck.val_metric = 0.123456789;
  ck.rng_state = "1 2 3";
  ck.parameters = net.flat_parameters();
  ck.adam_step = 42;
  ck.adam_m = std::vector<float>(ck.parameters.size(), 0.5f);
  ck.adam_v = std::vector<float>(ck.parameters.size(), 0.25f);
  const auto path = std::filesystem::temp_directory_path() / "envid_test.ckpt";
  save_checkpoint(path, ck);
  const auto back = load_checkpoint(path);
  EXPECT_EQ(back, ck);

  Network<float> restored(model_config_from_json(nlohmann::json::parse(back.config_json)));
  restored.set_flat_parameters(back.parameters);
  std::vector<float> x(net.input_size());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::cos(0.3f * i);
  EXPECT_EQ(restored.infer(x, 1).embeddings, net.infer(x, 1).embeddings);

  // trailing garbage and bad magic are rejected
  std::ofstream(path, std::ios::app | std::ios::binary) << "x";
  EXPECT_THROW(load_checkpoint(path), Error);
  std::ofstream(path, std::ios::binary) << "NOPE";
  EXPECT_THROW(load_checkpoint(path), Error);
  std::filesystem::remove(path);
}
