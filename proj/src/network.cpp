#include "envid/model/network.hpp"

#include <algorithm>

#include "envid/error.hpp"

namespace envid::model {

void validate(const ModelConfig& c) {
  const auto& b = c.backbone;
  if (b.in_channels == 0 || b.in_height == 0 || b.in_width == 0)
    throw Error(ErrorKind::kConfig, "input shape must be positive");
  if (b.blocks.empty()) throw Error(ErrorKind::kConfig, "backbone needs at least one conv block");
  if (b.activation != "relu")
    throw Error(ErrorKind::kConfig, "unsupported activation '" + b.activation + "'");
  if (b.dropout < 0.0 || b.dropout >= 1.0)
    throw Error(ErrorKind::kConfig, "dropout must be in [0, 1)");
  std::size_t h = b.in_height, w = b.in_width;
  for (const auto& block : b.blocks) {
    if (block.kernel != 3) throw Error(ErrorKind::kConfig, "all conv kernels must be 3x3");
    if (block.out_channels == 0) throw Error(ErrorKind::kConfig, "conv block needs channels");
    if (block.pool) {
      h /= 2;
      w /= 2;
    }
    if (h == 0 || w == 0) throw Error(ErrorKind::kConfig, "pooling shrinks the map to nothing");
  }
  if (b.dense_dim == 0 || c.embed_dim == 0 || c.head_hidden == 0)
    throw Error(ErrorKind::kConfig, "layer widths must be positive");
}

nlohmann::json to_json(const ModelConfig& c) {
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& b : c.backbone.blocks)
    blocks.push_back({{"out_channels", b.out_channels}, {"kernel", b.kernel}, {"pool", b.pool}});
  return {{"backbone",
           {{"in_channels", c.backbone.in_channels},
            {"in_height", c.backbone.in_height},
            {"in_width", c.backbone.in_width},
            {"blocks", blocks},
            {"dense_dim", c.backbone.dense_dim},
            {"activation", c.backbone.activation},
            {"dropout", c.backbone.dropout}}},
          {"embed_dim", c.embed_dim},
          {"head_hidden", c.head_hidden},
          {"targets", c.targets}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    if (j.contains("backbone")) {
      const auto& b = j.at("backbone");
      c.backbone.in_channels = b.value("in_channels", c.backbone.in_channels);
      c.backbone.in_height = b.value("in_height", c.backbone.in_height);
      c.backbone.in_width = b.value("in_width", c.backbone.in_width);
      c.backbone.dense_dim = b.value("dense_dim", c.backbone.dense_dim);
      c.backbone.activation = b.value("activation", c.backbone.activation);
      c.backbone.dropout = b.value("dropout", c.backbone.dropout);
      if (b.contains("blocks")) {
        c.backbone.blocks.clear();
        for (const auto& blk : b.at("blocks"))
          c.backbone.blocks.push_back({blk.at("out_channels").get<std::size_t>(),
                                       blk.value("kernel", std::size_t{3}),
                                       blk.value("pool", true)});
      }
    }
    c.embed_dim = j.value("embed_dim", c.embed_dim);
    c.head_hidden = j.value("head_hidden", c.head_hidden);
    if (j.contains("targets")) c.targets = j.at("targets").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kConfig, std::string("model config: ") + e.what());
  }
  validate(c);
  return c;
}

template <typename T>
Network<T>::Network(ModelConfig config) : config_(std::move(config)) {
  validate(config_);
  const auto& b = config_.backbone;
  kernels::ImageShape shape{b.in_channels, b.in_height, b.in_width};
  for (const auto& block : b.blocks) {
    auto conv = std::make_unique<Conv2d<T>>(shape, block.out_channels, block.kernel);
    shape = conv->output_shape();
    backbone_.add(std::move(conv));
    backbone_.add(std::make_unique<Relu<T>>(shape.size()));
    if (block.pool) {
      auto pool = std::make_unique<MaxPool2x2<T>>(shape);
      shape = pool->output_shape();
      backbone_.add(std::move(pool));
    }
  }
  backbone_.add(std::make_unique<Dropout<T>>(shape.size(), b.dropout));
  backbone_.add(std::make_unique<Linear<T>>(shape.size(), b.dense_dim, "dense"));
  backbone_.add(std::make_unique<Relu<T>>(b.dense_dim));
  projector_.add(std::make_unique<Linear<T>>(b.dense_dim, config_.embed_dim, "projector"));
  heads_.resize(config_.targets.size());
  for (std::size_t i = 0; i < heads_.size(); ++i) {
    const std::string name = "head." + config_.targets[i];
    heads_[i].add(std::make_unique<Linear<T>>(config_.embed_dim, config_.head_hidden, name + ".0"));
    heads_[i].add(std::make_unique<Relu<T>>(config_.head_hidden));
    heads_[i].add(std::make_unique<Linear<T>>(config_.head_hidden, 1, name + ".1"));
  }
}

template <typename T>
void Network<T>::initialize(std::uint64_t seed) {
  Rng rng(seed);
  backbone_.initialize(rng);
  projector_.initialize(rng);
  for (auto& h : heads_) h.initialize(rng);
}

template <typename T>
std::span<const T> Network<T>::backbone_forward(std::span<const T> input, std::size_t batch,
                                                const PassContext& ctx) {
  return backbone_.forward(input, batch, ctx);
}

template <typename T>
ForwardOutput Network<T>::forward(std::span<const T> input, std::size_t batch,
                                  const PassContext& ctx) {
  auto features = backbone_.forward(input, batch, ctx);
  auto embed = projector_.forward(features, batch, ctx);
  ForwardOutput out;
  out.batch = batch;
  out.embeddings.assign(embed.begin(), embed.end());
  out.regression.assign(batch * heads_.size(), 0.0);
  for (std::size_t h = 0; h < heads_.size(); ++h) {
    auto y = heads_[h].forward(embed, batch, ctx);
    for (std::size_t b = 0; b < batch; ++b) out.regression[b * heads_.size() + h] = y[b];
  }
  batch_ = batch;
  recorded_ = true;
  return out;
}

template <typename T>
void Network<T>::backward(std::span<const double> grad_embeddings,
                          std::span<const double> grad_regression) {
  if (!recorded_) throw Error(ErrorKind::kGraphNotRecorded, "backward without a recorded forward");
  const std::size_t e = config_.embed_dim;
  if (grad_embeddings.size() != batch_ * e)
    throw Error(ErrorKind::kShapeMismatch, "embedding gradient has the wrong size");
  std::vector<T> g_embed(grad_embeddings.begin(), grad_embeddings.end());
  if (!grad_regression.empty()) {
    if (grad_regression.size() != batch_ * heads_.size())
      throw Error(ErrorKind::kShapeMismatch, "regression gradient has the wrong size");
    std::vector<T> g(batch_);
    for (std::size_t h = 0; h < heads_.size(); ++h) {
      for (std::size_t b = 0; b < batch_; ++b)
        g[b] = static_cast<T>(grad_regression[b * heads_.size() + h]);
      auto gin = heads_[h].backward(g, true);
      for (std::size_t i = 0; i < g_embed.size(); ++i) g_embed[i] += gin[i];
    }
  } else {
    for (auto& h : heads_) h.forget();
  }
  auto g_features = projector_.backward(g_embed, true);
  backbone_.backward(g_features, false);
  recorded_ = false;
}

template <typename T>
ForwardOutput Network<T>::infer(std::span<const T> input, std::size_t batch, std::size_t chunk) {
  const std::size_t n_in = input_size();
  if (input.size() != batch * n_in)
    throw Error(ErrorKind::kShapeMismatch, "input does not match batch x input size");
  ForwardOutput all;
  all.batch = batch;
  all.embeddings.reserve(batch * embed_dim());
  all.regression.reserve(batch * heads_.size());
  const PassContext eval{false, nullptr};
  for (std::size_t start = 0; start < batch; start += chunk) {
    const std::size_t n = std::min(chunk, batch - start);
    auto part = forward(input.subspan(start * n_in, n * n_in), n, eval);
    all.embeddings.insert(all.embeddings.end(), part.embeddings.begin(), part.embeddings.end());
    all.regression.insert(all.regression.end(), part.regression.begin(), part.regression.end());
  }
  backbone_.forget();
  projector_.forget();
  for (auto& h : heads_) h.forget();
  recorded_ = false;
  return all;
}

template <typename T>
std::vector<Tensor<T>*> Network<T>::parameters() {
  auto out = backbone_.parameters();
  for (auto* p : projector_.parameters()) out.push_back(p);
  for (auto& h : heads_)
    for (auto* p : h.parameters()) out.push_back(p);
  return out;
}

template <typename T>
std::size_t Network<T>::parameter_count() {
  std::size_t n = 0;
  for (auto* p : parameters()) n += p->numel();
  return n;
}

template <typename T>
void Network<T>::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

template <typename T>
std::vector<T> Network<T>::flat_parameters() {
  std::vector<T> out;
  out.reserve(parameter_count());
  for (auto* p : parameters()) out.insert(out.end(), p->value.begin(), p->value.end());
  return out;
}

template <typename T>
void Network<T>::set_flat_parameters(std::span<const T> values) {
  if (values.size() != parameter_count())
    throw Error(ErrorKind::kShapeMismatch, "parameter vector length " +
                                               std::to_string(values.size()) + " != " +
                                               std::to_string(parameter_count()));
  std::size_t off = 0;
  for (auto* p : parameters()) {
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(off), p->numel(), p->value.begin());
    off += p->numel();
  }
}

template <typename T>
std::vector<T> Network<T>::flat_gradients() {
  std::vector<T> out;
  out.reserve(parameter_count());
  for (auto* p : parameters()) out.insert(out.end(), p->grad.begin(), p->grad.end());
  return out;
}

template class Network<float>;
template class Network<double>;

}  // namespace envid::model
