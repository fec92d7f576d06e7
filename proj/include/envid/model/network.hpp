#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "envid/model/layers.hpp"
#include "envid/rng.hpp"

namespace envid::model {

struct ConvBlockConfig {
  std::size_t out_channels = 32;
  std::size_t kernel = 3;
  bool pool = true;
};

struct BackboneConfig {
  std::size_t in_channels = 1;
  std::size_t in_height = 96;
  std::size_t in_width = 276;
  std::vector<ConvBlockConfig> blocks{{32}, {64}, {128}, {128}, {256}};
  std::size_t dense_dim = 512;  // D
  std::string activation = "relu";
  double dropout = 0.5;
};

struct ModelConfig {
  BackboneConfig backbone;
  std::size_t embed_dim = 256;   // E
  std::size_t head_hidden = 256;
  // One regression head per target name.
  std::vector<std::string> targets{"rt60"};
};

// Throws kConfig for non-3x3 kernels, unknown activations, empty layers or
// a spatial size that pools away.
void validate(const ModelConfig& config);

nlohmann::json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

struct ForwardOutput {
  std::size_t batch = 0;
  std::vector<double> embeddings;  // batch x E
  std::vector<double> regression;  // batch x targets
};

// Backbone -> projector -> (embedding, regression heads). The batch input
// is batch x (C * H * W) in channel-major image order.
template <typename T>
class Network {
 public:
  explicit Network(ModelConfig config);

  const ModelConfig& config() const { return config_; }
  std::size_t input_size() const { return backbone_.in_size(); }
  std::size_t feature_dim() const { return backbone_.out_size(); }
  std::size_t embed_dim() const { return config_.embed_dim; }
  std::size_t num_targets() const { return heads_.size(); }

  void initialize(std::uint64_t seed);

  // Records the pass for backward.
  ForwardOutput forward(std::span<const T> input, std::size_t batch, const PassContext& ctx);

  // Backbone features only (batch x D), recorded in the backbone.
  std::span<const T> backbone_forward(std::span<const T> input, std::size_t batch,
                                      const PassContext& ctx);

  // Accumulates gradients of a loss with the given partials w.r.t. the
  // embeddings (batch x E) and regression outputs (batch x targets; may be
  // empty). Throws kGraphNotRecorded.
  void backward(std::span<const double> grad_embeddings, std::span<const double> grad_regression);

  // Evaluation-mode embeddings in chunks; nothing stays recorded.
  ForwardOutput infer(std::span<const T> input, std::size_t batch, std::size_t chunk = 16);

  std::vector<Tensor<T>*> parameters();
  std::size_t parameter_count();
  void zero_grad();
  std::vector<T> flat_parameters();
  void set_flat_parameters(std::span<const T> values);
  std::vector<T> flat_gradients();

  Sequential<T>& backbone() { return backbone_; }
  Sequential<T>& projector() { return projector_; }
  Sequential<T>& head(std::size_t i) { return heads_[i]; }

 private:
  ModelConfig config_;
  Sequential<T> backbone_;
  Sequential<T> projector_;
  std::vector<Sequential<T>> heads_;
  std::size_t batch_ = 0;
  bool recorded_ = false;
};

}  // namespace envid::model
