#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "envid/rng.hpp"

namespace envid::fewshot {

using Vec = std::vector<double>;

// Sample indices grouped by class id (class id = position).
using ClassIndex = std::vector<std::vector<std::size_t>>;

struct EpisodeConfig {
  std::size_t n_way = 10;
  std::size_t k_shot = 15;
  std::size_t query_cap = 8;  // per class
  // Run with fewer ways when the dataset has fewer classes.
  bool allow_fallback = false;
};

struct Query {
  std::size_t sample = 0;
  std::size_t label = 0;  // episode-local class position
};

struct Episode {
  std::size_t n_way = 0;
  std::size_t k_shot = 0;
  std::vector<std::size_t> classes;              // dataset class ids
  std::vector<std::vector<std::size_t>> support;  // [way][shot] sample ids
  std::vector<Query> queries;

  // Support samples class-major, then queries: the batch order used by
  // episode_loss.
  std::vector<std::size_t> batch_order() const;
};

// Throws kInsufficientClasses, kInsufficientSamples.
Episode sample_episode(const ClassIndex& data, const EpisodeConfig& config, Rng& rng);

// Mean of each class's support embeddings. Throws kEmptySupport,
// kDimensionMismatch.
std::vector<Vec> prototypes(const std::vector<std::vector<Vec>>& support);

// Euclidean distance to every prototype. Throws kDimensionMismatch.
Vec distances(std::span<const double> query, const std::vector<Vec>& protos);

// softmax(-d), max-subtracted.
Vec class_likelihood(std::span<const double> d);

inline constexpr double kProbabilityFloor = 1e-12;

double class_loss(std::span<const double> likelihoods, std::size_t true_class);
double reg_loss(double target, double estimate);
double total_loss(double class_term, double reg_term, bool regression_enabled);

// Argmax with ties to the lowest index.
std::size_t predict(std::span<const double> likelihoods);

struct RejectionRule {
  double threshold = 0.0;
};

struct Decision {
  bool rejected = false;
  std::size_t cls = 0;
};

// Rejects iff min distance > threshold; otherwise accepts the nearest class.
Decision reject_unknown(std::span<const double> d, const RejectionRule& rule);

struct EpisodeLoss {
  double total = 0.0;
  double classification = 0.0;
  double regression = 0.0;
  double accuracy = 0.0;
  std::vector<double> grad_embeddings;  // rows x dim
  std::vector<double> grad_regression;  // rows x targets
};

// Loss of one episode and its partials. Rows of `embeddings` follow
// Episode::batch_order (n_way * k_shot support rows, then queries).
// The class term averages over queries; the regression term is the mean
// absolute error over all rows, summed over targets, and is skipped when
// `targets` is empty.
EpisodeLoss episode_loss(std::span<const double> embeddings, std::size_t dim, std::size_t n_way,
                         std::size_t k_shot, std::span<const std::size_t> query_labels,
                         std::span<const double> regression = {},
                         std::span<const double> targets = {});

}  // namespace envid::fewshot
