#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "envid/fewshot.hpp"
#include "envid/rng.hpp"

namespace envid::eval {

using fewshot::Vec;

// Class indices ordered by ascending distance (stable on ties).
std::vector<std::size_t> ranking_from_distances(std::span<const double> d);

double top_n_accuracy(const std::vector<std::vector<std::size_t>>& rankings,
                      std::span<const std::size_t> truths, std::size_t n);

struct ConfusionTally {
  explicit ConfusionTally(std::size_t classes = 0)
      : tp(classes, 0), fp(classes, 0), fn(classes, 0) {}
  void add(std::size_t truth, std::size_t predicted);
  double accuracy() const;

  std::vector<std::size_t> tp, fp, fn;
  std::size_t total = 0;
};

struct ClassScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// 0/0 is reported as 0.
std::vector<ClassScores> prf1(const ConfusionTally& tally);

// Embeddings with class provenance.
struct EmbeddedPool {
  std::vector<Vec> embeddings;
  std::vector<std::size_t> classes;
};

struct OpenSetConfig {
  std::size_t n_way = 10;
  std::size_t k_shot = 15;
  std::size_t trials = 1000;
  double p_known = 0.5;
  // References and queries are the same pool: never use the query itself
  // as a support sample.
  bool exclude_query = false;
};

struct OpenSetScore {
  double distance = 0.0;  // min prototype distance
  bool known = false;
};

// Each trial draws a query from `queries`, then builds n_way prototypes
// from `references`; with probability 1 - p_known the query's own class is
// left out. Throws kEmptyPool, kInsufficientClasses.
std::vector<OpenSetScore> open_set_trial(const EmbeddedPool& references,
                                         const EmbeddedPool& queries, const OpenSetConfig& config,
                                         Rng& rng);

struct RocPoint {
  double threshold = 0.0;
  double fpr = 0.0;  // rejected knowns / knowns
  double tpr = 0.0;  // rejected unknowns / unknowns
};

struct RocCurve {
  std::vector<RocPoint> points;
  double auc = 0.0;
};

// Unknowns are positives; a query is rejected when distance > threshold.
// Throws kSingleClassScores.
RocCurve roc_auc(std::span<const OpenSetScore> scores);

// Throws kLengthMismatch.
double rmse(std::span<const double> predictions, std::span<const double> targets);

inline constexpr double kVolumeLo = 10.0;
inline constexpr double kVolumeHi = 3750.0;

// Equal-width bin of a value clamped into [lo, hi].
std::size_t volume_bin(double v, std::size_t n_bins, double lo = kVolumeLo, double hi = kVolumeHi);

double volume_bin_classify(std::span<const double> estimates, std::span<const double> targets,
                           std::size_t n_bins, double lo = kVolumeLo, double hi = kVolumeHi);

struct PositionResult {
  std::size_t row = 0;
  std::size_t col = 0;
  bool correct = false;
  std::string category;
};

struct PositionMap {
  std::size_t rows = 0, cols = 0;
  std::vector<double> accuracy;  // rows x cols; cells without results are 0
  std::vector<std::size_t> counts;
  double center = 0.0;
  double corners = 0.0;
  double middle_row = 0.0;
  double middle_col = 0.0;
  double mean = 0.0;
  double std = 0.0;
};

PositionMap position_accuracy_map(std::span<const PositionResult> results, std::size_t rows = 5,
                                  std::size_t cols = 5);

// Map over all results plus one per category (key "all" for the former).
std::map<std::string, PositionMap> position_accuracy_maps(std::span<const PositionResult> results,
                                                         std::size_t rows = 5,
                                                         std::size_t cols = 5);

double pearson(std::span<const double> a, std::span<const double> b);

// Schroeder decay normalized to 1 at t = 0 (linear energy).
std::vector<double> energy_decay_curve(std::span<const double> air);

// Mean Pearson coefficient over all cross-pool pairs of decay curves, each
// pair brought to the longer length on a shared time axis. Throws kEmptyPool.
double air_pool_correlation(const std::vector<std::vector<double>>& pool_a,
                            const std::vector<std::vector<double>>& pool_b);

// CSV reports with fixed formatting.
void write_class_csv(const std::filesystem::path& path, const ConfusionTally& tally,
                     const std::vector<std::string>& class_names);
void write_roc_csv(const std::filesystem::path& path, const RocCurve& roc);
void write_position_csv(const std::filesystem::path& path,
                        const std::map<std::string, PositionMap>& maps);

}  // namespace envid::eval
