#pragma once

#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "envid/fewshot.hpp"
#include "envid/model/checkpoint.hpp"
#include "envid/model/network.hpp"
#include "envid/pipeline/config.hpp"
#include "envid/pipeline/dataset.hpp"

namespace envid::pipeline {

// Regression targets: "rt60" (s), "rt60_sabine" (s), "volume" (log10 m^3).
double encode_target(const SampleRecord& r, const std::string& name);
double decode_target(const std::string& name, double value);

// Rows of `fs` grouped by dense class position, plus the dataset class id
// of each position.
struct ClassRows {
  fewshot::ClassIndex rows;
  std::vector<std::size_t> class_ids;
};
ClassRows group_by_class(const DatasetManifest& m, const FeatureSet& fs);

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_class_loss = 0.0;
  double train_reg_loss = 0.0;
  double train_accuracy = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
  double best_val_accuracy = 0.0;
  double best_val_loss = 0.0;  // running minimum
  bool improved = false;
};

struct TrainResult {
  model::Checkpoint best;  // highest validation accuracy seen
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
};

// Episodic training with early stopping on validation few-shot accuracy.
// Each epoch line of the log is also written to `log_out` as JSON.
// Throws kInsufficientClasses.
TrainResult train(const DatasetManifest& m, const FeatureSet& train_set, const FeatureSet& val_set,
                  const TrainConfig& config, std::ostream* log_out = nullptr);

nlohmann::json to_json(const EpochLog& e);

// Rebuilds the network stored in a checkpoint.
std::unique_ptr<model::Network<float>> load_network(const model::Checkpoint& ckpt);
TrainConfig checkpoint_train_config(const model::Checkpoint& ckpt);

}  // namespace envid::pipeline
