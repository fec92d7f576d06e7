#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "envid/fewshot.hpp"
#include "envid/model/network.hpp"
#include "envid/pipeline/config.hpp"
#include "envid/pipeline/dataset.hpp"

namespace envid::pipeline {

enum class Protocol { kClosed, kOpen, kKSweep, kPositions, kRegress };

Protocol parse_protocol(const std::string& name);
std::string to_string(Protocol p);

// Evaluation-mode network outputs for every row of a feature set.
struct EmbeddedSet {
  std::vector<std::size_t> records;
  std::vector<fewshot::Vec> embeddings;
  std::vector<std::vector<double>> regression;  // per row, one value per target
};

EmbeddedSet embed(model::Network<float>& net, const FeatureSet& fs);

// Runs one protocol on an embedded split and returns its JSON summary;
// CSV reports go to `out_dir` when it is non-empty. `targets` names the
// regression heads. Throws kProtocolMismatch.
nlohmann::json evaluate(const DatasetManifest& m, const EmbeddedSet& set, Protocol protocol,
                        const EvalConfig& config, const std::vector<std::string>& targets,
                        const std::filesystem::path& out_dir = {});

// Renders a plain-text table from the JSON summaries in a directory.
std::string render_report(const std::filesystem::path& dir);

}  // namespace envid::pipeline
