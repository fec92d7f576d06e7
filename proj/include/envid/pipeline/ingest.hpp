#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace envid::pipeline {

enum class CorpusKind { kSpeech, kAir, kNoise };

CorpusKind parse_corpus_kind(const std::string& name);
std::string to_string(CorpusKind k);

// Start of the lowest-energy 20 ms frame (frames on a 20 ms grid).
std::size_t quietest_frame(std::span<const double> x, int sample_rate);

// Lengthens a short clip to `length` by appending x[p:] repeatedly, where p
// is the quietest frame, so joins fall on near-silent positions.
std::vector<double> extend_by_concatenation(std::span<const double> x, std::size_t length,
                                            int sample_rate);

// Splits speech into 3 s segments (dropping a shorter tail; clips shorter
// than 3 s are extended), or stores AIRs/noise whole, all at 16 kHz. Files
// go to <out>/<kind>-<pool>/ and the index to <out>/<kind>-<pool>.json.
// AIR labels are taken from an optional <stem>.json sidecar. Throws
// kEmptyDirectory, kUnreadableFile.
nlohmann::json ingest_corpus(const std::filesystem::path& dir, CorpusKind kind,
                             const std::filesystem::path& out, const std::string& pool = "train");

}  // namespace envid::pipeline
