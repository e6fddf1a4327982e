#pragma once

// Binary model container.
//
//   bytes 0-3    magic "RELM"
//   bytes 4-7    u32 version (1)
//   bytes 8-15   u64 header length H
//   bytes 16..   H bytes of UTF-8 JSON header:
//                {"kind", "vocabulary", "vocab_hash", "arrays": [{"name", "rows", "cols", "offset"}], "meta"}
//   then         float64 little-endian payload, each array row-major at its byte offset
//
// Output is deterministic: saving a loaded model reproduces the file byte for byte.

#include <filesystem>
#include <optional>

#include "json.hpp"
#include "vrel/features.hpp"
#include "vrel/gmm.hpp"
#include "vrel/ridge.hpp"
#include "vrel/scoring.hpp"

namespace vrel {

void save_gmm(const GmmModel& gmm, const std::filesystem::path& path);
GmmModel load_gmm(const std::filesystem::path& path);

void save_pca(const PcaModel& pca, const std::filesystem::path& path);
PcaModel load_pca(const std::filesystem::path& path);

/// A trained relation model with its preprocessing, score weights and training record.
struct ModelBundle {
  RelationModel model;
  ScoreWeights weights;
  /// Free-form training record (configuration, traces, skipped items).
  nlohmann::json info = nlohmann::json::object();
  /// Final latent assignment of weakly supervised training, if kept.
  std::optional<Eigen::MatrixXd> assignment;
};

void save_model(const ModelBundle& bundle, const std::filesystem::path& path);
/// Throws DataError when the file is malformed or, given `expected`, when its vocabulary differs.
ModelBundle load_model(const std::filesystem::path& path, const Vocabulary* expected = nullptr);

}  // namespace vrel
