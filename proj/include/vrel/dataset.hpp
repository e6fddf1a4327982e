#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "vrel/core.hpp"
#include "vrel/scoring.hpp"

namespace vrel {

/// Dense float32 matrix file.
///
///   bytes 0-3    magic "RELF"
///   bytes 4-7    u32 version (1)
///   bytes 8-15   u64 rows M
///   bytes 16-23  u64 dim D
///   bytes 24-    M * D little-endian float32, row-major
///
/// Loading rejects files whose size disagrees with the declared shape.
class FeatureStore {
 public:
  static constexpr std::uint32_t kVersion = 1;

  FeatureStore() = default;
  FeatureStore(std::size_t rows, std::size_t dim, std::vector<float> data);

  static FeatureStore load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::size_t rows() const { return rows_; }
  std::size_t dim() const { return dim_; }
  std::span<const float> row(std::size_t i) const;
  const std::vector<float>& data() const { return data_; }

  bool operator==(const FeatureStore&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t dim_ = 0;
  std::vector<float> data_;
};

struct ImageRecord {
  std::string id;
  std::vector<Detection> detections;
  std::vector<TripletAnnotation> annotations;

  bool operator==(const ImageRecord&) const = default;
};

struct DatasetSplit {
  std::string name;
  std::vector<ImageRecord> images;

  bool operator==(const DatasetSplit&) const = default;
};

/// In-memory dataset: vocabulary, one appearance-feature store shared by all splits, and
/// per-split images in file order.
struct Dataset {
  Vocabulary vocabulary;
  FeatureStore features;
  std::vector<DatasetSplit> splits;
  std::vector<std::string> warnings;

  const DatasetSplit& split(const std::string& name) const;
  /// Split order is not significant (manifests store splits by name).
  bool operator==(const Dataset& o) const;
};

struct SplitFiles {
  std::filesystem::path detections;
  std::filesystem::path annotations;
};

/// manifest.json: {"format_version": 1, "vocabulary": path, "features": path,
///                 "splits": {name: {"detections": path, "annotations": path}}}
/// Relative paths resolve against the manifest's directory.
struct DatasetManifest {
  static constexpr int kFormatVersion = 1;
  int format_version = kFormatVersion;
  std::filesystem::path vocabulary;
  std::filesystem::path features;
  std::map<std::string, SplitFiles> splits;

  static DatasetManifest load(const std::filesystem::path& path);
};

/// Loads and cross-validates every file. Throws DataError with file/line context on missing files,
/// schema violations, unknown names, dangling feature references and image ids shared by splits.
Dataset load_dataset(const std::filesystem::path& manifest_path);

/// Writes manifest.json, vocabulary.json, features.relf and <split>.{detections,annotations}.jsonl
/// into `directory`; returns the manifest path.
std::filesystem::path save_dataset(const Dataset& dataset, const std::filesystem::path& directory);

Vocabulary load_vocabulary(const std::filesystem::path& path);
void save_vocabulary(const Vocabulary& vocabulary, const std::filesystem::path& path);

/// UTF-8 CSV `subject,predicate,object,score` with a header row, names from the vocabulary.
LanguageScoreTable load_language_table(const std::filesystem::path& path, const Vocabulary& vocabulary);

}  // namespace vrel
