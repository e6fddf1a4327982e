#pragma once

// Seeded synthetic data with a known ("planted") answer.

#include <cstdint>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "vrel/bag.hpp"
#include "vrel/core.hpp"
#include "vrel/dataset.hpp"

namespace vrel {

/// Descriptor-space benchmark: R predicate clusters, one bag per image, exactly one row per bag
/// drawn from the bag's predicate cluster. The remaining bag rows are drawn from other clusters
/// or from a broad background distribution.
struct PlantedConfig {
  std::size_t predicates = 5;
  std::size_t images = 200;
  std::size_t min_bag = 3;
  std::size_t max_bag = 12;
  std::size_t dim = 16;
  double center_scale = 1.0;
  double noise = 0.35;
  double background_scale = 1.2;
  /// Fraction of distractors taken from other predicate clusters (the rest are background).
  double cluster_distractor_rate = 0.5;
  std::size_t test_per_predicate = 200;
  /// Value of the appended constant descriptor column.
  double bias = 1.0;
  std::uint64_t seed = 0;
};

struct PlantedBenchmark {
  static constexpr std::size_t kBackground = std::numeric_limits<std::size_t>::max();

  Vocabulary vocabulary;
  Eigen::MatrixXd descriptors;  // last column is the constant `bias`
  std::vector<Bag> bags;
  std::vector<std::size_t> planted_rows;  // per bag
  std::vector<std::size_t> row_cluster;   // per row, kBackground for background rows
  std::vector<std::size_t> row_block;     // image per row
  std::vector<double> row_priority;
  Eigen::MatrixXd test_descriptors;
  std::vector<PredicateIndex> test_labels;
};

PlantedBenchmark make_planted_benchmark(const PlantedConfig& config);

/// Box-level dataset whose predicates are spatial arrangements ("left of", "above", "on", ...).
/// Each annotated pair sits among decoy detections of the same categories, so the weak bags have
/// 3 to 12 rows. Splits "train", "val" and "test".
struct PlantedDatasetConfig {
  std::size_t train_images = 200;
  std::size_t val_images = 40;
  std::size_t test_images = 60;
  std::size_t feature_dim = 32;
  std::uint64_t seed = 0;
};

Dataset make_planted_dataset(const PlantedDatasetConfig& config);

}  // namespace vrel
