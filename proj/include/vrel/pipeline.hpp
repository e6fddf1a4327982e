#pragma once

// Glue between the on-disk dataset and the numeric modules: candidate and annotated pair
// construction, training samples for the GMM and PCA, descriptor attachment, featurized pair
// files and retrieval queries.

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "vrel/candidates.hpp"
#include "vrel/dataset.hpp"
#include "vrel/eval.hpp"
#include "vrel/features.hpp"
#include "vrel/gmm.hpp"
#include "vrel/ridge.hpp"
#include "vrel/scoring.hpp"

namespace vrel {

/// Candidate pairs of one image. With `prefiltered` the detections are taken as they are,
/// otherwise top-k, score threshold and NMS are applied first.
std::vector<PairCandidate> candidate_pairs(const ImageRecord& image, const CandidateConfig& config, bool prefiltered);

/// Pairs built from the annotated boxes of a split: one per distinct (subject box, object box,
/// categories), with every annotated predicate of that pair in `labels`. Detector scores are 1.
/// Throws DataError when an annotation lacks boxes or feature references.
struct LabelledPairs {
  std::vector<PairCandidate> pairs;
  std::vector<std::vector<PredicateIndex>> labels;
};
LabelledPairs annotated_pairs(std::span<const ImageRecord> images);

/// Rows are spatial vectors of the pairs.
Eigen::MatrixXd spatial_samples(std::span<const PairCandidate> pairs);

/// L2-normalized appearance vectors of every distinct feature row referenced by the images,
/// in ascending feature-row order.
Eigen::MatrixXd appearance_samples(std::span<const ImageRecord> images, const FeatureStore& features);

/// Computes the descriptor of every pair (in parallel).
void attach_descriptors(std::span<PairCandidate> pairs, const GmmModel& gmm, const PcaModel& pca,
                        const FeatureStore& features);

/// Stacks pair descriptors into an N x d matrix. Throws InputError if one is missing.
Eigen::MatrixXd descriptor_matrix(std::span<const PairCandidate> pairs);

/// Featurized pairs as written by `featurize`:
///   PREFIX.relf        descriptors, one float32 row per pair
///   PREFIX.pairs.jsonl {"image", "subject": detection, "object": detection[, "predicates": [names]]}
///   PREFIX.meta.json   {"kind": "candidates"|"gt", "spatial_dim", "count", "dim"}
struct PairSet {
  std::string kind;
  std::vector<PairCandidate> pairs;
  /// Annotated predicates per pair; empty for candidate sets.
  std::vector<std::vector<PredicateIndex>> labels;
};

void save_pair_set(const PairSet& set, const std::string& prefix, const Vocabulary& vocabulary);
PairSet load_pair_set(const std::string& prefix, const Vocabulary& vocabulary);

/// Block index per pair for block-coordinate training: the rank of its image id in order of
/// first appearance.
std::vector<std::size_t> image_blocks(std::span<const PairCandidate> pairs);

struct RetrievalOptions {
  ScoreWeights weights;
  const LanguageScoreTable* language = nullptr;
  ScoreOptions score;
  /// Drop candidates whose arg-max class is no-relation.
  bool suppress_no_relation = false;
};

/// One query per distinct annotated triplet. Every pair whose categories match the query is a
/// candidate, scored by the triplet score; positives are the annotated box pairs.
std::vector<RetrievalQuery> build_retrieval_queries(std::span<const PairCandidate> pairs,
                                                    std::span<const TripletAnnotation> annotations,
                                                    const RelationModel& model, const RetrievalOptions& options);

}  // namespace vrel
