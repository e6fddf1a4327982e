#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "vrel/core.hpp"

namespace vrel {

enum class DetectionMode { predicate, phrase, relationship };
enum class Localization { gt, union_box, subject, subject_object };

DetectionMode parse_detection_mode(const std::string& s);
Localization parse_localization(const std::string& s);
std::string to_string(DetectionMode m);
std::string to_string(Localization l);

struct EvalConfig {
  std::size_t x = 50;
  double iou_threshold = 0.5;
  DetectionMode mode = DetectionMode::relationship;
  Localization localization = Localization::subject_object;
  std::size_t preds_per_pair = 1;
  /// 11-point interpolated AP instead of the mean precision at each positive.
  bool interpolated_ap = false;

  void validate() const;
};

/// One scored (subject, predicate, object) hypothesis on a candidate pair. `pair_id` identifies
/// the pair so that at most `preds_per_pair` predicates per pair are kept.
struct ScoredTriplet {
  std::string image_id;
  std::size_t pair_id = 0;
  Triplet labels;
  BoundingBox subject_box;
  BoundingBox object_box;
  double score = 0.0;
};

struct EvalBreakdown {
  std::string key;  // image id or query name
  double value = 0.0;
  std::size_t gt = 0;
  std::size_t matched = 0;
  std::size_t predictions = 0;
};

struct EvalReport {
  std::string metric;
  double value = 0.0;
  std::size_t gt_count = 0;
  std::size_t matched = 0;
  std::size_t predictions = 0;
  std::vector<EvalBreakdown> breakdown;
  /// Queries left out of a mean (no ground-truth positives).
  std::vector<std::string> excluded;
};

/// Detection recall at x. Per image, predictions are ranked by score (stable), capped at
/// preds_per_pair per pair and cut to the top x; then each kept prediction in rank order claims
/// the best-overlapping unclaimed ground truth it matches. Recall is pooled over the dataset.
///
/// Matching: labels must agree; predicate and relationship modes need subject and object IoU
/// >= threshold (in predicate mode the boxes are the annotated ones, so this is an identity
/// check); phrase mode compares the union boxes.
EvalReport recall_at_x(std::span<const ScoredTriplet> predictions, std::span<const TripletAnnotation> ground_truth,
                       const EvalConfig& config);

struct BoxPair {
  std::string image_id;
  BoundingBox subject_box;
  BoundingBox object_box;
};

struct RankedCandidate {
  BoxPair pair;
  double score = 0.0;
};

struct RetrievalQuery {
  std::string name;
  std::vector<RankedCandidate> candidates;
  std::vector<BoxPair> positives;
};

/// Mean of precision at each retrieved positive, divided by the number of positives (missed
/// positives contribute zero). `hits` is in rank order.
double average_precision(std::span<const char> hits, std::size_t positives, bool interpolated = false);

/// Per-query AP over candidates ranked by score (stable), where a candidate is a hit iff it
/// matches an unclaimed positive of the same image under the configured localization:
/// gt (identical boxes), union_box, subject, or subject_object at iou_threshold. mAP is the
/// unweighted mean over queries that have positives.
EvalReport retrieval_map(std::span<const RetrievalQuery> queries, const EvalConfig& config);

/// Fraction of pairs whose ground-truth predicate set meets the first k ranked predictions.
EvalReport topk_accuracy(std::span<const std::vector<PredicateIndex>> ranked_predictions,
                         std::span<const std::vector<PredicateIndex>> ground_truth, std::size_t k);

/// Aligned plain-text table, one row per report.
std::string format_report_table(std::span<const EvalReport> reports);

}  // namespace vrel
