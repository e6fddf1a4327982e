#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vrel/core.hpp"
#include "vrel/features.hpp"

namespace vrel {

struct CandidateConfig {
  double score_threshold = 0.3;
  std::size_t top_k = 100;
  double nms_threshold = 0.3;
  std::optional<std::size_t> max_pairs_per_image;  // unlimited when empty

  void validate() const;
};

/// Ordered (subject, object) pair of detections from one image.
struct PairCandidate {
  std::string image_id;
  Detection subject;
  Detection object;
  std::optional<PairDescriptor> descriptor;
};

/// Per-category greedy non-maximum suppression. Detections are visited by descending score
/// (ties keep input order); one survives iff its IoU with every kept detection of the same
/// category is <= threshold. Survivors are returned in visiting order.
std::vector<Detection> nms(std::span<const Detection> detections, double threshold);

/// Top-k by score, then score > threshold, then NMS.
std::vector<Detection> select_candidates(std::span<const Detection> detections, const CandidateConfig& config);

/// All ordered pairs (i, j), i != j, in row-major order. With a cap, the pairs with the highest
/// subject-score x object-score product are kept (stable on ties). Pairs of two identical
/// detections (same box and category) are never formed.
std::vector<PairCandidate> enumerate_pairs(std::span<const Detection> detections,
                                           std::optional<std::size_t> max_pairs = std::nullopt);

}  // namespace vrel
