#include "vrel/candidates.hpp"

#include <algorithm>
#include <numeric>

#include "vrel/errors.hpp"

namespace vrel {

namespace {

std::vector<std::size_t> order_by_score(std::span<const Detection> detections) {
  std::vector<std::size_t> order(detections.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return detections[a].score > detections[b].score; });
  return order;
}

}  // namespace

void CandidateConfig::validate() const {
  if (!(score_threshold >= 0.0 && score_threshold <= 1.0)) throw InputError("score_threshold must be in [0, 1]");
  if (!(nms_threshold >= 0.0 && nms_threshold <= 1.0)) throw InputError("nms_threshold must be in [0, 1]");
  if (top_k < 1) throw InputError("top_k must be at least 1");
}

std::vector<Detection> nms(std::span<const Detection> detections, double threshold) {
  std::vector<Detection> kept;
  for (std::size_t i : order_by_score(detections)) {
    const Detection& d = detections[i];
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const Detection& k) {
      return k.category == d.category && iou(k.box, d.box) > threshold;
    });
    if (!suppressed) kept.push_back(d);
  }
  return kept;
}

std::vector<Detection> select_candidates(std::span<const Detection> detections, const CandidateConfig& config) {
  config.validate();
  std::vector<Detection> top;
  for (std::size_t i : order_by_score(detections)) {
    if (top.size() == config.top_k) break;
    top.push_back(detections[i]);
  }
  std::erase_if(top, [&](const Detection& d) { return !(d.score > config.score_threshold); });
  return nms(top, config.nms_threshold);
}

std::vector<PairCandidate> enumerate_pairs(std::span<const Detection> detections, std::optional<std::size_t> max_pairs) {
  std::vector<PairCandidate> pairs;
  if (detections.size() > 1) pairs.reserve(detections.size() * (detections.size() - 1));
  for (std::size_t i = 0; i < detections.size(); ++i) {
    for (std::size_t j = 0; j < detections.size(); ++j) {
      if (i == j) continue;
      const Detection& s = detections[i];
      const Detection& o = detections[j];
      if (s.category == o.category && s.box == o.box) continue;
      pairs.push_back({s.image_id, s, o, std::nullopt});
    }
  }
  if (max_pairs && pairs.size() > *max_pairs) {
    std::stable_sort(pairs.begin(), pairs.end(), [](const PairCandidate& a, const PairCandidate& b) {
      return a.subject.score * a.object.score > b.subject.score * b.object.score;
    });
    pairs.resize(*max_pairs);
  }
  return pairs;
}

}  // namespace vrel
