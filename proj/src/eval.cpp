#include "vrel/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>

#include "vrel/errors.hpp"

namespace vrel {

namespace {

constexpr double kIdentityIou = 1.0 - 1e-9;

std::vector<std::size_t> rank_by_score(std::size_t n, const auto& score_of) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score_of(a) > score_of(b); });
  return order;
}

// Overlap score used to pick among several matching ground truths; nullopt when not a match.
std::optional<double> localization_overlap(const BoundingBox& ps, const BoundingBox& po, const BoundingBox& gs,
                                           const BoundingBox& go, Localization loc, double threshold) {
  switch (loc) {
    case Localization::gt: {
      const double m = std::min(iou(ps, gs), iou(po, go));
      if (m < kIdentityIou) return std::nullopt;
      return m;
    }
    case Localization::union_box: {
      const double u = iou(union_box(ps, po), union_box(gs, go));
      if (u < threshold) return std::nullopt;
      return u;
    }
    case Localization::subject: {
      const double s = iou(ps, gs);
      if (s < threshold) return std::nullopt;
      return s;
    }
    case Localization::subject_object: {
      const double m = std::min(iou(ps, gs), iou(po, go));
      if (m < threshold) return std::nullopt;
      return m;
    }
  }
  return std::nullopt;
}

}  // namespace

DetectionMode parse_detection_mode(const std::string& s) {
  if (s == "predicate") return DetectionMode::predicate;
  if (s == "phrase") return DetectionMode::phrase;
  if (s == "relationship") return DetectionMode::relationship;
  throw InputError("unknown detection mode '" + s + "'");
}

Localization parse_localization(const std::string& s) {
  if (s == "gt") return Localization::gt;
  if (s == "union") return Localization::union_box;
  if (s == "subj") return Localization::subject;
  if (s == "subj_obj" || s == "subj-obj") return Localization::subject_object;
  throw InputError("unknown localization '" + s + "'");
}

std::string to_string(DetectionMode m) {
  switch (m) {
    case DetectionMode::predicate: return "predicate";
    case DetectionMode::phrase: return "phrase";
    case DetectionMode::relationship: return "relationship";
  }
  return "?";
}

std::string to_string(Localization l) {
  switch (l) {
    case Localization::gt: return "gt";
    case Localization::union_box: return "union";
    case Localization::subject: return "subj";
    case Localization::subject_object: return "subj_obj";
  }
  return "?";
}

void EvalConfig::validate() const {
  if (x < 1) throw InputError("recall cutoff x must be at least 1");
  if (!(iou_threshold > 0.0 && iou_threshold <= 1.0)) throw InputError("IoU threshold must be in (0, 1]");
  if (preds_per_pair < 1) throw InputError("predictions per pair must be at least 1");
}

EvalReport recall_at_x(std::span<const ScoredTriplet> predictions, std::span<const TripletAnnotation> ground_truth,
                       const EvalConfig& config) {
  config.validate();
  std::map<std::string, std::vector<std::size_t>> preds_by_image;
  std::map<std::string, std::vector<std::size_t>> gt_by_image;
  for (std::size_t i = 0; i < predictions.size(); ++i) preds_by_image[predictions[i].image_id].push_back(i);
  for (std::size_t i = 0; i < ground_truth.size(); ++i) {
    if (!ground_truth[i].has_boxes()) {
      throw InputError("ground truth for image '" + ground_truth[i].image_id + "' has no boxes");
    }
    gt_by_image[ground_truth[i].image_id].push_back(i);
  }

  const Localization loc =
      config.mode == DetectionMode::phrase ? Localization::union_box : Localization::subject_object;

  EvalReport report;
  report.metric = "recall@" + std::to_string(config.x) + " " + to_string(config.mode);
  for (const auto& [image, gts] : gt_by_image) {
    EvalBreakdown row{image, 0.0, gts.size(), 0, 0};
    std::vector<char> claimed(gts.size(), 0);
    if (auto it = preds_by_image.find(image); it != preds_by_image.end()) {
      const auto& idx = it->second;
      const auto order = rank_by_score(idx.size(), [&](std::size_t k) { return predictions[idx[k]].score; });
      std::map<std::size_t, std::size_t> per_pair;
      std::vector<std::size_t> kept;
      for (std::size_t k : order) {
        if (kept.size() == config.x) break;
        const ScoredTriplet& p = predictions[idx[k]];
        if (per_pair[p.pair_id]++ >= config.preds_per_pair) continue;
        kept.push_back(idx[k]);
      }
      row.predictions = kept.size();
      for (std::size_t pi : kept) {
        const ScoredTriplet& p = predictions[pi];
        std::optional<std::size_t> best;
        double best_overlap = -1.0;
        for (std::size_t g = 0; g < gts.size(); ++g) {
          if (claimed[g]) continue;
          const TripletAnnotation& gt = ground_truth[gts[g]];
          if (p.labels != gt.triplet()) continue;
          const auto overlap = localization_overlap(p.subject_box, p.object_box, *gt.subject_box, *gt.object_box, loc,
                                                    config.iou_threshold);
          if (overlap && *overlap > best_overlap) {
            best_overlap = *overlap;
            best = g;
          }
        }
        if (best) {
          claimed[*best] = 1;
          ++row.matched;
        }
      }
    }
    row.value = static_cast<double>(row.matched) / static_cast<double>(row.gt);
    report.gt_count += row.gt;
    report.matched += row.matched;
    report.predictions += row.predictions;
    report.breakdown.push_back(std::move(row));
  }
  report.value = report.gt_count == 0 ? 0.0 : static_cast<double>(report.matched) / static_cast<double>(report.gt_count);
  return report;
}

double average_precision(std::span<const char> hits, std::size_t positives, bool interpolated) {
  if (positives == 0) return 0.0;
  std::vector<double> precision;
  std::vector<double> recall;
  std::size_t tp = 0;
  double sum = 0.0;
  for (std::size_t i = 0; i < hits.size(); ++i) {
    if (hits[i]) {
      ++tp;
      sum += static_cast<double>(tp) / static_cast<double>(i + 1);
    }
    precision.push_back(static_cast<double>(tp) / static_cast<double>(i + 1));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(positives));
  }
  if (!interpolated) return sum / static_cast<double>(positives);

  double ap = 0.0;
  for (int t = 0; t <= 10; ++t) {
    const double level = t / 10.0;
    double best = 0.0;
    for (std::size_t i = 0; i < precision.size(); ++i) {
      if (recall[i] >= level) best = std::max(best, precision[i]);
    }
    ap += best / 11.0;
  }
  return ap;
}

EvalReport retrieval_map(std::span<const RetrievalQuery> queries, const EvalConfig& config) {
  config.validate();
  EvalReport report;
  report.metric = "mAP " + to_string(config.localization);
  double sum = 0.0;
  std::size_t counted = 0;
  for (const RetrievalQuery& q : queries) {
    if (q.positives.empty()) {
      report.excluded.push_back(q.name);
      continue;
    }
    const auto order = rank_by_score(q.candidates.size(), [&](std::size_t k) { return q.candidates[k].score; });
    std::vector<char> claimed(q.positives.size(), 0);
    std::vector<char> hits;
    hits.reserve(order.size());
    for (std::size_t k : order) {
      const BoxPair& c = q.candidates[k].pair;
      std::optional<std::size_t> best;
      double best_overlap = -1.0;
      for (std::size_t g = 0; g < q.positives.size(); ++g) {
        const BoxPair& gt = q.positives[g];
        if (claimed[g] || gt.image_id != c.image_id) continue;
        const auto overlap = localization_overlap(c.subject_box, c.object_box, gt.subject_box, gt.object_box,
                                                  config.localization, config.iou_threshold);
        if (overlap && *overlap > best_overlap) {
          best_overlap = *overlap;
          best = g;
        }
      }
      if (best) claimed[*best] = 1;
      hits.push_back(best ? 1 : 0);
    }
    EvalBreakdown row{q.name, average_precision(hits, q.positives.size(), config.interpolated_ap), q.positives.size(),
                      static_cast<std::size_t>(std::count(hits.begin(), hits.end(), 1)), q.candidates.size()};
    sum += row.value;
    ++counted;
    report.gt_count += row.gt;
    report.matched += row.matched;
    report.predictions += row.predictions;
    report.breakdown.push_back(std::move(row));
  }
  report.value = counted == 0 ? 0.0 : sum / static_cast<double>(counted);
  return report;
}

EvalReport topk_accuracy(std::span<const std::vector<PredicateIndex>> ranked_predictions,
                         std::span<const std::vector<PredicateIndex>> ground_truth, std::size_t k) {
  if (ranked_predictions.size() != ground_truth.size()) {
    throw InputError("prediction and ground-truth lists differ in length");
  }
  EvalReport report;
  report.metric = "top-" + std::to_string(k) + " accuracy";
  for (std::size_t i = 0; i < ground_truth.size(); ++i) {
    if (ground_truth[i].empty()) throw InputError("pair " + std::to_string(i) + " has no ground-truth predicate");
    const auto& ranked = ranked_predictions[i];
    const std::size_t depth = std::min(k, ranked.size());
    const bool hit = std::any_of(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(depth), [&](PredicateIndex p) {
      return std::find(ground_truth[i].begin(), ground_truth[i].end(), p) != ground_truth[i].end();
    });
    report.matched += hit;
    report.predictions += depth;
  }
  report.gt_count = ground_truth.size();
  report.value = report.gt_count == 0 ? 0.0 : static_cast<double>(report.matched) / static_cast<double>(report.gt_count);
  return report;
}

std::string format_report_table(std::span<const EvalReport> reports) {
  std::size_t width = 6;
  for (const auto& r : reports) width = std::max(width, r.metric.size());
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-*s  %8s  %8s  %8s  %11s\n", static_cast<int>(width), "metric", "value", "gt",
                "matched", "predictions");
  out << line;
  for (const auto& r : reports) {
    std::snprintf(line, sizeof line, "%-*s  %8.2f  %8zu  %8zu  %11zu\n", static_cast<int>(width), r.metric.c_str(),
                  100.0 * r.value, r.gt_count, r.matched, r.predictions);
    out << line;
  }
  return out.str();
}

}  // namespace vrel
