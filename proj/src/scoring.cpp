#include "vrel/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vrel/errors.hpp"
#include "vrel/parallel.hpp"

namespace vrel {

namespace {

double detector_term(double score, const ScoreOptions& options) {
  if (!options.log_detector_scores) return score;
  return std::log(std::max(score, 1e-12));
}

const Eigen::VectorXd& descriptor_of(const PairCandidate& pair) {
  if (!pair.descriptor) throw InputError("pair in image '" + pair.image_id + "' has no descriptor");
  return pair.descriptor->full();
}

}  // namespace

void ScoreWeights::validate() const {
  for (double a : {alpha_sub, alpha_obj, alpha_lang}) {
    if (!std::isfinite(a) || a < 0.0) throw InputError("score weights must be finite and non-negative");
  }
}

LanguageScoreTable::LanguageScoreTable(const LanguageScoreTable& other)
    : scores_(other.scores_), misses_(other.misses_.load()) {}

LanguageScoreTable& LanguageScoreTable::operator=(const LanguageScoreTable& other) {
  scores_ = other.scores_;
  misses_ = other.misses_.load();
  return *this;
}

std::optional<double> LanguageScoreTable::find(const Triplet& t) const {
  auto it = scores_.find(t);
  if (it == scores_.end()) return std::nullopt;
  return it->second;
}

double LanguageScoreTable::lookup(const Triplet& t) const {
  if (auto v = find(t)) return *v;
  ++misses_;
  return 0.0;
}

double relation_score(const Eigen::Ref<const Eigen::VectorXd>& descriptor, const RelationModel& model,
                      PredicateIndex predicate) {
  if (descriptor.size() != model.descriptor_dim()) {
    throw InputError("descriptor has length " + std::to_string(descriptor.size()) + ", model expects " +
                     std::to_string(model.descriptor_dim()));
  }
  if (static_cast<Eigen::Index>(predicate) >= model.class_count()) throw InputError("predicate index out of range");
  return descriptor.dot(model.weights.col(static_cast<Eigen::Index>(predicate)));
}

double triplet_score(const PairCandidate& pair, const Triplet& query, const RelationModel& model,
                     const ScoreWeights& weights, const LanguageScoreTable* language, const ScoreOptions& options) {
  if (pair.subject.category != query.subject || pair.object.category != query.object) {
    throw QueryMismatchError("pair categories do not match the query triplet");
  }
  double score = relation_score(descriptor_of(pair), model, query.predicate);
  score += weights.alpha_sub * detector_term(pair.subject.score, options);
  score += weights.alpha_obj * detector_term(pair.object.score, options);
  if (language) score += weights.alpha_lang * language->lookup(query);
  return score;
}

std::vector<std::pair<PredicateIndex, double>> predict_relations(const Eigen::Ref<const Eigen::VectorXd>& descriptor,
                                                                 const RelationModel& model, std::size_t k,
                                                                 bool include_no_relation) {
  if (descriptor.size() != model.descriptor_dim()) throw InputError("descriptor length does not match the model");
  const Eigen::VectorXd scores = model.weights.transpose() * descriptor;
  std::size_t ranked = model.vocabulary.predicate_count();
  if (include_no_relation && model.vocabulary.has_no_relation()) ranked = model.vocabulary.class_count();
  ranked = std::min<std::size_t>(ranked, static_cast<std::size_t>(scores.size()));

  std::vector<std::pair<PredicateIndex, double>> out;
  out.reserve(ranked);
  for (std::size_t r = 0; r < ranked; ++r) out.emplace_back(r, scores(static_cast<Eigen::Index>(r)));
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  if (out.size() > k) out.resize(k);
  return out;
}

bool predicts_no_relation(const Eigen::Ref<const Eigen::VectorXd>& descriptor, const RelationModel& model) {
  const auto nr = model.vocabulary.no_relation_index();
  if (!nr) return false;
  const auto top = predict_relations(descriptor, model, 1, true);
  return !top.empty() && top.front().first == *nr;
}

std::vector<ScoredTriplet> score_pairs(std::span<const PairCandidate> pairs, const RelationModel& model,
                                       const ScoreWeights& weights, std::size_t per_pair,
                                       const LanguageScoreTable* language, const ScoreOptions& options) {
  const std::size_t predicates = model.vocabulary.predicate_count();
  const std::size_t keep = std::min(per_pair, predicates);
  std::vector<std::vector<ScoredTriplet>> slots(pairs.size());
  parallel_for(pairs.size(), [&](std::size_t i) {
    const PairCandidate& pair = pairs[i];
    std::vector<ScoredTriplet> all;
    all.reserve(predicates);
    for (PredicateIndex r = 0; r < predicates; ++r) {
      const Triplet t{pair.subject.category, r, pair.object.category};
      all.push_back({pair.image_id, i, t, pair.subject.box, pair.object.box,
                     triplet_score(pair, t, model, weights, language, options)});
    }
    std::stable_sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.score > b.score; });
    all.resize(keep);
    slots[i] = std::move(all);
  });
  std::vector<ScoredTriplet> out;
  for (auto& s : slots) std::move(s.begin(), s.end(), std::back_inserter(out));
  return out;
}

std::vector<ScoreWeights> ScoreGrid::cells() const {
  std::vector<ScoreWeights> out;
  for (double s : alpha_sub) {
    for (double o : alpha_obj) {
      for (double l : alpha_lang) out.push_back({s, o, l});
    }
  }
  return out;
}

TuneResult tune_weights(std::span<const ValidationImage> validation, const RelationModel& model, const ScoreGrid& grid,
                        const LanguageScoreTable* language, const TuneOptions& options) {
  const auto cells = grid.cells();
  if (cells.empty()) throw InputError("weight grid is empty");
  for (const auto& c : cells) c.validate();

  std::vector<PairCandidate> pairs;
  std::vector<TripletAnnotation> gt;
  for (const ValidationImage& image : validation) {
    for (const auto& a : image.annotations) {
      if (!a.has_boxes()) throw InputError("validation annotation in image '" + image.image_id + "' lacks boxes");
      gt.push_back(a);
    }
    pairs.insert(pairs.end(), image.pairs.begin(), image.pairs.end());
  }

  EvalConfig eval;
  eval.x = options.recall_x;
  eval.iou_threshold = options.iou_threshold;
  eval.mode = DetectionMode::relationship;
  eval.preds_per_pair = options.preds_per_pair;

  TuneResult result;
  result.cell_recalls.assign(cells.size(), 0.0);
  for (std::size_t c = 0; c < cells.size(); ++c) {
    const auto preds = score_pairs(pairs, model, cells[c], options.preds_per_pair, language, options.score);
    result.cell_recalls[c] = recall_at_x(preds, gt, eval).value;
  }
  const auto best = static_cast<std::size_t>(
      std::max_element(result.cell_recalls.begin(), result.cell_recalls.end()) - result.cell_recalls.begin());
  result.weights = cells[best];
  result.recall = result.cell_recalls[best];
  return result;
}

}  // namespace vrel
