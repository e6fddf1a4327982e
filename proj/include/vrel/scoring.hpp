#pragma once

#include <atomic>
#include <map>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "vrel/candidates.hpp"
#include "vrel/core.hpp"
#include "vrel/eval.hpp"
#include "vrel/ridge.hpp"

namespace vrel {

struct ScoreWeights {
  double alpha_sub = 0.0;
  double alpha_obj = 0.0;
  double alpha_lang = 0.0;

  void validate() const;
  bool operator==(const ScoreWeights&) const = default;
};

/// Externally computed language-prior scores per (subject, predicate, object). Absent triplets
/// score 0 and are counted.
class LanguageScoreTable {
 public:
  LanguageScoreTable() = default;
  LanguageScoreTable(const LanguageScoreTable& other);
  LanguageScoreTable& operator=(const LanguageScoreTable& other);

  void set(const Triplet& t, double score) { scores_[t] = score; }
  std::optional<double> find(const Triplet& t) const;
  double lookup(const Triplet& t) const;
  std::size_t misses() const { return misses_.load(); }
  std::size_t size() const { return scores_.size(); }

 private:
  std::map<Triplet, double> scores_;
  mutable std::atomic<std::size_t> misses_{0};
};

struct ScoreOptions {
  /// Use log(score) for the detector terms instead of the raw confidences.
  bool log_detector_scores = false;
};

/// x . w_r for a descriptor row.
double relation_score(const Eigen::Ref<const Eigen::VectorXd>& descriptor, const RelationModel& model,
                      PredicateIndex predicate);

/// v_rel + alpha_sub v_sub + alpha_obj v_obj + alpha_lang l. Throws QueryMismatchError when the
/// pair's categories are not the query's, InputError when the pair has no descriptor.
double triplet_score(const PairCandidate& pair, const Triplet& query, const RelationModel& model,
                     const ScoreWeights& weights, const LanguageScoreTable* language = nullptr,
                     const ScoreOptions& options = {});

/// Real predicates ranked by v_rel (descending, ties by index), truncated to k. The no-relation
/// class is ranked only when asked for.
std::vector<std::pair<PredicateIndex, double>> predict_relations(const Eigen::Ref<const Eigen::VectorXd>& descriptor,
                                                                 const RelationModel& model, std::size_t k = 1,
                                                                 bool include_no_relation = false);

/// True when the arg-max over all classes, no-relation included, is the no-relation class.
bool predicts_no_relation(const Eigen::Ref<const Eigen::VectorXd>& descriptor, const RelationModel& model);

/// Scores every real predicate of every pair with the full triplet score and keeps the top
/// `per_pair` per pair. pair_id is the position in `pairs`.
std::vector<ScoredTriplet> score_pairs(std::span<const PairCandidate> pairs, const RelationModel& model,
                                       const ScoreWeights& weights, std::size_t per_pair,
                                       const LanguageScoreTable* language = nullptr, const ScoreOptions& options = {});

struct ScoreGrid {
  std::vector<double> alpha_sub{0.0, 0.1, 0.3, 0.5, 1.0};
  std::vector<double> alpha_obj{0.0, 0.1, 0.3, 0.5, 1.0};
  std::vector<double> alpha_lang{0.0, 0.1, 0.3, 0.5, 1.0};

  /// Cartesian product, alpha_sub outermost.
  std::vector<ScoreWeights> cells() const;
};

struct ValidationImage {
  std::string image_id;
  std::vector<PairCandidate> pairs;
  std::vector<TripletAnnotation> annotations;
};

struct TuneOptions {
  std::size_t recall_x = 50;
  double iou_threshold = 0.5;
  std::size_t preds_per_pair = 1;
  ScoreOptions score;
};

struct TuneResult {
  ScoreWeights weights;
  double recall = 0.0;
  std::vector<double> cell_recalls;  // grid order
};

/// Exhaustive grid search maximizing relationship-detection recall@x on fully annotated
/// validation images. The first cell in grid order wins ties.
TuneResult tune_weights(std::span<const ValidationImage> validation, const RelationModel& model, const ScoreGrid& grid,
                        const LanguageScoreTable* language = nullptr, const TuneOptions& options = {});

}  // namespace vrel
