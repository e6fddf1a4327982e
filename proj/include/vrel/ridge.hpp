#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "vrel/bag.hpp"
#include "vrel/core.hpp"
#include "vrel/features.hpp"
#include "vrel/gmm.hpp"

namespace vrel {

/// Linear relation classifiers, one column per predicate class, plus the preprocessing that
/// produced the descriptors they score.
struct RelationModel {
  Eigen::MatrixXd weights;  // d x R'
  double lambda = 0.0;
  Vocabulary vocabulary;
  std::shared_ptr<const GmmModel> gmm;
  std::shared_ptr<const PcaModel> pca;

  Eigen::Index descriptor_dim() const { return weights.rows(); }
  Eigen::Index class_count() const { return weights.cols(); }
};

/// The regularized normal equations (X^T X + N lambda I) for a fixed descriptor matrix, factored
/// once. Solves and the implicit B = I - X (X^T X + N lambda I)^{-1} X^T product reuse it.
class RidgeSystem {
 public:
  /// Keeps a reference to X, which must outlive the system.
  RidgeSystem(const Eigen::MatrixXd& X, double lambda);
  RidgeSystem(Eigen::MatrixXd&&, double) = delete;

  /// argmin_W (1/N) |Z - X W|_F^2 + lambda |W|_F^2.
  Eigen::MatrixXd solve(const Eigen::MatrixXd& Z) const;

  /// B * M without forming the N x N matrix.
  Eigen::MatrixXd residual_operator(const Eigen::MatrixXd& M) const;

  Eigen::Index rows() const { return X_.rows(); }
  double lambda() const { return lambda_; }

 private:
  const Eigen::MatrixXd& X_;
  double lambda_;
  Eigen::LLT<Eigen::MatrixXd> factor_;
};

/// (1/N) |Z - X W|_F^2 + lambda |W|_F^2.
double ridge_objective(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Z, const Eigen::MatrixXd& W, double lambda);

/// Closed-form multi-output ridge regression. Throws InputError on non-finite input, lambda <= 0,
/// empty X or mismatched shapes.
Eigen::MatrixXd solve_ridge(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Z, double lambda);

RelationModel train_ridge(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Z, double lambda, Vocabulary vocabulary);

/// One labelled training example: a descriptor row and its predicate class. A pair with several
/// predicates contributes several examples.
struct LabelledRow {
  std::size_t row = 0;
  PredicateIndex label = 0;
};

/// Expands (row, label) examples into X, one-hot Z and fits. `class_count` columns.
RelationModel train_ridge_labelled(const Eigen::MatrixXd& descriptors, std::span<const LabelledRow> examples,
                                   double lambda, Vocabulary vocabulary);

struct NoisyConfig {
  double lambda = 1e-3;
  std::uint64_t seed = 0;
};

struct NoisyResult {
  RelationModel model;
  std::vector<LabelledRow> examples;
};

/// Noisy-label baseline: each bag labels one uniformly drawn member with its predicate, the other
/// members are discarded. Rows in `no_relation_rows` are added with the no-relation label.
NoisyResult train_noisy(const Eigen::MatrixXd& descriptors, std::span<const Bag> bags,
                        std::span<const std::size_t> no_relation_rows, const Vocabulary& vocabulary,
                        const NoisyConfig& config);

}  // namespace vrel
