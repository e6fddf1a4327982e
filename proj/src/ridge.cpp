#include "vrel/ridge.hpp"

#include <cmath>
#include <random>

#include "vrel/errors.hpp"

namespace vrel {

namespace {

Eigen::LLT<Eigen::MatrixXd> factor_normal_equations(const Eigen::MatrixXd& X, double lambda) {
  if (X.rows() < 1) throw InputError("ridge regression needs at least one row");
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw InputError("ridge lambda must be positive and finite");
  if (!X.allFinite()) throw InputError("ridge design matrix contains non-finite values");
  const Eigen::Index d = X.cols();
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(d, d);
  gram.selfadjointView<Eigen::Lower>().rankUpdate(X.transpose());
  gram = gram.selfadjointView<Eigen::Lower>();
  gram.diagonal().array() += static_cast<double>(X.rows()) * lambda;
  Eigen::LLT<Eigen::MatrixXd> llt(gram);
  if (llt.info() != Eigen::Success) throw InputError("ridge normal equations are not positive definite");
  return llt;
}

}  // namespace

RidgeSystem::RidgeSystem(const Eigen::MatrixXd& X, double lambda)
    : X_(X), lambda_(lambda), factor_(factor_normal_equations(X, lambda)) {}

Eigen::MatrixXd RidgeSystem::solve(const Eigen::MatrixXd& Z) const {
  if (Z.rows() != X_.rows()) throw InputError("ridge targets and descriptors disagree on row count");
  return factor_.solve(X_.transpose() * Z);
}

Eigen::MatrixXd RidgeSystem::residual_operator(const Eigen::MatrixXd& M) const {
  return M - X_ * solve(M);
}

double ridge_objective(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Z, const Eigen::MatrixXd& W, double lambda) {
  return (Z - X * W).squaredNorm() / static_cast<double>(X.rows()) + lambda * W.squaredNorm();
}

Eigen::MatrixXd solve_ridge(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Z, double lambda) {
  if (!Z.allFinite()) throw InputError("ridge targets contain non-finite values");
  return RidgeSystem(X, lambda).solve(Z);
}

RelationModel train_ridge(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Z, double lambda, Vocabulary vocabulary) {
  if (Z.cols() != static_cast<Eigen::Index>(vocabulary.class_count())) {
    throw InputError("label matrix has " + std::to_string(Z.cols()) + " columns, vocabulary has " +
                     std::to_string(vocabulary.class_count()) + " classes");
  }
  RelationModel model;
  model.weights = solve_ridge(X, Z, lambda);
  model.lambda = lambda;
  model.vocabulary = std::move(vocabulary);
  return model;
}

RelationModel train_ridge_labelled(const Eigen::MatrixXd& descriptors, std::span<const LabelledRow> examples,
                                   double lambda, Vocabulary vocabulary) {
  const auto classes = static_cast<Eigen::Index>(vocabulary.class_count());
  const auto n = static_cast<Eigen::Index>(examples.size());
  Eigen::MatrixXd X(n, descriptors.cols());
  Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(n, classes);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& ex = examples[static_cast<std::size_t>(i)];
    if (static_cast<Eigen::Index>(ex.row) >= descriptors.rows()) throw InputError("labelled row out of range");
    if (static_cast<Eigen::Index>(ex.label) >= classes) throw InputError("label out of range");
    X.row(i) = descriptors.row(static_cast<Eigen::Index>(ex.row));
    Z(i, static_cast<Eigen::Index>(ex.label)) = 1.0;
  }
  return train_ridge(X, Z, lambda, std::move(vocabulary));
}

NoisyResult train_noisy(const Eigen::MatrixXd& descriptors, std::span<const Bag> bags,
                        std::span<const std::size_t> no_relation_rows, const Vocabulary& vocabulary,
                        const NoisyConfig& config) {
  std::mt19937_64 rng(config.seed);
  NoisyResult result;
  for (const Bag& bag : bags) {
    if (bag.rows.empty()) continue;
    std::uniform_int_distribution<std::size_t> pick(0, bag.rows.size() - 1);
    result.examples.push_back({bag.rows[pick(rng)], bag.predicate});
  }
  if (!no_relation_rows.empty()) {
    const auto nr = vocabulary.no_relation_index();
    if (!nr) throw InputError("no-relation rows given but the vocabulary has no no-relation class");
    for (std::size_t r : no_relation_rows) result.examples.push_back({r, *nr});
  }
  if (result.examples.empty()) throw InputError("noisy training has no labelled rows");
  result.model = train_ridge_labelled(descriptors, result.examples, config.lambda, vocabulary);
  return result;
}

}  // namespace vrel
