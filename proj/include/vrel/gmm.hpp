#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace vrel {

/// Diagonal-covariance Gaussian mixture over 6-d spatial vectors.
struct GmmModel {
  Eigen::MatrixXd means;      // k x dim
  Eigen::MatrixXd variances;  // k x dim, per-dimension variances
  Eigen::VectorXd weights;    // k, sums to one
  std::uint64_t seed = 0;

  Eigen::Index components() const { return means.rows(); }
  Eigen::Index dim() const { return means.cols(); }
};

struct GmmConfig {
  int max_iters = 200;
  double tol = 1e-6;             // relative change of the mean log-likelihood
  double variance_floor = 1e-6;
  std::uint64_t seed = 0;
};

struct GmmFit {
  GmmModel model;
  /// Mean log-likelihood of the samples under the parameters entering each EM iteration,
  /// followed by the value for the returned parameters.
  std::vector<double> log_likelihood;
  int iterations = 0;
  bool converged = false;
  std::size_t reinitialized_components = 0;
};

/// EM with k-means++ seeding. Throws InsufficientDataError when there are fewer rows than
/// components and InputError on non-finite samples.
GmmFit fit_gmm(const Eigen::MatrixXd& samples, Eigen::Index k, const GmmConfig& config = {});

/// Posterior component probabilities p(j | x), computed in log space.
Eigen::VectorXd responsibilities(const GmmModel& model, const Eigen::Ref<const Eigen::VectorXd>& x);

/// Row-wise responsibilities for a batch of samples (rows of the result sum to one).
Eigen::MatrixXd batch_responsibilities(const GmmModel& model, const Eigen::MatrixXd& samples);

/// log p(x) under the mixture.
double log_density(const GmmModel& model, const Eigen::Ref<const Eigen::VectorXd>& x);

/// Mean of log p(x_i) over the rows of `samples`.
double mean_log_likelihood(const GmmModel& model, const Eigen::MatrixXd& samples);

}  // namespace vrel
