#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "vrel/errors.hpp"
#include "vrel/gmm.hpp"

using namespace vrel;

namespace {

Eigen::MatrixXd two_clusters(oracle::Rng& rng, Eigen::Index per_cluster, Eigen::Index dim) {
  Eigen::MatrixXd x(2 * per_cluster, dim);
  for (Eigen::Index i = 0; i < 2 * per_cluster; ++i) {
    const double center = i < per_cluster ? 10.0 : -10.0;
    for (Eigen::Index d = 0; d < dim; ++d) x(i, d) = center + rng.normal();
  }
  return x;
}

GmmModel random_model(oracle::Rng& rng, Eigen::Index k, Eigen::Index dim) {
  GmmModel m;
  m.means = rng.matrix(k, dim, 3.0);
  m.variances = Eigen::MatrixXd(k, dim);
  for (Eigen::Index j = 0; j < k; ++j) {
    for (Eigen::Index d = 0; d < dim; ++d) m.variances(j, d) = rng.uniform(0.2, 4.0);
  }
  m.weights = Eigen::VectorXd(k);
  for (Eigen::Index j = 0; j < k; ++j) m.weights(j) = rng.uniform(0.1, 1.0);
  m.weights /= m.weights.sum();
  return m;
}

}  // namespace

TEST_SUITE("gmm") {
  TEST_CASE("single component is the sample mean and biased variance") {
    oracle::Rng rng(1);
    const Eigen::MatrixXd x = rng.matrix(300, 6, 2.0);
    const GmmFit fit = fit_gmm(x, 1);
    const Eigen::RowVectorXd mean = x.colwise().mean();
    const Eigen::RowVectorXd var = (x.rowwise() - mean).array().square().colwise().mean();
    CHECK((fit.model.means.row(0) - mean).norm() < 1e-9);
    CHECK((fit.model.variances.row(0) - var).norm() < 1e-9);
    CHECK(fit.model.weights(0) == doctest::Approx(1.0));
  }

  TEST_CASE("variance floor applies to constant dimensions") {
    Eigen::MatrixXd x = Eigen::MatrixXd::Ones(20, 6);
    x.col(0).setLinSpaced(20, 0.0, 1.0);
    const GmmFit fit = fit_gmm(x, 1);
    CHECK(fit.model.variances(0, 3) == 1e-6);
    CHECK(fit.model.variances(0, 0) > 1e-3);
  }

  TEST_CASE("two separated clusters are recovered") {
    oracle::Rng rng(2);
    const Eigen::MatrixXd x = two_clusters(rng, 500, 6);
    GmmConfig config;
    config.seed = 3;
    const GmmFit fit = fit_gmm(x, 2, config);
    for (Eigen::Index j = 0; j < 2; ++j) {
      const double sign = fit.model.means(j, 0) > 0 ? 1.0 : -1.0;
      for (Eigen::Index d = 0; d < 6; ++d) CHECK(std::abs(fit.model.means(j, d) - sign * 10.0) < 0.5);
      CHECK(std::abs(fit.model.weights(j) - 0.5) < 0.05);
    }
    CHECK(fit.model.means(0, 0) * fit.model.means(1, 0) < 0.0);
  }

  TEST_CASE("EM log-likelihood never decreases") {
    oracle::Rng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
      const Eigen::Index k = static_cast<Eigen::Index>(rng.index(1, 8));
      const Eigen::MatrixXd x = rng.matrix(static_cast<Eigen::Index>(rng.index(40, 120)), 6, rng.uniform(0.5, 3.0));
      GmmConfig config;
      config.seed = static_cast<std::uint64_t>(trial);
      const GmmFit fit = fit_gmm(x, k, config);
      REQUIRE(fit.log_likelihood.size() >= 2);
      for (std::size_t t = 1; t < fit.log_likelihood.size(); ++t) {
        CHECK(fit.log_likelihood[t] >= fit.log_likelihood[t - 1] - 1e-9);
      }
    }
  }

  TEST_CASE("duplicate samples do not break EM") {
    Eigen::MatrixXd x(30, 6);
    for (Eigen::Index i = 0; i < 30; ++i) x.row(i).setConstant(i < 25 ? 1.0 : 2.0);
    const GmmFit fit = fit_gmm(x, 4);
    CHECK(fit.model.means.allFinite());
    CHECK(fit.model.variances.minCoeff() >= 1e-6);
    CHECK(fit.model.weights.sum() == doctest::Approx(1.0).epsilon(1e-12));
    for (std::size_t t = 1; t < fit.log_likelihood.size(); ++t) {
      CHECK(fit.log_likelihood[t] >= fit.log_likelihood[t - 1] - 1e-9);
    }
  }

  TEST_CASE("responsibilities match a direct density evaluation") {
    oracle::Rng rng(6);
    for (int trial = 0; trial < 50; ++trial) {
      const GmmModel m = random_model(rng, static_cast<Eigen::Index>(rng.index(1, 5)), 6);
      const Eigen::VectorXd x = rng.matrix(6, 1, 2.0).col(0);
      const Eigen::VectorXd r = responsibilities(m, x);
      CHECK((r - oracle::brute_responsibilities(m, x)).cwiseAbs().maxCoeff() < 1e-9);
      CHECK(std::abs(r.sum() - 1.0) < 1e-9);
    }
  }

  TEST_CASE("responsibilities stay normalized far from every component") {
    oracle::Rng rng(7);
    const GmmModel m = random_model(rng, 5, 6);
    const Eigen::VectorXd far = Eigen::VectorXd::Constant(6, 1e4);
    const Eigen::VectorXd r = responsibilities(m, far);
    CHECK(r.allFinite());
    CHECK(std::abs(r.sum() - 1.0) < 1e-9);
  }

  TEST_CASE("a sample at one mean with the others far away belongs to it") {
    GmmModel m;
    m.means = Eigen::MatrixXd::Zero(3, 6);
    m.means.row(1).setConstant(25.0);
    m.means.row(2).setConstant(-25.0);
    m.variances = Eigen::MatrixXd::Ones(3, 6);
    m.weights = Eigen::VectorXd::Constant(3, 1.0 / 3.0);
    CHECK(responsibilities(m, Eigen::VectorXd::Zero(6))(0) > 0.999);
  }

  TEST_CASE("equidistant sample splits evenly between symmetric components") {
    GmmModel m;
    m.means = Eigen::MatrixXd::Zero(2, 6);
    m.means(0, 0) = -1.0;
    m.means(1, 0) = 1.0;
    m.variances = Eigen::MatrixXd::Constant(2, 6, 0.7);
    m.weights = Eigen::VectorXd::Constant(2, 0.5);
    const Eigen::VectorXd r = responsibilities(m, Eigen::VectorXd::Zero(6));
    CHECK(r(0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(r(1) == doctest::Approx(0.5).epsilon(1e-12));
  }

  TEST_CASE("batch responsibilities agree with single queries") {
    oracle::Rng rng(12);
    const GmmModel m = random_model(rng, 4, 6);
    const Eigen::MatrixXd x = rng.matrix(30, 6, 2.0);
    const Eigen::MatrixXd batch = batch_responsibilities(m, x);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      CHECK((batch.row(i).transpose() - responsibilities(m, x.row(i).transpose())).cwiseAbs().maxCoeff() < 1e-12);
    }
  }

  TEST_CASE("fitting is reproducible for a fixed seed") {
    oracle::Rng rng(13);
    const Eigen::MatrixXd x = rng.matrix(200, 6);
    GmmConfig config;
    config.seed = 99;
    const GmmFit a = fit_gmm(x, 5, config);
    const GmmFit b = fit_gmm(x, 5, config);
    CHECK(a.model.means == b.model.means);
    CHECK(a.model.variances == b.model.variances);
    CHECK(a.model.weights == b.model.weights);
    CHECK(a.log_likelihood == b.log_likelihood);
  }

  TEST_CASE("invalid input is rejected") {
    oracle::Rng rng(14);
    CHECK_THROWS_AS(fit_gmm(rng.matrix(3, 6), 4), InsufficientDataError);
    Eigen::MatrixXd bad = rng.matrix(10, 6);
    bad(3, 2) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(fit_gmm(bad, 2), InputError);
  }
}
