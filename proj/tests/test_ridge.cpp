#include <cmath>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "vrel/errors.hpp"
#include "vrel/ridge.hpp"

using namespace vrel;

namespace {

Eigen::MatrixXd one_hot(oracle::Rng& rng, Eigen::Index n, Eigen::Index classes) {
  Eigen::MatrixXd z = Eigen::MatrixXd::Zero(n, classes);
  for (Eigen::Index i = 0; i < n; ++i) z(i, static_cast<Eigen::Index>(rng.index(0, static_cast<std::size_t>(classes - 1)))) = 1.0;
  return z;
}

double relative(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) { return (a - b).norm() / std::max(1e-300, b.norm()); }

}  // namespace

TEST_SUITE("ridge") {
  TEST_CASE("one-dimensional hand case") {
    Eigen::MatrixXd x(2, 1);
    x << 1, 2;
    Eigen::MatrixXd z(2, 1);
    z << 1, 0;
    const Eigen::MatrixXd w = solve_ridge(x, z, 0.5);
    CHECK(w(0, 0) == doctest::Approx(1.0 / 6.0).epsilon(1e-14));
  }

  TEST_CASE("closed form matches gradient descent on random instances") {
    oracle::Rng rng(1);
    for (int trial = 0; trial < 30; ++trial) {
      const auto n = static_cast<Eigen::Index>(rng.index(1, 50));
      const auto d = static_cast<Eigen::Index>(rng.index(1, 10));
      const auto r = static_cast<Eigen::Index>(rng.index(1, 4));
      const double lambda = rng.uniform(0.05, 1.0);
      const Eigen::MatrixXd x = rng.matrix(n, d);
      const Eigen::MatrixXd z = one_hot(rng, n, r);
      const Eigen::MatrixXd w = solve_ridge(x, z, lambda);
      CHECK(relative(w, oracle::ridge_by_gradient_descent(x, z, lambda)) < 1e-6);
      const auto f = [&](const Eigen::MatrixXd& ww) { return ridge_objective(x, z, ww, lambda); };
      CHECK(oracle::finite_difference(f, w).norm() < 1e-5);
    }
  }

  TEST_CASE("minimizer beats random perturbations") {
    oracle::Rng rng(2);
    const Eigen::MatrixXd x = rng.matrix(30, 5);
    const Eigen::MatrixXd z = one_hot(rng, 30, 3);
    const Eigen::MatrixXd w = solve_ridge(x, z, 0.1);
    const double best = ridge_objective(x, z, w, 0.1);
    for (int i = 0; i < 100; ++i) CHECK(ridge_objective(x, z, w + rng.matrix(5, 3, 1e-3), 0.1) >= best);
  }

  TEST_CASE("duplicating every row leaves the solution unchanged") {
    oracle::Rng rng(3);
    const Eigen::MatrixXd x = rng.matrix(20, 4);
    const Eigen::MatrixXd z = one_hot(rng, 20, 3);
    Eigen::MatrixXd x2(40, 4);
    Eigen::MatrixXd z2(40, 3);
    x2 << x, x;
    z2 << z, z;
    CHECK(relative(solve_ridge(x2, z2, 0.2), solve_ridge(x, z, 0.2)) < 1e-12);
  }

  TEST_CASE("huge regularization drives weights to zero") {
    oracle::Rng rng(4);
    const Eigen::MatrixXd x = rng.matrix(20, 4);
    CHECK(solve_ridge(x, one_hot(rng, 20, 3), 1e12).norm() < 1e-6);
  }

  TEST_CASE("ridge system solve and residual operator") {
    oracle::Rng rng(5);
    const Eigen::MatrixXd x = rng.matrix(25, 6);
    const Eigen::MatrixXd z = rng.matrix(25, 3);
    const RidgeSystem sys(x, 0.3);
    CHECK(relative(sys.solve(z), solve_ridge(x, z, 0.3)) < 1e-12);
    // Explicit B = I - X (X^T X + N lambda I)^{-1} X^T.
    const Eigen::MatrixXd a = x.transpose() * x + 25.0 * 0.3 * Eigen::MatrixXd::Identity(6, 6);
    const Eigen::MatrixXd b = Eigen::MatrixXd::Identity(25, 25) - x * a.inverse() * x.transpose();
    CHECK((sys.residual_operator(z) - b * z).cwiseAbs().maxCoeff() < 1e-10);
  }

  TEST_CASE("labelled rows expand to one-hot targets") {
    oracle::Rng rng(6);
    const Eigen::MatrixXd x = rng.matrix(6, 3);
    const Vocabulary vocab({"a"}, {"r0", "r1"}, true);
    // Row 1 carries two labels and appears twice.
    const std::vector<LabelledRow> ex{{0, 0}, {1, 0}, {1, 1}, {2, 2}, {4, 1}};
    const RelationModel m = train_ridge_labelled(x, ex, 0.1, vocab);
    Eigen::MatrixXd xe(5, 3);
    Eigen::MatrixXd ze = Eigen::MatrixXd::Zero(5, 3);
    for (std::size_t i = 0; i < ex.size(); ++i) {
      xe.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(ex[i].row));
      ze(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(ex[i].label)) = 1.0;
    }
    CHECK(relative(m.weights, solve_ridge(xe, ze, 0.1)) < 1e-12);
    CHECK(m.class_count() == 3);
    CHECK(m.descriptor_dim() == 3);
  }

  TEST_CASE("noisy baseline on singleton bags equals full supervision") {
    oracle::Rng rng(7);
    const Eigen::MatrixXd x = rng.matrix(10, 4);
    const Vocabulary vocab({"a"}, {"r0", "r1", "r2"}, false);
    std::vector<Bag> bags;
    std::vector<LabelledRow> ex;
    for (std::size_t i = 0; i < 10; ++i) {
      bags.push_back({{i}, i % 3, "img" + std::to_string(i)});
      ex.push_back({i, i % 3});
    }
    const NoisyResult noisy = train_noisy(x, bags, {}, vocab, {0.05, 3});
    const RelationModel full = train_ridge_labelled(x, ex, 0.05, vocab);
    CHECK(relative(noisy.model.weights, full.weights) < 1e-12);
  }

  TEST_CASE("noisy baseline is seeded and picks one bag member") {
    oracle::Rng rng(8);
    const Eigen::MatrixXd x = rng.matrix(30, 4);
    const Vocabulary vocab({"a"}, {"r0", "r1"}, true);
    std::vector<Bag> bags;
    for (std::size_t b = 0; b < 6; ++b) bags.push_back({{4 * b, 4 * b + 1, 4 * b + 2, 4 * b + 3}, b % 2, "i"});
    const std::vector<std::size_t> negatives{26, 28};
    const NoisyResult a = train_noisy(x, bags, negatives, vocab, {1e-3, 11});
    const NoisyResult b = train_noisy(x, bags, negatives, vocab, {1e-3, 11});
    CHECK(a.model.weights == b.model.weights);
    REQUIRE(a.examples.size() == 8);
    for (std::size_t i = 0; i < 6; ++i) {
      CHECK(a.examples[i].row / 4 == i);
      CHECK(a.examples[i].label == i % 2);
    }
    CHECK(a.examples[6].label == 2);
    CHECK(a.examples[7].label == 2);
  }

  TEST_CASE("invalid ridge input") {
    oracle::Rng rng(9);
    const Eigen::MatrixXd x = rng.matrix(5, 2);
    CHECK_THROWS_AS(solve_ridge(x, rng.matrix(5, 2), 0.0), InputError);
    CHECK_THROWS_AS(solve_ridge(x, rng.matrix(4, 2), 0.1), InputError);
    Eigen::MatrixXd bad = x;
    bad(0, 0) = NAN;
    CHECK_THROWS_AS(solve_ridge(bad, rng.matrix(5, 2), 0.1), InputError);
    CHECK_THROWS_AS(solve_ridge(Eigen::MatrixXd(0, 2), Eigen::MatrixXd(0, 2), 0.1), InputError);
  }
}
