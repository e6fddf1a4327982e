#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "vrel/errors.hpp"
#include "vrel/ridge.hpp"
#include "vrel/synth.hpp"
#include "vrel/weak.hpp"

using namespace vrel;

namespace {

double vertex_value(const Eigen::MatrixXd& g, const Eigen::MatrixXd& s) { return g.cwiseProduct(s).sum(); }

PairCandidate pair_of(const std::string& image, CategoryIndex s, CategoryIndex o, double offset) {
  return {image,
          {BoundingBox::from_center(offset, 0, 1, 1), s, 0.9, image, 0},
          {BoundingBox::from_center(offset + 5, 0, 1, 1), o, 0.9, image, 1},
          std::nullopt};
}

// Random bags over `rows` rows, at most `max_bags`, each with 1..3 distinct rows.
std::vector<Bag> random_bags(oracle::Rng& rng, std::size_t rows, std::size_t predicates, std::size_t max_bags,
                             bool disjoint) {
  std::vector<std::size_t> pool(rows);
  std::iota(pool.begin(), pool.end(), 0);
  std::shuffle(pool.begin(), pool.end(), rng.engine);
  std::vector<Bag> bags;
  const std::size_t count = rng.index(0, max_bags);
  std::size_t next = 0;
  for (std::size_t b = 0; b < count; ++b) {
    Bag bag{{}, rng.index(0, predicates - 1), "img"};
    const std::size_t size = rng.index(1, 3);
    for (std::size_t k = 0; k < size; ++k) {
      if (disjoint) {
        if (next == pool.size()) break;
        bag.rows.push_back(pool[next++]);
      } else {
        const std::size_t r = rng.index(0, rows - 1);
        if (std::find(bag.rows.begin(), bag.rows.end(), r) == bag.rows.end()) bag.rows.push_back(r);
      }
    }
    if (!bag.rows.empty()) bags.push_back(std::move(bag));
  }
  return bags;
}

}  // namespace

TEST_SUITE("weak") {
  TEST_CASE("bag construction groups pairs by image and categories") {
    // Four subjects of category 0 and three objects of category 1 in one image.
    std::vector<PairCandidate> pairs;
    for (int s = 0; s < 4; ++s) {
      for (int o = 0; o < 3; ++o) pairs.push_back(pair_of("a", 0, 1, 10.0 * s + o));
    }
    pairs.push_back(pair_of("a", 1, 0, 99));
    pairs.push_back(pair_of("b", 0, 1, 0));
    const std::vector<TripletAnnotation> anns{
        {"a", 0, 2, 1, {}, {}, {}, {}},  // 12 candidates
        {"b", 0, 0, 1, {}, {}, {}, {}},  // exactly one
        {"a", 0, 1, 1, {}, {}, {}, {}},  // same categories, other predicate
        {"a", 2, 0, 1, {}, {}, {}, {}},  // no match
    };
    const BagSet set = build_bags(anns, pairs);
    REQUIRE(set.bags.size() == 3);
    CHECK(set.bags[0].rows.size() == 12);
    CHECK(set.bags[0].predicate == 2);
    CHECK(set.bags[1].rows == std::vector<std::size_t>{13});
    CHECK(set.bags[2].rows == set.bags[0].rows);
    CHECK(set.bags[2].predicate == 1);
    CHECK(set.skipped_annotations == std::vector<std::size_t>{3});
  }

  TEST_CASE("eliminated objective equals the ridge objective at the optimum") {
    oracle::Rng rng(1);
    for (int trial = 0; trial < 20; ++trial) {
      const Eigen::MatrixXd x = rng.matrix(8, 3);
      const Eigen::MatrixXd z = rng.matrix(8, 2).cwiseAbs();
      const double lambda = rng.uniform(0.01, 1.0);
      const Eigen::MatrixXd w = solve_ridge(x, z, lambda);
      CHECK(eliminate_w_objective(x, z, lambda) == doctest::Approx(ridge_objective(x, z, w, lambda)).epsilon(1e-9));
      CHECK(eliminate_w_objective(x, z, lambda) >= 0.0);
    }
  }

  TEST_CASE("objective vanishes for targets in the column span as lambda shrinks") {
    oracle::Rng rng(2);
    const Eigen::MatrixXd x = rng.matrix(12, 4);
    const Eigen::MatrixXd z = x * rng.matrix(4, 3);
    CHECK(eliminate_w_objective(x, z, 1e-12) < 1e-9);
    CHECK(eliminate_w_objective(x, z, 1e-2) > eliminate_w_objective(x, z, 1e-6));
  }

  TEST_CASE("implicit gradient matches finite differences") {
    oracle::Rng rng(3);
    for (int trial = 0; trial < 10; ++trial) {
      const Eigen::MatrixXd x = rng.matrix(9, 3);
      const double lambda = rng.uniform(0.05, 0.5);
      const RidgeSystem sys(x, lambda);
      const Eigen::MatrixXd z = rng.matrix(9, 3);
      const auto f = [&](const Eigen::MatrixXd& zz) { return eliminate_w_objective(sys, zz); };
      CHECK((eliminate_w_gradient(sys, z) - oracle::finite_difference(f, z)).norm() < 1e-5);
    }
  }

  TEST_CASE("unconstrained LMO takes row-wise argmins") {
    oracle::Rng rng(4);
    const Eigen::MatrixXd g = rng.matrix(7, 4);
    const LmoResult r = lmo(g, {}, {});
    for (Eigen::Index i = 0; i < 7; ++i) {
      Eigen::Index at = 0;
      g.row(i).minCoeff(&at);
      CHECK(r.vertex(i, at) == 1.0);
      CHECK(r.vertex.row(i).sum() == 1.0);
    }
  }

  TEST_CASE("inactive bag constraint leaves the unconstrained answer") {
    Eigen::MatrixXd g(3, 3);
    g << 0.5, -1.0, 0.2,  //
        0.1, 0.3, 0.0,    //
        -0.2, 0.4, 0.9;
    const std::vector<Bag> bags{{{0, 1, 2}, 1, "i"}};
    CHECK(lmo(g, bags, {}).vertex == lmo(g, {}, {}).vertex);
  }

  TEST_CASE("LMO matches enumeration on disjoint bags and fixed rows") {
    oracle::Rng rng(5);
    for (int trial = 0; trial < 200; ++trial) {
      const std::size_t rows = rng.index(1, 6);
      const std::size_t predicates = rng.index(1, 3);
      const std::size_t classes = predicates + 1;
      const std::vector<Bag> bags = random_bags(rng, rows, predicates, 2, true);
      std::set<std::size_t> used;
      for (const Bag& b : bags) used.insert(b.rows.begin(), b.rows.end());
      std::vector<std::size_t> fixed;
      for (std::size_t r = 0; r < rows; ++r) {
        if (!used.count(r) && rng.coin(0.3)) fixed.push_back(r);
      }
      const Eigen::MatrixXd g = rng.matrix(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(classes));
      const LmoResult got = lmo(g, bags, fixed);
      CHECK(is_feasible(got.vertex, bags, fixed));
      CHECK(vertex_value(g, got.vertex) == doctest::Approx(oracle::brute_force_vertex(g, bags, fixed).value).epsilon(1e-12));
      CHECK(got.heuristic_groups == 0);
    }
  }

  TEST_CASE("exact mode handles overlapping bags") {
    oracle::Rng rng(6);
    for (int trial = 0; trial < 200; ++trial) {
      const std::size_t rows = rng.index(2, 6);
      const std::size_t classes = rng.index(2, 3);
      const std::vector<Bag> bags = random_bags(rng, rows, classes, 2, false);
      const Eigen::MatrixXd g = rng.matrix(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(classes));
      const auto want = oracle::brute_force_vertex(g, bags, {});
      if (!std::isfinite(want.value)) {
        CHECK_THROWS_AS(lmo(g, bags, {}), InfeasibleError);
        continue;
      }
      const LmoResult got = lmo(g, bags, {});
      CHECK(is_feasible(got.vertex, bags, {}));
      CHECK(vertex_value(g, got.vertex) == doctest::Approx(want.value).epsilon(1e-12));
    }
  }

  TEST_CASE("greedy repair stays feasible and is counted") {
    oracle::Rng rng(7);
    LmoOptions greedy;
    greedy.exact_row_limit = 0;
    std::size_t shortfalls = 0;
    for (int trial = 0; trial < 200; ++trial) {
      const std::size_t rows = rng.index(2, 6);
      const std::size_t classes = rng.index(2, 3);
      const std::vector<Bag> bags = random_bags(rng, rows, classes, 2, false);
      const Eigen::MatrixXd g = rng.matrix(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(classes));
      const double want = oracle::brute_force_vertex(g, bags, {}).value;
      if (!std::isfinite(want)) continue;
      const LmoResult got = lmo(g, bags, {}, greedy);
      CHECK(is_feasible(got.vertex, bags, {}));
      CHECK(vertex_value(g, got.vertex) >= want - 1e-12);
      if (vertex_value(g, got.vertex) > want + 1e-12) {
        ++shortfalls;
        CHECK(got.heuristic_groups > 0);
      }
    }
    MESSAGE("greedy shortfalls: " << shortfalls << " / 200");
  }

  TEST_CASE("LMO rejects malformed inputs") {
    const Eigen::MatrixXd g = Eigen::MatrixXd::Zero(3, 2);
    CHECK_THROWS_AS(lmo(g, std::vector<Bag>{{{}, 0, "i"}}, {}), InfeasibleError);
    CHECK_THROWS_AS(lmo(g, std::vector<Bag>{{{5}, 0, "i"}}, {}), InputError);
    CHECK_THROWS_AS(lmo(g, std::vector<Bag>{{{0}, 0, "i"}}, std::vector<std::size_t>{0}), InputError);
    Eigen::MatrixXd bad = g;
    bad(1, 1) = NAN;
    CHECK_THROWS_AS(lmo(bad, {}, {}), InputError);
  }

  TEST_CASE("initial assignment is feasible and honours priorities") {
    const std::vector<Bag> bags{{{0, 1, 2}, 0, "i"}, {{2, 3}, 1, "i"}, {{2}, 0, "i"}};
    const std::vector<double> priority{0.1, 0.2, 0.9, 0.5, 0.0, 0.0};
    std::vector<std::size_t> dropped;
    const AssignmentMatrix a = initial_assignment(6, 3, bags, std::vector<std::size_t>{5}, priority, &dropped);
    CHECK(dropped.empty());
    CHECK(a.Z(2, 0) == 1.0);  // highest priority in the first bag
    CHECK(a.Z(3, 1) == 1.0);  // row 2 is taken, so the second bag falls back to row 3
    CHECK(a.Z(5, 2) == 1.0);
    CHECK(a.Z(4, 0) == doctest::Approx(1.0 / 3.0));
    CHECK(is_feasible(a.Z, bags, std::vector<std::size_t>{5}));

    // A bag whose only row is claimed by another predicate is dropped.
    const std::vector<Bag> clash{{{0}, 0, "i"}, {{0}, 1, "i"}};
    const AssignmentMatrix b = initial_assignment(2, 2, clash, {}, {}, &dropped);
    CHECK(dropped == std::vector<std::size_t>{1});
    CHECK(b.Z(0, 0) == 1.0);
  }

  TEST_CASE("singleton bags reproduce full supervision") {
    oracle::Rng rng(8);
    const Eigen::MatrixXd x = rng.matrix(15, 4);
    const Vocabulary vocab({"a"}, {"r0", "r1", "r2"}, false);
    std::vector<Bag> bags;
    std::vector<LabelledRow> ex;
    for (std::size_t i = 0; i < 15; ++i) {
      bags.push_back({{i}, (i * 7) % 3, "i" + std::to_string(i)});
      ex.push_back({i, (i * 7) % 3});
    }
    FwConfig config;
    config.lambda = 0.05;
    const FwResult r = fw_train({x, bags, {}}, vocab, config);
    const RelationModel full = train_ridge_labelled(x, ex, 0.05, vocab);
    CHECK((r.model.weights - full.weights).norm() <= 1e-9 * full.weights.norm());
  }

  TEST_CASE("Frank-Wolfe descends and stays feasible") {
    PlantedConfig pc;
    pc.images = 40;
    pc.seed = 3;
    const PlantedBenchmark b = make_planted_benchmark(pc);
    const Vocabulary vocab({"thing"}, b.vocabulary.predicate_names(), true);
    const auto negatives = sample_negatives(static_cast<std::size_t>(b.descriptors.rows()), b.bags, 0.0, 1);
    for (bool block : {false, true}) {
      FwConfig config;
      config.max_iters = 60;
      config.block_coordinate = block;
      std::vector<double> objectives;
      bool feasible = true;
      double min_gap = 0.0;
      const auto observe = [&](const FwIterate& it) {
        objectives.push_back(it.objective);
        feasible = feasible && is_feasible(it.Z, b.bags, {});
        min_gap = std::min(min_gap, it.gap);
      };
      const FwResult r = fw_train({b.descriptors, b.bags, negatives, b.row_priority, b.row_block}, vocab, config, observe);
      CHECK(feasible);
      CHECK(min_gap >= -1e-12);
      CHECK(objectives == r.objective_trace);
      for (std::size_t t = 1; t < objectives.size(); ++t) CHECK(objectives[t] <= objectives[t - 1] + 1e-9);
      CHECK(objectives.back() < objectives.front());
      CHECK(r.model.weights.allFinite());
      CHECK(r.model.class_count() == 6);
    }
  }

  TEST_CASE("negative sampling") {
    const std::vector<Bag> bags{{{0, 1}, 0, "i"}, {{4}, 1, "i"}};
    CHECK(sample_negatives(8, bags, 0.0, 1).empty());
    CHECK(sample_negatives(8, bags, 1.0, 1) == std::vector<std::size_t>{2, 3, 5, 6, 7});
    CHECK(sample_negatives(8, bags, 0.4, 9) == sample_negatives(8, bags, 0.4, 9));
    CHECK(sample_negatives(8, bags, 0.4, 9).size() == 2);
    CHECK_THROWS_AS(sample_negatives(8, bags, 1.5, 1), InputError);
  }

  TEST_CASE("configuration validation") {
    FwConfig c;
    c.lambda = 0.0;
    CHECK_THROWS_AS(c.validate(), InputError);
    c.lambda = 1e-3;
    c.max_iters = 0;
    CHECK_THROWS_AS(c.validate(), InputError);
  }
}
