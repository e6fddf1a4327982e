#pragma once

// Weakly-supervised discriminative clustering of relations.
//
// The classifier W is eliminated in closed form, leaving a convex quadratic in the latent
// assignment matrix Z:
//
//   f(Z) = (1/N) tr(Z^T B Z),   B = I - X (X^T X + N lambda I)^{-1} X^T
//
// minimized over row-stochastic Z whose bag columns satisfy sum_{n in bag} Z[n][r] >= 1.
// Frank-Wolfe needs only a linear minimization oracle over that polytope and products with B,
// both of which avoid N x N matrices.

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "vrel/bag.hpp"
#include "vrel/candidates.hpp"
#include "vrel/core.hpp"
#include "vrel/ridge.hpp"

namespace vrel {

/// Latent assignment of candidate pairs to predicate classes. Rows in `fixed_rows` are pinned to
/// the last (no-relation) column.
struct AssignmentMatrix {
  Eigen::MatrixXd Z;
  std::vector<std::size_t> fixed_rows;  // sorted
};

struct BagSet {
  std::vector<Bag> bags;
  /// Indices of annotations for which no candidate pair matched (s, o).
  std::vector<std::size_t> skipped_annotations;
};

/// One bag per annotation: every candidate row of the annotation's image with subject category s
/// and object category o. Rows are positions in `pairs`.
BagSet build_bags(std::span<const TripletAnnotation> annotations, std::span<const PairCandidate> pairs);

double eliminate_w_objective(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Z, double lambda);
double eliminate_w_objective(const RidgeSystem& system, const Eigen::MatrixXd& Z);

/// Gradient (2/N) B Z of the eliminated objective.
Eigen::MatrixXd eliminate_w_gradient(const RidgeSystem& system, const Eigen::MatrixXd& Z);

struct LmoOptions {
  /// Overlapping-bag groups with at most this many rows are solved by enumeration.
  std::size_t exact_row_limit = 10;
  /// Upper bound on enumerated assignments per group before falling back to greedy repair.
  std::size_t enumeration_cap = 1u << 16;
};

struct LmoResult {
  Eigen::MatrixXd vertex;
  /// Overlapping-bag groups solved by greedy repair (possibly suboptimal).
  std::size_t heuristic_groups = 0;
  /// Overlapping-bag groups solved exactly by enumeration.
  std::size_t exact_groups = 0;
};

/// Precomputed structure of the feasible polytope: connected groups of bags that share rows, the
/// rows that no bag touches, and the pinned no-relation rows. Reused across Frank-Wolfe
/// iterations; evaluation is independent per group and runs through parallel_for.
class VertexOracle {
 public:
  VertexOracle(std::size_t rows, std::size_t classes, std::span<const Bag> bags,
               std::span<const std::size_t> fixed_rows, LmoOptions options = {});

  /// Integral feasible vertex S minimizing <gradient, S>. Throws InfeasibleError when a group
  /// admits no assignment.
  LmoResult operator()(const Eigen::MatrixXd& gradient) const;

  std::size_t rows() const { return rows_; }
  std::size_t classes() const { return classes_; }

 private:
  struct Group {
    std::vector<std::size_t> bags;  // indices into bags_
    std::vector<std::size_t> rows;  // sorted union of bag rows
  };

  void solve_single(const Group& g, const Eigen::MatrixXd& gradient, std::vector<std::size_t>& choice) const;
  bool solve_exact(const Group& g, const Eigen::MatrixXd& gradient, std::vector<std::size_t>& choice) const;
  void solve_greedy(const Group& g, const Eigen::MatrixXd& gradient, std::vector<std::size_t>& choice) const;

  std::size_t rows_;
  std::size_t classes_;
  std::vector<Bag> bags_;
  std::vector<std::size_t> fixed_rows_;
  std::vector<Group> groups_;
  LmoOptions options_;
};

LmoResult lmo(const Eigen::MatrixXd& gradient, std::span<const Bag> bags, std::span<const std::size_t> fixed_rows,
              const LmoOptions& options = {});

/// True when Z is row-stochastic, non-negative, satisfies every bag and has fixed rows one-hot at
/// the last column, all within `tol`.
bool is_feasible(const Eigen::MatrixXd& Z, std::span<const Bag> bags, std::span<const std::size_t> fixed_rows,
                 double tol = 1e-9);

struct FwConfig {
  double lambda = 1e-3;
  int max_iters = 500;
  double gap_tol = 1e-5;  // stop when gap <= gap_tol * f(Z)
  double negative_sampling_rate = 0.0;
  std::uint64_t seed = 0;
  /// Block-coordinate sweeps over images instead of full steps. Needs WeakProblem::row_block.
  bool block_coordinate = false;
  /// Recompute B Z from scratch every this many iterations to bound drift of the running product.
  int refresh_every = 50;
  LmoOptions lmo;

  void validate() const;
};

struct WeakProblem {
  const Eigen::MatrixXd& descriptors;
  std::span<const Bag> bags;
  std::span<const std::size_t> fixed_rows;
  /// Initialization priority per row (detector score product); empty means all equal.
  std::span<const double> row_priority = {};
  /// Image index per row, for block-coordinate mode.
  std::span<const std::size_t> row_block = {};
};

struct FwIterate {
  int iteration;
  const Eigen::MatrixXd& Z;
  double objective;
  double gap;
};

using FwObserver = std::function<void(const FwIterate&)>;

struct FwResult {
  RelationModel model;
  AssignmentMatrix assignment;
  std::vector<double> objective_trace;  // f(Z_t) for t = 0 .. iterations
  std::vector<double> gap_trace;        // Frank-Wolfe gap at Z_t
  int iterations = 0;
  bool converged = false;
  std::size_t heuristic_lmo_groups = 0;
  /// Bags left out because earlier bags already claimed every one of their rows.
  std::vector<std::size_t> dropped_bags;
};

/// Feasible starting point: bags are visited in order and each gets a witness row set one-hot to
/// its predicate (a row already pinned to the same predicate is shared, otherwise the unpinned
/// row of highest priority). Fixed rows are one-hot at no-relation, everything else uniform.
/// Bags that find no free row are reported in `dropped`.
AssignmentMatrix initial_assignment(std::size_t rows, std::size_t classes, std::span<const Bag> bags,
                                    std::span<const std::size_t> fixed_rows, std::span<const double> row_priority,
                                    std::vector<std::size_t>* dropped = nullptr);

/// Frank-Wolfe with exact line search on the eliminated objective. The observer, if set, sees every
/// iterate including the initial one.
FwResult fw_train(const WeakProblem& problem, const Vocabulary& vocabulary, const FwConfig& config,
                  const FwObserver& observer = {});

/// A seeded uniform sample (fraction `rate`, rounded to nearest) of the rows that belong to no bag.
/// Sorted ascending.
std::vector<std::size_t> sample_negatives(std::size_t row_count, std::span<const Bag> bags, double rate,
                                          std::uint64_t seed);

}  // namespace vrel
