#include "vrel/weak.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <unordered_map>

#include "vrel/errors.hpp"
#include "vrel/parallel.hpp"

namespace vrel {

namespace {

std::size_t row_argmin(const Eigen::MatrixXd& g, std::size_t row) {
  Eigen::Index at = 0;
  g.row(static_cast<Eigen::Index>(row)).minCoeff(&at);  // first minimum on ties
  return static_cast<std::size_t>(at);
}

double entry(const Eigen::MatrixXd& g, std::size_t row, std::size_t col) {
  return g(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(col));
}

struct DisjointSets {
  explicit DisjointSets(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
  std::vector<std::size_t> parent;
};

}  // namespace

BagSet build_bags(std::span<const TripletAnnotation> annotations, std::span<const PairCandidate> pairs) {
  std::unordered_map<std::string, std::vector<std::size_t>> by_image;
  for (std::size_t i = 0; i < pairs.size(); ++i) by_image[pairs[i].image_id].push_back(i);

  BagSet out;
  for (std::size_t a = 0; a < annotations.size(); ++a) {
    const TripletAnnotation& ann = annotations[a];
    Bag bag{{}, ann.predicate, ann.image_id};
    if (auto it = by_image.find(ann.image_id); it != by_image.end()) {
      for (std::size_t row : it->second) {
        const PairCandidate& p = pairs[row];
        if (p.subject.category == ann.subject_category && p.object.category == ann.object_category) {
          bag.rows.push_back(row);
        }
      }
    }
    if (bag.rows.empty()) {
      out.skipped_annotations.push_back(a);
    } else {
      out.bags.push_back(std::move(bag));
    }
  }
  return out;
}

double eliminate_w_objective(const RidgeSystem& system, const Eigen::MatrixXd& Z) {
  return Z.cwiseProduct(system.residual_operator(Z)).sum() / static_cast<double>(system.rows());
}

double eliminate_w_objective(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Z, double lambda) {
  if (X.rows() != Z.rows()) throw InputError("descriptor and assignment row counts differ");
  return eliminate_w_objective(RidgeSystem(X, lambda), Z);
}

Eigen::MatrixXd eliminate_w_gradient(const RidgeSystem& system, const Eigen::MatrixXd& Z) {
  return (2.0 / static_cast<double>(system.rows())) * system.residual_operator(Z);
}

// ---------------------------------------------------------------------------------------------
// Linear minimization oracle

VertexOracle::VertexOracle(std::size_t rows, std::size_t classes, std::span<const Bag> bags,
                           std::span<const std::size_t> fixed_rows, LmoOptions options)
    : rows_(rows),
      classes_(classes),
      bags_(bags.begin(), bags.end()),
      fixed_rows_(fixed_rows.begin(), fixed_rows.end()),
      options_(options) {
  if (classes_ == 0) throw InputError("assignment needs at least one class");
  std::sort(fixed_rows_.begin(), fixed_rows_.end());
  fixed_rows_.erase(std::unique(fixed_rows_.begin(), fixed_rows_.end()), fixed_rows_.end());
  std::vector<char> fixed(rows_, 0);
  for (std::size_t r : fixed_rows_) {
    if (r >= rows_) throw InputError("fixed row out of range");
    fixed[r] = 1;
  }

  const std::size_t no_rel = classes_ - 1;
  std::vector<std::optional<std::size_t>> owner(rows_);
  DisjointSets sets(bags_.size());
  for (std::size_t b = 0; b < bags_.size(); ++b) {
    const Bag& bag = bags_[b];
    if (bag.rows.empty()) throw InfeasibleError("bag for image '" + bag.image_id + "' is empty");
    if (bag.predicate >= classes_ || (!fixed_rows_.empty() && bag.predicate == no_rel)) {
      throw InputError("bag predicate out of range");
    }
    for (std::size_t r : bag.rows) {
      if (r >= rows_) throw InputError("bag row out of range");
      if (fixed[r]) throw InputError("row " + std::to_string(r) + " is both fixed and inside a bag");
      if (owner[r]) sets.unite(*owner[r], b);
      else owner[r] = b;
    }
  }

  std::unordered_map<std::size_t, std::size_t> group_of_root;
  for (std::size_t b = 0; b < bags_.size(); ++b) {
    const std::size_t root = sets.find(b);
    auto [it, inserted] = group_of_root.emplace(root, groups_.size());
    if (inserted) groups_.emplace_back();
    Group& g = groups_[it->second];
    g.bags.push_back(b);
    g.rows.insert(g.rows.end(), bags_[b].rows.begin(), bags_[b].rows.end());
  }
  for (Group& g : groups_) {
    std::sort(g.rows.begin(), g.rows.end());
    g.rows.erase(std::unique(g.rows.begin(), g.rows.end()), g.rows.end());
  }
}

void VertexOracle::solve_single(const Group& g, const Eigen::MatrixXd& gradient, std::vector<std::size_t>& choice) const {
  const Bag& bag = bags_[g.bags.front()];
  for (std::size_t i = 0; i < g.rows.size(); ++i) choice[i] = row_argmin(gradient, g.rows[i]);
  if (std::find(choice.begin(), choice.end(), bag.predicate) != choice.end()) return;
  std::size_t best = 0;
  double best_regret = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < g.rows.size(); ++i) {
    const double regret = entry(gradient, g.rows[i], bag.predicate) - entry(gradient, g.rows[i], choice[i]);
    if (regret < best_regret) {
      best_regret = regret;
      best = i;
    }
  }
  choice[best] = bag.predicate;
}

bool VertexOracle::solve_exact(const Group& g, const Eigen::MatrixXd& gradient, std::vector<std::size_t>& choice) const {
  const std::size_t n = g.rows.size();
  // Per row: its argmin, then the predicates of bags containing it. Any other column is dominated.
  std::vector<std::vector<std::size_t>> options(n);
  std::size_t total = 1;
  for (std::size_t i = 0; i < n; ++i) {
    options[i].push_back(row_argmin(gradient, g.rows[i]));
    for (std::size_t b : g.bags) {
      const Bag& bag = bags_[b];
      if (std::find(bag.rows.begin(), bag.rows.end(), g.rows[i]) != bag.rows.end()) {
        if (std::find(options[i].begin(), options[i].end(), bag.predicate) == options[i].end()) {
          options[i].push_back(bag.predicate);
        }
      }
    }
    total *= options[i].size();
    if (total > options_.enumeration_cap) return false;
  }

  auto local = [&](std::size_t row) {
    return static_cast<std::size_t>(std::lower_bound(g.rows.begin(), g.rows.end(), row) - g.rows.begin());
  };
  std::vector<std::size_t> digit(n, 0);
  std::vector<std::size_t> current(n);
  double best_cost = std::numeric_limits<double>::infinity();
  bool found = false;
  for (std::size_t step = 0; step < total; ++step) {
    for (std::size_t i = 0; i < n; ++i) current[i] = options[i][digit[i]];
    bool ok = true;
    for (std::size_t b : g.bags) {
      const Bag& bag = bags_[b];
      ok = std::any_of(bag.rows.begin(), bag.rows.end(),
                       [&](std::size_t r) { return current[local(r)] == bag.predicate; });
      if (!ok) break;
    }
    if (ok) {
      double cost = 0.0;
      for (std::size_t i = 0; i < n; ++i) cost += entry(gradient, g.rows[i], current[i]);
      if (cost < best_cost) {
        best_cost = cost;
        choice = current;
        found = true;
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (++digit[i] < options[i].size()) break;
      digit[i] = 0;
    }
  }
  if (!found) throw InfeasibleError("bags sharing rows in image '" + bags_[g.bags.front()].image_id + "' cannot all hold");
  return true;
}

void VertexOracle::solve_greedy(const Group& g, const Eigen::MatrixXd& gradient, std::vector<std::size_t>& choice) const {
  const std::size_t n = g.rows.size();
  auto local = [&](std::size_t row) {
    return static_cast<std::size_t>(std::lower_bound(g.rows.begin(), g.rows.end(), row) - g.rows.begin());
  };
  auto witnesses = [&](const Bag& bag) {
    std::size_t count = 0;
    for (std::size_t r : bag.rows) count += choice[local(r)] == bag.predicate;
    return count;
  };
  // bags containing each local row
  std::vector<std::vector<std::size_t>> row_bags(n);
  for (std::size_t b : g.bags) {
    for (std::size_t r : bags_[b].rows) row_bags[local(r)].push_back(b);
  }

  for (std::size_t i = 0; i < n; ++i) choice[i] = row_argmin(gradient, g.rows[i]);
  // Each flip satisfies one bag without breaking another, so this terminates.
  for (;;) {
    const Bag* violated = nullptr;
    for (std::size_t b : g.bags) {
      if (witnesses(bags_[b]) == 0) {
        violated = &bags_[b];
        break;
      }
    }
    if (!violated) return;

    std::optional<std::size_t> best;
    double best_regret = std::numeric_limits<double>::infinity();
    for (std::size_t r : violated->rows) {
      const std::size_t i = local(r);
      const bool breaks = std::any_of(row_bags[i].begin(), row_bags[i].end(), [&](std::size_t b) {
        return bags_[b].predicate == choice[i] && witnesses(bags_[b]) == 1;
      });
      if (breaks) continue;
      const double regret = entry(gradient, r, violated->predicate) - entry(gradient, r, choice[i]);
      if (regret < best_regret) {
        best_regret = regret;
        best = i;
      }
    }
    if (!best) break;
    choice[*best] = violated->predicate;
  }

  // Repair got stuck: pin one witness per bag, relabelling a pinned row (and re-covering the bags
  // that lose it) when a bag has no free row left. Augmenting-path style search.
  std::vector<std::optional<std::size_t>> pinned(n);
  auto covered = [&](const Bag& bag) {
    return std::any_of(bag.rows.begin(), bag.rows.end(),
                       [&](std::size_t r) { return pinned[local(r)] == bag.predicate; });
  };
  std::vector<char> visited(n, 0);
  std::function<bool(std::size_t)> cover = [&](std::size_t b) -> bool {
    const Bag& bag = bags_[b];
    if (covered(bag)) return true;
    std::vector<std::size_t> order(bag.rows.begin(), bag.rows.end());
    auto cost = [&](std::size_t r) {
      return entry(gradient, r, bag.predicate) - entry(gradient, r, row_argmin(gradient, r));
    };
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t c) {
      const bool fa = !pinned[local(a)];
      const bool fc = !pinned[local(c)];
      if (fa != fc) return fa;
      return cost(a) < cost(c);
    });
    for (std::size_t r : order) {
      const std::size_t i = local(r);
      if (!pinned[i]) {
        pinned[i] = bag.predicate;
        return true;
      }
      if (visited[i]) continue;
      visited[i] = 1;
      const auto saved = pinned;
      pinned[i] = bag.predicate;
      bool ok = true;
      for (std::size_t other : row_bags[i]) {
        if (!cover(other)) {
          ok = false;
          break;
        }
      }
      if (ok) return true;
      pinned = saved;
    }
    return false;
  };
  for (std::size_t b : g.bags) {
    std::fill(visited.begin(), visited.end(), 0);
    if (!cover(b)) throw InfeasibleError("bags sharing rows in image '" + bags_[b].image_id + "' cannot all hold");
  }
  for (std::size_t i = 0; i < n; ++i) choice[i] = pinned[i] ? *pinned[i] : row_argmin(gradient, g.rows[i]);
}

LmoResult VertexOracle::operator()(const Eigen::MatrixXd& gradient) const {
  if (static_cast<std::size_t>(gradient.rows()) != rows_ || static_cast<std::size_t>(gradient.cols()) != classes_) {
    throw InputError("gradient shape does not match the assignment polytope");
  }
  if (!gradient.allFinite()) throw InputError("gradient contains non-finite values");

  LmoResult result;
  result.vertex = Eigen::MatrixXd::Zero(gradient.rows(), gradient.cols());
  for (std::size_t r = 0; r < rows_; ++r) {
    result.vertex(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(row_argmin(gradient, r))) = 1.0;
  }
  for (std::size_t r : fixed_rows_) {
    result.vertex.row(static_cast<Eigen::Index>(r)).setZero();
    result.vertex(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(classes_ - 1)) = 1.0;
  }

  std::vector<std::vector<std::size_t>> choices(groups_.size());
  std::vector<char> exact(groups_.size(), 0);
  std::vector<char> heuristic(groups_.size(), 0);
  parallel_for(groups_.size(), [&](std::size_t gi) {
    const Group& g = groups_[gi];
    choices[gi].assign(g.rows.size(), 0);
    if (g.bags.size() == 1) {
      solve_single(g, gradient, choices[gi]);
    } else if (g.rows.size() <= options_.exact_row_limit && solve_exact(g, gradient, choices[gi])) {
      exact[gi] = 1;
    } else {
      solve_greedy(g, gradient, choices[gi]);
      heuristic[gi] = 1;
    }
  });

  for (std::size_t gi = 0; gi < groups_.size(); ++gi) {
    const Group& g = groups_[gi];
    for (std::size_t i = 0; i < g.rows.size(); ++i) {
      auto row = result.vertex.row(static_cast<Eigen::Index>(g.rows[i]));
      row.setZero();
      row(static_cast<Eigen::Index>(choices[gi][i])) = 1.0;
    }
    result.exact_groups += exact[gi];
    result.heuristic_groups += heuristic[gi];
  }
  return result;
}

LmoResult lmo(const Eigen::MatrixXd& gradient, std::span<const Bag> bags, std::span<const std::size_t> fixed_rows,
              const LmoOptions& options) {
  return VertexOracle(static_cast<std::size_t>(gradient.rows()), static_cast<std::size_t>(gradient.cols()), bags,
                      fixed_rows, options)(gradient);
}

bool is_feasible(const Eigen::MatrixXd& Z, std::span<const Bag> bags, std::span<const std::size_t> fixed_rows,
                 double tol) {
  if (Z.minCoeff() < -tol) return false;
  if (((Z.rowwise().sum().array() - 1.0).abs() > tol).any()) return false;
  for (const Bag& bag : bags) {
    double mass = 0.0;
    for (std::size_t r : bag.rows) mass += Z(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(bag.predicate));
    if (mass < 1.0 - tol) return false;
  }
  const Eigen::Index last = Z.cols() - 1;
  for (std::size_t r : fixed_rows) {
    if (std::abs(Z(static_cast<Eigen::Index>(r), last) - 1.0) > tol) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------------------------
// Frank-Wolfe

void FwConfig::validate() const {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw InputError("lambda must be positive");
  if (max_iters < 1) throw InputError("max_iters must be at least 1");
  if (!(gap_tol >= 0.0)) throw InputError("gap_tol must be non-negative");
  if (!(negative_sampling_rate >= 0.0 && negative_sampling_rate <= 1.0)) {
    throw InputError("negative_sampling_rate must be in [0, 1]");
  }
  if (refresh_every < 1) throw InputError("refresh_every must be at least 1");
}

AssignmentMatrix initial_assignment(std::size_t rows, std::size_t classes, std::span<const Bag> bags,
                                    std::span<const std::size_t> fixed_rows, std::span<const double> row_priority,
                                    std::vector<std::size_t>* dropped) {
  if (!row_priority.empty() && row_priority.size() != rows) throw InputError("row priority has wrong length");
  const auto n = static_cast<Eigen::Index>(rows);
  const auto c = static_cast<Eigen::Index>(classes);
  AssignmentMatrix out;
  out.Z = Eigen::MatrixXd::Constant(n, c, 1.0 / static_cast<double>(classes));
  out.fixed_rows.assign(fixed_rows.begin(), fixed_rows.end());
  std::sort(out.fixed_rows.begin(), out.fixed_rows.end());
  out.fixed_rows.erase(std::unique(out.fixed_rows.begin(), out.fixed_rows.end()), out.fixed_rows.end());

  std::vector<std::optional<std::size_t>> pinned(rows);
  for (std::size_t r : out.fixed_rows) pinned.at(r) = classes - 1;
  auto priority = [&](std::size_t r) { return row_priority.empty() ? 0.0 : row_priority[r]; };

  for (std::size_t b = 0; b < bags.size(); ++b) {
    const Bag& bag = bags[b];
    const bool shared = std::any_of(bag.rows.begin(), bag.rows.end(),
                                    [&](std::size_t r) { return pinned.at(r) == bag.predicate; });
    if (shared) continue;
    std::optional<std::size_t> best;
    for (std::size_t r : bag.rows) {
      if (pinned.at(r)) continue;
      if (!best || priority(r) > priority(*best)) best = r;
    }
    if (!best) {
      if (dropped) dropped->push_back(b);
      continue;
    }
    pinned[*best] = bag.predicate;
  }
  for (std::size_t r = 0; r < rows; ++r) {
    if (!pinned[r]) continue;
    out.Z.row(static_cast<Eigen::Index>(r)).setZero();
    out.Z(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(*pinned[r])) = 1.0;
  }
  return out;
}

namespace {

struct StepState {
  Eigen::MatrixXd Z;
  Eigen::MatrixXd BZ;
  double objective = 0.0;
};

// Exact minimizer over [0, 1] of f(Z + g D) = f + g <G, D> + g^2 (1/N) <D, BD>.
double line_search(double slope, double curvature) {
  if (slope >= 0.0) return 0.0;
  if (!(curvature > 0.0)) return 1.0;
  return std::clamp(-slope / curvature, 0.0, 1.0);
}

}  // namespace

FwResult fw_train(const WeakProblem& problem, const Vocabulary& vocabulary, const FwConfig& config,
                  const FwObserver& observer) {
  config.validate();
  const Eigen::MatrixXd& X = problem.descriptors;
  const auto rows = static_cast<std::size_t>(X.rows());
  const std::size_t classes = vocabulary.class_count();
  if (!problem.fixed_rows.empty() && !vocabulary.has_no_relation()) {
    throw InputError("fixed no-relation rows need a vocabulary with the no-relation class");
  }
  for (const Bag& bag : problem.bags) {
    if (bag.predicate >= vocabulary.predicate_count()) throw InputError("bag predicate is not a real predicate");
  }

  FwResult result;
  result.assignment = initial_assignment(rows, classes, problem.bags, problem.fixed_rows, problem.row_priority,
                                         &result.dropped_bags);
  std::vector<Bag> active;
  for (std::size_t b = 0, d = 0; b < problem.bags.size(); ++b) {
    if (d < result.dropped_bags.size() && result.dropped_bags[d] == b) {
      ++d;
      continue;
    }
    active.push_back(problem.bags[b]);
  }
  const VertexOracle oracle(rows, classes, active, result.assignment.fixed_rows, config.lmo);
  const RidgeSystem system(X, config.lambda);
  const double inv_n = 1.0 / static_cast<double>(rows);

  std::vector<std::vector<std::size_t>> blocks;
  std::mt19937_64 rng(config.seed);
  if (config.block_coordinate) {
    if (problem.row_block.size() != rows) throw InputError("block-coordinate mode needs an image index per row");
    std::unordered_map<std::size_t, std::size_t> index;
    for (std::size_t r = 0; r < rows; ++r) {
      auto [it, inserted] = index.emplace(problem.row_block[r], blocks.size());
      if (inserted) blocks.emplace_back();
      blocks[it->second].push_back(r);
    }
    for (const Bag& bag : active) {
      for (std::size_t r : bag.rows) {
        if (problem.row_block[r] != problem.row_block[bag.rows.front()]) {
          throw InputError("a bag spans several blocks");
        }
      }
    }
  }

  StepState s;
  s.Z = result.assignment.Z;
  s.BZ = system.residual_operator(s.Z);
  s.objective = inv_n * s.Z.cwiseProduct(s.BZ).sum();
  result.objective_trace.push_back(s.objective);

  auto take_step = [&](const Eigen::MatrixXd& D, const Eigen::MatrixXd& gradient) {
    const Eigen::MatrixXd BD = system.residual_operator(D);
    const double slope = gradient.cwiseProduct(D).sum();
    const double curvature = 2.0 * inv_n * D.cwiseProduct(BD).sum();
    const double step = line_search(slope, curvature);
    if (step > 0.0) {
      s.Z += step * D;
      s.BZ += step * BD;
    }
  };

  for (int t = 0;; ++t) {
    const Eigen::MatrixXd gradient = 2.0 * inv_n * s.BZ;
    const LmoResult vertex = oracle(gradient);
    result.heuristic_lmo_groups += vertex.heuristic_groups;
    const double gap = gradient.cwiseProduct(s.Z - vertex.vertex).sum();
    result.gap_trace.push_back(gap);
    if (observer) observer(FwIterate{t, s.Z, s.objective, gap});
    if (gap <= config.gap_tol * std::max(s.objective, std::numeric_limits<double>::min())) {
      result.converged = true;
      break;
    }
    if (t == config.max_iters) break;

    if (!config.block_coordinate) {
      take_step(vertex.vertex - s.Z, gradient);
    } else {
      std::vector<std::size_t> order(blocks.size());
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng);
      for (std::size_t bi : order) {
        const Eigen::MatrixXd block_gradient = 2.0 * inv_n * s.BZ;
        const Eigen::MatrixXd block_vertex = oracle(block_gradient).vertex;
        Eigen::MatrixXd D = Eigen::MatrixXd::Zero(s.Z.rows(), s.Z.cols());
        for (std::size_t r : blocks[bi]) {
          const auto i = static_cast<Eigen::Index>(r);
          D.row(i) = block_vertex.row(i) - s.Z.row(i);
        }
        take_step(D, block_gradient);
      }
    }
    if ((t + 1) % config.refresh_every == 0) s.BZ = system.residual_operator(s.Z);
    s.objective = inv_n * s.Z.cwiseProduct(s.BZ).sum();
    result.objective_trace.push_back(s.objective);
    result.iterations = t + 1;
  }

  result.assignment.Z = s.Z;
  result.model.weights = system.solve(s.Z);
  result.model.lambda = config.lambda;
  result.model.vocabulary = vocabulary;
  return result;
}

std::vector<std::size_t> sample_negatives(std::size_t row_count, std::span<const Bag> bags, double rate,
                                          std::uint64_t seed) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw InputError("negative sampling rate must be in [0, 1]");
  std::vector<char> in_bag(row_count, 0);
  for (const Bag& bag : bags) {
    for (std::size_t r : bag.rows) in_bag.at(r) = 1;
  }
  std::vector<std::size_t> pool;
  for (std::size_t r = 0; r < row_count; ++r) {
    if (!in_bag[r]) pool.push_back(r);
  }
  const auto take = static_cast<std::size_t>(std::llround(rate * static_cast<double>(pool.size())));
  std::mt19937_64 rng(seed);
  std::shuffle(pool.begin(), pool.end(), rng);
  pool.resize(take);
  std::sort(pool.begin(), pool.end());
  return pool;
}

}  // namespace vrel
