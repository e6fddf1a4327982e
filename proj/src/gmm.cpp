#include "vrel/gmm.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "vrel/errors.hpp"
#include "vrel/parallel.hpp"

namespace vrel {

namespace {

constexpr double kEmptyComponentMass = 1e-10;
constexpr double kMinReinitWeight = 1e-12;

// log(w_j) + log N(x; mu_j, diag(var_j)) for every component.
void component_log_terms(const GmmModel& m, const Eigen::Ref<const Eigen::VectorXd>& x,
                         const Eigen::VectorXd& log_norm, Eigen::Ref<Eigen::VectorXd> out) {
  for (Eigen::Index j = 0; j < m.components(); ++j) {
    double quad = 0.0;
    for (Eigen::Index c = 0; c < m.dim(); ++c) {
      const double diff = x(c) - m.means(j, c);
      quad += diff * diff / m.variances(j, c);
    }
    out(j) = log_norm(j) - 0.5 * quad;
  }
}

// log(w_j) - 0.5 * (dim * log(2 pi) + sum log var_j). Zero-weight components get -inf.
Eigen::VectorXd log_normalizers(const GmmModel& m) {
  const double log2pi = std::log(2.0 * std::numbers::pi);
  Eigen::VectorXd out(m.components());
  for (Eigen::Index j = 0; j < m.components(); ++j) {
    const double logdet = m.variances.row(j).array().log().sum();
    const double lw = m.weights(j) > 0.0 ? std::log(m.weights(j)) : -std::numeric_limits<double>::infinity();
    out(j) = lw - 0.5 * (static_cast<double>(m.dim()) * log2pi + logdet);
  }
  return out;
}

double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& v) {
  const double mx = v.maxCoeff();
  if (!std::isfinite(mx)) return mx;
  return mx + std::log((v.array() - mx).exp().sum());
}

// Fills `resp` (M x k) with posteriors and returns per-sample log densities.
Eigen::VectorXd e_step(const GmmModel& m, const Eigen::MatrixXd& samples, Eigen::MatrixXd& resp) {
  const Eigen::VectorXd log_norm = log_normalizers(m);
  const Eigen::Index n = samples.rows();
  Eigen::VectorXd log_px(n);
  resp.resize(n, m.components());
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t ii) {
    const auto i = static_cast<Eigen::Index>(ii);
    Eigen::VectorXd terms(m.components());
    component_log_terms(m, samples.row(i).transpose(), log_norm, terms);
    const double lse = log_sum_exp(terms);
    log_px(i) = lse;
    resp.row(i) = (terms.array() - lse).exp().transpose();
  });
  return log_px;
}

Eigen::RowVectorXd floored_variance(const Eigen::MatrixXd& samples, double floor) {
  const Eigen::RowVectorXd mean = samples.colwise().mean();
  Eigen::RowVectorXd var = (samples.rowwise() - mean).array().square().colwise().mean();
  return var.cwiseMax(floor);
}

// k-means++ seeding: first center uniform, then proportional to squared distance.
Eigen::MatrixXd kmeanspp_centers(const Eigen::MatrixXd& samples, Eigen::Index k, std::mt19937_64& rng) {
  const Eigen::Index n = samples.rows();
  Eigen::MatrixXd centers(k, samples.cols());
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  centers.row(0) = samples.row(pick(rng));
  Eigen::VectorXd d2 = (samples.rowwise() - centers.row(0)).rowwise().squaredNorm();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (Eigen::Index c = 1; c < k; ++c) {
    const double total = d2.sum();
    Eigen::Index chosen = pick(rng);
    if (total > 0.0) {
      const double target = unit(rng) * total;
      double acc = 0.0;
      chosen = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += d2(i);
        if (acc >= target && d2(i) > 0.0) {
          chosen = i;
          break;
        }
      }
    }
    centers.row(c) = samples.row(chosen);
    d2 = d2.cwiseMin((samples.rowwise() - centers.row(c)).rowwise().squaredNorm());
  }
  return centers;
}

}  // namespace

GmmFit fit_gmm(const Eigen::MatrixXd& samples, Eigen::Index k, const GmmConfig& config) {
  if (k < 1) throw InputError("GMM needs at least one component");
  if (samples.rows() < k) {
    throw InsufficientDataError("GMM with " + std::to_string(k) + " components needs at least that many samples, got " +
                                std::to_string(samples.rows()));
  }
  if (!samples.allFinite()) throw InputError("GMM samples contain non-finite values");
  if (config.max_iters < 1) throw InputError("GMM max_iters must be positive");

  const Eigen::Index n = samples.rows();
  const Eigen::Index dim = samples.cols();
  std::mt19937_64 rng(config.seed);

  GmmFit fit;
  GmmModel& m = fit.model;
  m.seed = config.seed;
  m.means = kmeanspp_centers(samples, k, rng);
  m.variances = floored_variance(samples, config.variance_floor).replicate(k, 1);
  m.weights = Eigen::VectorXd::Constant(k, 1.0 / static_cast<double>(k));

  const Eigen::RowVectorXd global_var = floored_variance(samples, config.variance_floor);
  Eigen::MatrixXd resp;
  double prev = -std::numeric_limits<double>::infinity();
  for (int it = 0; it < config.max_iters; ++it) {
    const Eigen::VectorXd log_px = e_step(m, samples, resp);
    const double ll = log_px.mean();
    fit.log_likelihood.push_back(ll);
    if (it > 0 && std::abs(ll - prev) <= config.tol * std::abs(prev)) {
      fit.converged = true;
      break;
    }
    prev = ll;

    // M-step. Variances are the constrained maximizer under the floor, so EM stays monotone.
    const Eigen::VectorXd mass = resp.colwise().sum().transpose();
    for (Eigen::Index j = 0; j < k; ++j) {
      if (mass(j) < kEmptyComponentMass) continue;
      const Eigen::RowVectorXd mu = (resp.col(j).transpose() * samples) / mass(j);
      Eigen::RowVectorXd var = Eigen::RowVectorXd::Zero(dim);
      for (Eigen::Index i = 0; i < n; ++i) {
        var += resp(i, j) * (samples.row(i) - mu).array().square().matrix();
      }
      m.means.row(j) = mu;
      m.variances.row(j) = (var / mass(j)).cwiseMax(config.variance_floor);
    }
    m.weights = mass / static_cast<double>(n);

    // Empty components move to the worst-explained sample. Their weight stays at the (tiny) mass
    // they had, so the likelihood can drop by at most that mass.
    for (Eigen::Index j = 0; j < k; ++j) {
      if (mass(j) >= kEmptyComponentMass) continue;
      Eigen::Index worst = 0;
      log_px.minCoeff(&worst);
      m.means.row(j) = samples.row(worst);
      m.variances.row(j) = global_var;
      m.weights(j) = std::max(m.weights(j), kMinReinitWeight);
      ++fit.reinitialized_components;
    }
    m.weights /= m.weights.sum();
    fit.iterations = it + 1;
  }
  if (!fit.converged) fit.log_likelihood.push_back(mean_log_likelihood(m, samples));
  return fit;
}

Eigen::VectorXd responsibilities(const GmmModel& model, const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (x.size() != model.dim()) throw InputError("responsibility query has wrong dimension");
  Eigen::VectorXd terms(model.components());
  component_log_terms(model, x, log_normalizers(model), terms);
  const double lse = log_sum_exp(terms);
  Eigen::VectorXd r = (terms.array() - lse).exp();
  return r / r.sum();
}

Eigen::MatrixXd batch_responsibilities(const GmmModel& model, const Eigen::MatrixXd& samples) {
  Eigen::MatrixXd resp;
  e_step(model, samples, resp);
  for (Eigen::Index i = 0; i < resp.rows(); ++i) resp.row(i) /= resp.row(i).sum();
  return resp;
}

double log_density(const GmmModel& model, const Eigen::Ref<const Eigen::VectorXd>& x) {
  Eigen::VectorXd terms(model.components());
  component_log_terms(model, x, log_normalizers(model), terms);
  return log_sum_exp(terms);
}

double mean_log_likelihood(const GmmModel& model, const Eigen::MatrixXd& samples) {
  Eigen::MatrixXd resp;
  return e_step(model, samples, resp).mean();
}

}  // namespace vrel
