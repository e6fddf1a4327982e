#include "vrel/features.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

#include "vrel/errors.hpp"

namespace vrel {

namespace {

// Gram-route eigenvectors can run out when the centered data has rank < p; complete the basis
// with orthogonalized coordinate axes.
void complete_orthonormal_rows(Eigen::MatrixXd& rows, Eigen::Index filled) {
  const Eigen::Index dim = rows.cols();
  Eigen::Index axis = 0;
  while (filled < rows.rows() && axis < dim) {
    Eigen::RowVectorXd v = Eigen::RowVectorXd::Unit(dim, axis++);
    for (int pass = 0; pass < 2; ++pass) {
      for (Eigen::Index r = 0; r < filled; ++r) v -= v.dot(rows.row(r)) * rows.row(r);
    }
    const double norm = v.norm();
    if (norm > 0.5) rows.row(filled++) = v / norm;
  }
}

void fix_signs(Eigen::MatrixXd& rows) {
  for (Eigen::Index r = 0; r < rows.rows(); ++r) {
    Eigen::Index at = 0;
    rows.row(r).cwiseAbs().maxCoeff(&at);
    if (rows(r, at) < 0.0) rows.row(r) *= -1.0;
  }
}

Eigen::VectorXd as_vector(std::span<const float> f) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(f.size()));
  for (std::size_t i = 0; i < f.size(); ++i) v(static_cast<Eigen::Index>(i)) = f[i];
  return v;
}

}  // namespace

PcaModel pca_fit(const Eigen::MatrixXd& features, Eigen::Index output_dim) {
  const Eigen::Index m = features.rows();
  const Eigen::Index dim = features.cols();
  if (output_dim < 1 || output_dim > dim) throw InputError("PCA output dimension must be in [1, input dimension]");
  if (m < output_dim) {
    throw InsufficientDataError("PCA to " + std::to_string(output_dim) + " dimensions needs at least that many rows, got " +
                                std::to_string(m));
  }
  if (!features.allFinite()) throw InputError("PCA input contains non-finite values");

  PcaModel model;
  model.mean = features.colwise().mean().transpose();
  const Eigen::MatrixXd centered = features.rowwise() - model.mean.transpose();
  model.components.resize(output_dim, dim);
  model.explained_variance.resize(output_dim);

  // Eigen's solver returns ascending eigenvalues; walk from the back.
  if (dim <= m || dim <= 1024) {
    const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(m);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    for (Eigen::Index r = 0; r < output_dim; ++r) {
      model.components.row(r) = eig.eigenvectors().col(dim - 1 - r).transpose();
      model.explained_variance(r) = std::max(0.0, eig.eigenvalues()(dim - 1 - r));
    }
  } else {
    const Eigen::MatrixXd gram = centered * centered.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
    const double tiny = 1e-12 * std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff());
    Eigen::Index filled = 0;
    for (Eigen::Index r = 0; r < output_dim; ++r) {
      const double lambda = eig.eigenvalues()(m - 1 - r);
      if (lambda <= tiny) break;
      model.components.row(r) = (centered.transpose() * eig.eigenvectors().col(m - 1 - r)).transpose() / std::sqrt(lambda);
      model.explained_variance(r) = lambda / static_cast<double>(m);
      ++filled;
    }
    for (Eigen::Index r = filled; r < output_dim; ++r) model.explained_variance(r) = 0.0;
    complete_orthonormal_rows(model.components, filled);
  }
  fix_signs(model.components);
  return model;
}

Eigen::VectorXd pca_project(const PcaModel& model, const Eigen::Ref<const Eigen::VectorXd>& v) {
  if (v.size() != model.input_dim()) {
    throw InputError("PCA input has dimension " + std::to_string(v.size()) + ", model expects " +
                     std::to_string(model.input_dim()));
  }
  return model.components * (v - model.mean);
}

Eigen::VectorXd pca_reconstruct(const PcaModel& model, const Eigen::Ref<const Eigen::VectorXd>& y) {
  if (y.size() != model.output_dim()) throw InputError("PCA reconstruction input has wrong dimension");
  return model.components.transpose() * y + model.mean;
}

Eigen::VectorXd l2_normalized(const Eigen::Ref<const Eigen::VectorXd>& v) {
  const double norm = v.norm();
  if (!(norm > 0.0) || !std::isfinite(norm)) throw InputError("cannot L2-normalize a zero or non-finite vector");
  return v / norm;
}

PairDescriptor::PairDescriptor(Eigen::VectorXd spatial, Eigen::VectorXd appearance)
    : values_(spatial.size() + appearance.size()), spatial_dim_(spatial.size()) {
  values_ << spatial, appearance;
}

PairDescriptor make_pair_descriptor(const GmmModel& gmm, const PcaModel& pca, const BoundingBox& subject_box,
                                    std::span<const float> subject_feature, const BoundingBox& object_box,
                                    std::span<const float> object_feature) {
  const SpatialVector sv = spatial_vector(subject_box, object_box);
  Eigen::VectorXd spatial = responsibilities(gmm, Eigen::Map<const Eigen::VectorXd>(sv.data(), 6));

  const Eigen::VectorXd a_s = pca_project(pca, l2_normalized(as_vector(subject_feature)));
  const Eigen::VectorXd a_o = pca_project(pca, l2_normalized(as_vector(object_feature)));
  Eigen::VectorXd appearance(a_s.size() + a_o.size());
  appearance << a_s, a_o;
  return PairDescriptor(std::move(spatial), l2_normalized(appearance));
}

PairDescriptor make_pair_descriptor(const GmmModel& gmm, const PcaModel& pca, const DetectionWithFeature& subject,
                                    const DetectionWithFeature& object) {
  return make_pair_descriptor(gmm, pca, subject.detection.box, subject.feature, object.detection.box, object.feature);
}

}  // namespace vrel
