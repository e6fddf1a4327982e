#pragma once

#include <Eigen/Dense>
#include <span>

#include "vrel/core.hpp"
#include "vrel/gmm.hpp"

namespace vrel {

/// Linear projection onto the leading principal axes of the training appearance vectors.
/// No whitening: projected coordinates keep their natural scale.
struct PcaModel {
  Eigen::VectorXd mean;               // D
  Eigen::MatrixXd components;         // p x D, orthonormal rows, decreasing variance
  Eigen::VectorXd explained_variance; // p

  Eigen::Index input_dim() const { return components.cols(); }
  Eigen::Index output_dim() const { return components.rows(); }
};

/// Rows of `features` are appearance vectors (already L2-normalized by the caller).
/// Component signs are fixed so that each row's largest-magnitude entry is positive.
PcaModel pca_fit(const Eigen::MatrixXd& features, Eigen::Index output_dim);

Eigen::VectorXd pca_project(const PcaModel& model, const Eigen::Ref<const Eigen::VectorXd>& v);

/// components^T * y + mean, the inverse of pca_project on the principal subspace.
Eigen::VectorXd pca_reconstruct(const PcaModel& model, const Eigen::Ref<const Eigen::VectorXd>& y);

/// Returns v / |v|. Throws InputError on a zero vector.
Eigen::VectorXd l2_normalized(const Eigen::Ref<const Eigen::VectorXd>& v);

/// Feature row of one ordered (subject, object) pair: GMM responsibilities of the spatial
/// configuration followed by the unit-norm [subject, object] appearance block.
class PairDescriptor {
 public:
  PairDescriptor() = default;
  PairDescriptor(Eigen::VectorXd spatial, Eigen::VectorXd appearance);

  auto spatial() const { return values_.head(spatial_dim_); }
  auto appearance() const { return values_.tail(values_.size() - spatial_dim_); }
  const Eigen::VectorXd& full() const { return values_; }
  Eigen::Index size() const { return values_.size(); }

  bool operator==(const PairDescriptor& o) const {
    return spatial_dim_ == o.spatial_dim_ && values_ == o.values_;
  }

 private:
  Eigen::VectorXd values_;
  Eigen::Index spatial_dim_ = 0;
};

/// A detection together with its raw (fc7-style) appearance vector.
struct DetectionWithFeature {
  const Detection& detection;
  std::span<const float> feature;
};

PairDescriptor make_pair_descriptor(const GmmModel& gmm, const PcaModel& pca,
                                    const DetectionWithFeature& subject, const DetectionWithFeature& object);

/// Same as above from explicit boxes, for annotated (ground-truth) pairs that have no Detection.
PairDescriptor make_pair_descriptor(const GmmModel& gmm, const PcaModel& pca, const BoundingBox& subject_box,
                                    std::span<const float> subject_feature, const BoundingBox& object_box,
                                    std::span<const float> object_feature);

}  // namespace vrel
