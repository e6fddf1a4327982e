#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace vrel {

using CategoryIndex = std::size_t;
using PredicateIndex = std::size_t;

/// Axis-aligned box in center form. Width and height are strictly positive.
class BoundingBox {
 public:
  BoundingBox() = default;

  static BoundingBox from_center(double x, double y, double w, double h);
  static BoundingBox from_corners(double xmin, double ymin, double xmax, double ymax);

  double x() const { return x_; }
  double y() const { return y_; }
  double w() const { return w_; }
  double h() const { return h_; }

  double xmin() const { return x_ - 0.5 * w_; }
  double ymin() const { return y_ - 0.5 * h_; }
  double xmax() const { return x_ + 0.5 * w_; }
  double ymax() const { return y_ + 0.5 * h_; }
  std::array<double, 4> corners() const { return {xmin(), ymin(), xmax(), ymax()}; }

  double area() const { return w_ * h_; }

  /// Uniform rescaling about the image origin.
  BoundingBox scaled(double c) const;

  bool operator==(const BoundingBox&) const = default;

 private:
  BoundingBox(double x, double y, double w, double h) : x_(x), y_(y), w_(w), h_(h) {}

  double x_ = 0.0;
  double y_ = 0.0;
  double w_ = 1.0;
  double h_ = 1.0;
};

struct Detection {
  BoundingBox box;
  CategoryIndex category = 0;
  double score = 0.0;
  std::string image_id;
  std::size_t feature_ref = 0;

  bool operator==(const Detection&) const = default;
};

/// A (subject, predicate, object) label triple without localization.
struct Triplet {
  CategoryIndex subject = 0;
  PredicateIndex predicate = 0;
  CategoryIndex object = 0;

  auto operator<=>(const Triplet&) const = default;
};

struct TripletAnnotation {
  std::string image_id;
  CategoryIndex subject_category = 0;
  PredicateIndex predicate = 0;
  CategoryIndex object_category = 0;
  std::optional<BoundingBox> subject_box;
  std::optional<BoundingBox> object_box;
  // Feature-store rows for the annotated boxes, when appearance features exist for them.
  std::optional<std::size_t> subject_feature;
  std::optional<std::size_t> object_feature;

  bool has_boxes() const { return subject_box.has_value() && object_box.has_value(); }
  Triplet triplet() const { return {subject_category, predicate, object_category}; }

  bool operator==(const TripletAnnotation&) const = default;
};

/// Object and predicate name tables. When `has_no_relation` is set, class index R (one past the
/// last predicate) is the synthetic "no relation" class.
class Vocabulary {
 public:
  Vocabulary() = default;
  Vocabulary(std::vector<std::string> object_names, std::vector<std::string> predicate_names,
             bool has_no_relation);

  const std::vector<std::string>& object_names() const { return objects_; }
  const std::vector<std::string>& predicate_names() const { return predicates_; }
  bool has_no_relation() const { return no_relation_; }

  std::size_t object_count() const { return objects_.size(); }
  /// R, the number of real predicates.
  std::size_t predicate_count() const { return predicates_.size(); }
  /// R or R + 1.
  std::size_t class_count() const { return predicates_.size() + (no_relation_ ? 1 : 0); }
  std::optional<PredicateIndex> no_relation_index() const;

  std::optional<CategoryIndex> find_object(const std::string& name) const;
  std::optional<PredicateIndex> find_predicate(const std::string& name) const;
  const std::string& object_name(CategoryIndex i) const { return objects_.at(i); }
  const std::string& predicate_name(PredicateIndex i) const { return predicates_.at(i); }

  /// Stable 64-bit FNV-1a fingerprint of the name tables and the no-relation flag.
  std::uint64_t hash() const;

  bool operator==(const Vocabulary& o) const {
    return objects_ == o.objects_ && predicates_ == o.predicates_ && no_relation_ == o.no_relation_;
  }

 private:
  std::vector<std::string> objects_;
  std::vector<std::string> predicates_;
  bool no_relation_ = false;
  std::unordered_map<std::string, CategoryIndex> object_index_;
  std::unordered_map<std::string, PredicateIndex> predicate_index_;
};

double iou(const BoundingBox& a, const BoundingBox& b);

BoundingBox union_box(const BoundingBox& a, const BoundingBox& b);

/// Scale-free description of how an object box sits relative to a subject box:
/// [dx / sqrt(area_s), dy / sqrt(area_s), sqrt(area_o / area_s), IoU, w_s / h_s, w_o / h_o].
using SpatialVector = std::array<double, 6>;
SpatialVector spatial_vector(const BoundingBox& subject, const BoundingBox& object);

}  // namespace vrel
