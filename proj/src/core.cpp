#include "vrel/core.hpp"

#include <algorithm>
#include <cmath>

#include "vrel/errors.hpp"

namespace vrel {

BoundingBox BoundingBox::from_center(double x, double y, double w, double h) {
  if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(w) || !std::isfinite(h)) {
    throw InputError("bounding box has non-finite coordinates");
  }
  if (!(w > 0.0) || !(h > 0.0)) {
    throw InputError("bounding box must have positive width and height");
  }
  return BoundingBox(x, y, w, h);
}

BoundingBox BoundingBox::from_corners(double xmin, double ymin, double xmax, double ymax) {
  return from_center(0.5 * (xmin + xmax), 0.5 * (ymin + ymax), xmax - xmin, ymax - ymin);
}

BoundingBox BoundingBox::scaled(double c) const {
  return from_center(c * x_, c * y_, c * w_, c * h_);
}

Vocabulary::Vocabulary(std::vector<std::string> object_names, std::vector<std::string> predicate_names,
                       bool has_no_relation)
    : objects_(std::move(object_names)), predicates_(std::move(predicate_names)), no_relation_(has_no_relation) {
  for (std::size_t i = 0; i < objects_.size(); ++i) {
    if (!object_index_.emplace(objects_[i], i).second) {
      throw InputError("duplicate object name '" + objects_[i] + "'");
    }
  }
  for (std::size_t i = 0; i < predicates_.size(); ++i) {
    if (!predicate_index_.emplace(predicates_[i], i).second) {
      throw InputError("duplicate predicate name '" + predicates_[i] + "'");
    }
  }
}

std::optional<PredicateIndex> Vocabulary::no_relation_index() const {
  if (!no_relation_) return std::nullopt;
  return predicates_.size();
}

std::optional<CategoryIndex> Vocabulary::find_object(const std::string& name) const {
  auto it = object_index_.find(name);
  if (it == object_index_.end()) return std::nullopt;
  return it->second;
}

std::optional<PredicateIndex> Vocabulary::find_predicate(const std::string& name) const {
  auto it = predicate_index_.find(name);
  if (it == predicate_index_.end()) return std::nullopt;
  return it->second;
}

std::uint64_t Vocabulary::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](std::string_view s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    h ^= 0xff;  // separator that cannot occur in UTF-8
    h *= 0x100000001b3ULL;
  };
  feed("objects");
  for (const auto& n : objects_) feed(n);
  feed("predicates");
  for (const auto& n : predicates_) feed(n);
  feed(no_relation_ ? "no_relation=1" : "no_relation=0");
  return h;
}

double iou(const BoundingBox& a, const BoundingBox& b) {
  const double iw = std::min(a.xmax(), b.xmax()) - std::max(a.xmin(), b.xmin());
  const double ih = std::min(a.ymax(), b.ymax()) - std::max(a.ymin(), b.ymin());
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

BoundingBox union_box(const BoundingBox& a, const BoundingBox& b) {
  return BoundingBox::from_corners(std::min(a.xmin(), b.xmin()), std::min(a.ymin(), b.ymin()),
                                   std::max(a.xmax(), b.xmax()), std::max(a.ymax(), b.ymax()));
}

SpatialVector spatial_vector(const BoundingBox& s, const BoundingBox& o) {
  const double scale = std::sqrt(s.w() * s.h());
  return {
      (o.x() - s.x()) / scale,
      (o.y() - s.y()) / scale,
      std::sqrt((o.w() * o.h()) / (s.w() * s.h())),
      iou(s, o),
      s.w() / s.h(),
      o.w() / o.h(),
  };
}

}  // namespace vrel
