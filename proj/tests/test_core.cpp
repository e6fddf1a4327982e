#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "vrel/core.hpp"
#include "vrel/errors.hpp"

using namespace vrel;

namespace {

void check_vector(const SpatialVector& got, const SpatialVector& want, double tol = 1e-12) {
  for (std::size_t i = 0; i < 6; ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(tol));
}

}  // namespace

TEST_SUITE("core") {
  TEST_CASE("box construction rejects degenerate sizes") {
    CHECK_THROWS_AS(BoundingBox::from_center(0, 0, 0, 1), InputError);
    CHECK_THROWS_AS(BoundingBox::from_center(0, 0, 1, -2), InputError);
    CHECK_THROWS_AS(BoundingBox::from_corners(2, 0, 1, 1), InputError);
    CHECK_THROWS_AS(BoundingBox::from_center(NAN, 0, 1, 1), InputError);
  }

  TEST_CASE("corner and center forms round-trip") {
    oracle::Rng rng(11);
    for (int i = 0; i < 200; ++i) {
      const BoundingBox b = rng.box(1000.0);
      const auto c = b.corners();
      const BoundingBox back = BoundingBox::from_corners(c[0], c[1], c[2], c[3]);
      CHECK(std::abs(back.x() - b.x()) < 1e-9);
      CHECK(std::abs(back.y() - b.y()) < 1e-9);
      CHECK(std::abs(back.w() - b.w()) < 1e-9);
      CHECK(std::abs(back.h() - b.h()) < 1e-9);
    }
  }

  TEST_CASE("iou hand cases") {
    const auto b = BoundingBox::from_corners(1, 1, 3, 3);
    CHECK(iou(b, b) == 1.0);
    CHECK(iou(BoundingBox::from_corners(0, 0, 1, 1), BoundingBox::from_corners(5, 5, 6, 6)) == 0.0);
    CHECK(iou(b, BoundingBox::from_corners(2, 2, 4, 4)) == doctest::Approx(1.0 / 7.0).epsilon(1e-12));
    // Touching edges have zero-area intersection.
    CHECK(iou(BoundingBox::from_corners(0, 0, 1, 1), BoundingBox::from_corners(1, 0, 2, 1)) == 0.0);
  }

  TEST_CASE("union box hand cases") {
    const auto a = BoundingBox::from_corners(0, 0, 1, 1);
    CHECK(union_box(a, a) == a);
    CHECK(union_box(a, BoundingBox::from_corners(2, 2, 3, 3)).corners() == std::array<double, 4>{0, 0, 3, 3});
    CHECK(union_box(BoundingBox::from_corners(1, 1, 3, 3), BoundingBox::from_corners(2, 0, 4, 2)).corners() ==
          std::array<double, 4>{1, 0, 4, 3});
  }

  TEST_CASE("iou and union box properties on random pairs") {
    oracle::Rng rng(5);
    for (int i = 0; i < 500; ++i) {
      const BoundingBox a = rng.box();
      const BoundingBox b = rng.box();
      CHECK(iou(a, b) == iou(b, a));
      CHECK(iou(a, b) >= 0.0);
      CHECK(iou(a, b) <= 1.0);
      const BoundingBox u = union_box(a, b);
      CHECK(u == union_box(b, a));
      const BoundingBox uu = union_box(u, u);
      for (int c = 0; c < 4; ++c) CHECK(uu.corners()[c] == doctest::Approx(u.corners()[c]).epsilon(1e-12));
      CHECK(iou(a, u) >= iou(a, b) - 1e-15);
    }
  }

  TEST_CASE("spatial vector hand cases") {
    const auto b = BoundingBox::from_center(3, 3, 4, 2);
    check_vector(spatial_vector(b, b), {0, 0, 1, 1, 2, 2});
    check_vector(spatial_vector(BoundingBox::from_center(2, 2, 2, 2), BoundingBox::from_center(4, 2, 2, 2)),
                 {1, 0, 1, 0, 1, 1});
  }

  TEST_CASE("spatial vector against a direct evaluation") {
    oracle::Rng rng(8);
    for (int i = 0; i < 100; ++i) {
      const BoundingBox s = rng.box();
      const BoundingBox o = rng.box();
      const double norm = std::sqrt(s.w() * s.h());
      const double ix = std::max(0.0, std::min(s.xmax(), o.xmax()) - std::max(s.xmin(), o.xmin()));
      const double iy = std::max(0.0, std::min(s.ymax(), o.ymax()) - std::max(s.ymin(), o.ymin()));
      const double inter = ix * iy;
      check_vector(spatial_vector(s, o), {(o.x() - s.x()) / norm, (o.y() - s.y()) / norm,
                                          std::sqrt(o.w() * o.h() / (s.w() * s.h())),
                                          inter / (s.area() + o.area() - inter), s.w() / s.h(), o.w() / o.h()},
                   1e-10);
    }
  }

  TEST_CASE("spatial vector is invariant to uniform rescaling") {
    oracle::Rng rng(9);
    for (int i = 0; i < 200; ++i) {
      const BoundingBox s = rng.box();
      const BoundingBox o = rng.box();
      const double c = rng.uniform(0.01, 50.0);
      check_vector(spatial_vector(s.scaled(c), o.scaled(c)), spatial_vector(s, o), 1e-9);
    }
  }

  TEST_CASE("vocabulary lookups and no-relation class") {
    const Vocabulary v({"person", "horse"}, {"ride", "feed", "next to"}, true);
    CHECK(v.predicate_count() == 3);
    CHECK(v.class_count() == 4);
    CHECK(v.no_relation_index() == std::optional<PredicateIndex>(3));
    CHECK(v.find_object("horse") == std::optional<CategoryIndex>(1));
    CHECK_FALSE(v.find_predicate("on").has_value());
    CHECK(v.predicate_name(2) == "next to");

    const Vocabulary plain({"person", "horse"}, {"ride", "feed", "next to"}, false);
    CHECK(plain.class_count() == 3);
    CHECK_FALSE(plain.no_relation_index().has_value());
    CHECK(plain.hash() != v.hash());
    CHECK(Vocabulary({"person", "horse"}, {"ride", "feed", "next to"}, true).hash() == v.hash());

    CHECK_THROWS_AS(Vocabulary({"a", "a"}, {"r"}, false), InputError);
    CHECK_THROWS_AS(Vocabulary({"a"}, {"r", "r"}, false), InputError);
  }
}
