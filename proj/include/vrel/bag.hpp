#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "vrel/core.hpp"

namespace vrel {

/// Candidate-pair rows of one image whose categories match a weak (s, r, o) annotation.
/// At least one of them must carry predicate `predicate`.
struct Bag {
  std::vector<std::size_t> rows;
  PredicateIndex predicate = 0;
  std::string image_id;

  bool operator==(const Bag&) const = default;
};

}  // namespace vrel
