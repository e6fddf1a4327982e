#pragma once

// JSON-lines record schemas shared by dataset files, featurized pair files and CLI outputs.
// Boxes are written in corner form [xmin, ymin, xmax, ymax]; categories and predicates by name.

#include <string>

#include "json.hpp"
#include "vrel/core.hpp"

namespace vrel::records {

nlohmann::json box_to_json(const BoundingBox& box);
BoundingBox box_from_json(const nlohmann::json& j, const std::string& where);

/// {"image", "category", "box", "score", "feature"}
nlohmann::json detection_to_json(const Detection& d, const Vocabulary& vocab);
Detection detection_from_json(const nlohmann::json& j, const Vocabulary& vocab, const std::string& where);

/// {"image", "subject", "predicate", "object"} plus optional "subject_box", "object_box",
/// "subject_feature", "object_feature".
nlohmann::json annotation_to_json(const TripletAnnotation& a, const Vocabulary& vocab);
TripletAnnotation annotation_from_json(const nlohmann::json& j, const Vocabulary& vocab, const std::string& where);

/// Parses one JSON-lines line; throws DataError prefixed with `where`.
nlohmann::json parse_line(const std::string& line, const std::string& where);

}  // namespace vrel::records
