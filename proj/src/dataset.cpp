#include "vrel/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "binary_io.hpp"
#include "vrel/errors.hpp"
#include "vrel/records.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace vrel {

namespace records {

json box_to_json(const BoundingBox& box) {
  const auto c = box.corners();
  return json::array({c[0], c[1], c[2], c[3]});
}

BoundingBox box_from_json(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 4 || !std::all_of(j.begin(), j.end(), [](const json& v) { return v.is_number(); })) {
    throw DataError(where + ": box must be [xmin, ymin, xmax, ymax]");
  }
  try {
    return BoundingBox::from_corners(j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>());
  } catch (const InputError& e) {
    throw DataError(where + ": " + e.what());
  }
}

namespace {

const json& field(const json& j, const char* key, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) throw DataError(where + ": missing field '" + key + "'");
  return *it;
}

std::string string_field(const json& j, const char* key, const std::string& where) {
  const json& v = field(j, key, where);
  if (!v.is_string()) throw DataError(where + ": field '" + key + "' must be a string");
  return v.get<std::string>();
}

std::size_t index_field(const json& v, const char* key, const std::string& where) {
  if (!v.is_number_unsigned()) throw DataError(where + ": field '" + key + "' must be a non-negative integer");
  return v.get<std::size_t>();
}

CategoryIndex object_by_name(const Vocabulary& vocab, const std::string& name, const std::string& where) {
  auto idx = vocab.find_object(name);
  if (!idx) throw DataError(where + ": unknown object category '" + name + "'");
  return *idx;
}

}  // namespace

json detection_to_json(const Detection& d, const Vocabulary& vocab) {
  return {{"image", d.image_id},
          {"category", vocab.object_name(d.category)},
          {"box", box_to_json(d.box)},
          {"score", d.score},
          {"feature", d.feature_ref}};
}

Detection detection_from_json(const json& j, const Vocabulary& vocab, const std::string& where) {
  if (!j.is_object()) throw DataError(where + ": detection record must be an object");
  Detection d;
  d.image_id = string_field(j, "image", where);
  d.category = object_by_name(vocab, string_field(j, "category", where), where);
  d.box = box_from_json(field(j, "box", where), where);
  const json& score = field(j, "score", where);
  if (!score.is_number()) throw DataError(where + ": field 'score' must be a number");
  d.score = score.get<double>();
  if (!(d.score >= 0.0 && d.score <= 1.0)) throw DataError(where + ": detection score outside [0, 1]");
  d.feature_ref = index_field(field(j, "feature", where), "feature", where);
  return d;
}

json annotation_to_json(const TripletAnnotation& a, const Vocabulary& vocab) {
  json j = {{"image", a.image_id},
            {"subject", vocab.object_name(a.subject_category)},
            {"predicate", vocab.predicate_name(a.predicate)},
            {"object", vocab.object_name(a.object_category)}};
  if (a.subject_box) j["subject_box"] = box_to_json(*a.subject_box);
  if (a.object_box) j["object_box"] = box_to_json(*a.object_box);
  if (a.subject_feature) j["subject_feature"] = *a.subject_feature;
  if (a.object_feature) j["object_feature"] = *a.object_feature;
  return j;
}

TripletAnnotation annotation_from_json(const json& j, const Vocabulary& vocab, const std::string& where) {
  if (!j.is_object()) throw DataError(where + ": annotation record must be an object");
  TripletAnnotation a;
  a.image_id = string_field(j, "image", where);
  a.subject_category = object_by_name(vocab, string_field(j, "subject", where), where);
  a.object_category = object_by_name(vocab, string_field(j, "object", where), where);
  const std::string predicate = string_field(j, "predicate", where);
  auto p = vocab.find_predicate(predicate);
  if (!p) throw DataError(where + ": unknown predicate '" + predicate + "'");
  a.predicate = *p;
  if (j.contains("subject_box")) a.subject_box = box_from_json(j["subject_box"], where);
  if (j.contains("object_box")) a.object_box = box_from_json(j["object_box"], where);
  if (a.subject_box.has_value() != a.object_box.has_value()) {
    throw DataError(where + ": annotation must carry both boxes or neither");
  }
  if (j.contains("subject_feature")) a.subject_feature = index_field(j["subject_feature"], "subject_feature", where);
  if (j.contains("object_feature")) a.object_feature = index_field(j["object_feature"], "object_feature", where);
  return a;
}

json parse_line(const std::string& line, const std::string& where) {
  try {
    return json::parse(line);
  } catch (const json::parse_error& e) {
    throw DataError(where + ": invalid JSON (" + e.what() + ")");
  }
}

}  // namespace records

// ---------------------------------------------------------------------------------------------

FeatureStore::FeatureStore(std::size_t rows, std::size_t dim, std::vector<float> data)
    : rows_(rows), dim_(dim), data_(std::move(data)) {
  if (data_.size() != rows_ * dim_) throw InputError("feature store payload does not match its shape");
}

std::span<const float> FeatureStore::row(std::size_t i) const {
  if (i >= rows_) {
    throw DataError("feature row " + std::to_string(i) + " out of range (store has " + std::to_string(rows_) + " rows)");
  }
  return std::span<const float>(data_).subspan(i * dim_, dim_);
}

FeatureStore FeatureStore::load(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path.string() + ": cannot open feature store");
  char magic[4];
  std::uint32_t version = 0;
  std::uint64_t rows = 0;
  std::uint64_t dim = 0;
  if (!in.read(magic, 4) || std::string(magic, 4) != "RELF") throw DataError(path.string() + ": bad magic, expected RELF");
  if (!binary::read(in, version) || !binary::read(in, rows) || !binary::read(in, dim)) {
    throw DataError(path.string() + ": truncated header");
  }
  if (version != kVersion) throw DataError(path.string() + ": unsupported feature store version " + std::to_string(version));
  const std::uint64_t expected = 24 + rows * dim * sizeof(float);
  const auto actual = static_cast<std::uint64_t>(fs::file_size(path));
  if (dim != 0 && rows > (actual / sizeof(float)) / dim + 1) {
    throw DataError(path.string() + ": declared shape exceeds file size");
  }
  if (actual != expected) {
    throw DataError(path.string() + ": payload is " + std::to_string(actual - 24) + " bytes, header declares " +
                    std::to_string(rows) + " x " + std::to_string(dim) + " floats");
  }
  std::vector<float> data(rows * dim);
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(float)));
  if (!in) throw DataError(path.string() + ": truncated payload");
  return FeatureStore(rows, dim, std::move(data));
}

void FeatureStore::save(const fs::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(path.string() + ": cannot write feature store");
  out.write("RELF", 4);
  binary::write<std::uint32_t>(out, kVersion);
  binary::write<std::uint64_t>(out, rows_);
  binary::write<std::uint64_t>(out, dim_);
  out.write(reinterpret_cast<const char*>(data_.data()), static_cast<std::streamsize>(data_.size() * sizeof(float)));
  if (!out) throw DataError(path.string() + ": write failed");
}

const DatasetSplit& Dataset::split(const std::string& name) const {
  for (const auto& s : splits) {
    if (s.name == name) return s;
  }
  throw DataError("dataset has no split '" + name + "'");
}

// ---------------------------------------------------------------------------------------------

namespace {

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path.string() + ": cannot open");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError(path.string() + ": invalid JSON (" + e.what() + ")");
  }
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(path.string() + ": cannot write");
  out << text;
}

template <typename Fn>
void for_each_jsonl(const fs::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw DataError(path.string() + ": cannot open");
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    fn(records::parse_line(line, where), where);
  }
}

fs::path resolve(const fs::path& base, const fs::path& p) { return p.is_absolute() ? p : base / p; }

}  // namespace

Vocabulary load_vocabulary(const fs::path& path) {
  const json j = read_json_file(path);
  try {
    auto objects = j.at("objects").get<std::vector<std::string>>();
    auto predicates = j.at("predicates").get<std::vector<std::string>>();
    const bool no_relation = j.value("no_relation", false);
    return Vocabulary(std::move(objects), std::move(predicates), no_relation);
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": vocabulary schema error (" + e.what() + ")");
  } catch (const InputError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void save_vocabulary(const Vocabulary& vocabulary, const fs::path& path) {
  const json j = {{"objects", vocabulary.object_names()},
                  {"predicates", vocabulary.predicate_names()},
                  {"no_relation", vocabulary.has_no_relation()}};
  write_text_file(path, j.dump(2) + "\n");
}

DatasetManifest DatasetManifest::load(const fs::path& path) {
  const json j = read_json_file(path);
  const fs::path base = path.parent_path();
  DatasetManifest m;
  try {
    m.format_version = j.at("format_version").get<int>();
    if (m.format_version != kFormatVersion) {
      throw DataError(path.string() + ": unsupported manifest format_version " + std::to_string(m.format_version));
    }
    m.vocabulary = resolve(base, j.at("vocabulary").get<std::string>());
    m.features = resolve(base, j.at("features").get<std::string>());
    for (const auto& [name, files] : j.at("splits").items()) {
      m.splits[name] = {resolve(base, files.at("detections").get<std::string>()),
                        resolve(base, files.at("annotations").get<std::string>())};
    }
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": manifest schema error (" + e.what() + ")");
  }
  for (const fs::path& p : {m.vocabulary, m.features}) {
    if (!fs::exists(p)) throw DataError(path.string() + ": referenced file " + p.string() + " does not exist");
  }
  for (const auto& [name, files] : m.splits) {
    for (const fs::path& p : {files.detections, files.annotations}) {
      if (!fs::exists(p)) throw DataError(path.string() + ": split '" + name + "' file " + p.string() + " does not exist");
    }
  }
  return m;
}

bool Dataset::operator==(const Dataset& o) const {
  if (!(vocabulary == o.vocabulary && features == o.features && splits.size() == o.splits.size())) return false;
  return std::all_of(splits.begin(), splits.end(), [&](const DatasetSplit& s) {
    return std::count(o.splits.begin(), o.splits.end(), s) == 1;
  });
}

Dataset load_dataset(const fs::path& manifest_path) {
  const DatasetManifest manifest = DatasetManifest::load(manifest_path);
  Dataset ds;
  ds.vocabulary = load_vocabulary(manifest.vocabulary);
  ds.features = FeatureStore::load(manifest.features);

  std::vector<std::size_t> feature_uses(ds.features.rows(), 0);
  auto check_ref = [&](std::size_t ref, const std::string& where) {
    if (ref >= ds.features.rows()) {
      throw DataError(where + ": feature reference " + std::to_string(ref) + " is outside the feature store (" +
                      std::to_string(ds.features.rows()) + " rows)");
    }
    ++feature_uses[ref];
  };

  std::unordered_map<std::string, std::string> image_split;
  for (const auto& [name, files] : manifest.splits) {
    DatasetSplit split;
    split.name = name;
    std::unordered_map<std::string, std::size_t> index;
    auto image = [&](const std::string& id, const std::string& where) -> ImageRecord& {
      auto [it, inserted] = index.emplace(id, split.images.size());
      if (inserted) {
        auto [owner, fresh] = image_split.emplace(id, name);
        if (!fresh && owner->second != name) {
          throw DataError(where + ": image '" + id + "' also appears in split '" + owner->second + "'");
        }
        split.images.push_back({id, {}, {}});
      }
      return split.images[it->second];
    };
    for_each_jsonl(files.detections, [&](const json& j, const std::string& where) {
      Detection d = records::detection_from_json(j, ds.vocabulary, where);
      check_ref(d.feature_ref, where);
      image(d.image_id, where).detections.push_back(std::move(d));
    });
    for_each_jsonl(files.annotations, [&](const json& j, const std::string& where) {
      TripletAnnotation a = records::annotation_from_json(j, ds.vocabulary, where);
      if (a.subject_feature) check_ref(*a.subject_feature, where);
      if (a.object_feature) check_ref(*a.object_feature, where);
      image(a.image_id, where).annotations.push_back(std::move(a));
    });
    ds.splits.push_back(std::move(split));
  }

  std::size_t unused = 0;
  for (std::size_t uses : feature_uses) unused += uses == 0;
  if (unused > 0) ds.warnings.push_back(std::to_string(unused) + " feature rows are not referenced by any record");
  return ds;
}

fs::path save_dataset(const Dataset& dataset, const fs::path& directory) {
  fs::create_directories(directory);
  save_vocabulary(dataset.vocabulary, directory / "vocabulary.json");
  dataset.features.save(directory / "features.relf");

  json manifest = {{"format_version", DatasetManifest::kFormatVersion},
                   {"vocabulary", "vocabulary.json"},
                   {"features", "features.relf"},
                   {"splits", json::object()}};
  for (const DatasetSplit& split : dataset.splits) {
    std::ostringstream dets;
    std::ostringstream anns;
    for (const ImageRecord& img : split.images) {
      for (const Detection& d : img.detections) dets << records::detection_to_json(d, dataset.vocabulary).dump() << "\n";
      for (const TripletAnnotation& a : img.annotations) {
        anns << records::annotation_to_json(a, dataset.vocabulary).dump() << "\n";
      }
    }
    const std::string det_name = split.name + ".detections.jsonl";
    const std::string ann_name = split.name + ".annotations.jsonl";
    write_text_file(directory / det_name, dets.str());
    write_text_file(directory / ann_name, anns.str());
    manifest["splits"][split.name] = {{"detections", det_name}, {"annotations", ann_name}};
  }
  const fs::path manifest_path = directory / "manifest.json";
  write_text_file(manifest_path, manifest.dump(2) + "\n");
  return manifest_path;
}

LanguageScoreTable load_language_table(const fs::path& path, const Vocabulary& vocabulary) {
  std::ifstream in(path);
  if (!in) throw DataError(path.string() + ": cannot open");
  LanguageScoreTable table;
  std::string line;
  std::size_t lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r\"");
    const auto e = s.find_last_not_of(" \t\r\"");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (lineno == 1) {
      if (trim(line).rfind("subject", 0) != 0) throw DataError(where + ": expected header subject,predicate,object,score");
      continue;
    }
    if (trim(line).empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(trim(cell));
    if (cells.size() != 4) throw DataError(where + ": expected 4 comma-separated fields");
    auto s = vocabulary.find_object(cells[0]);
    auto r = vocabulary.find_predicate(cells[1]);
    auto o = vocabulary.find_object(cells[2]);
    if (!s) throw DataError(where + ": unknown object category '" + cells[0] + "'");
    if (!r) throw DataError(where + ": unknown predicate '" + cells[1] + "'");
    if (!o) throw DataError(where + ": unknown object category '" + cells[2] + "'");
    try {
      std::size_t used = 0;
      const double v = std::stod(cells[3], &used);
      if (used != cells[3].size()) throw std::invalid_argument("trailing");
      table.set({*s, *r, *o}, v);
    } catch (const std::exception&) {
      throw DataError(where + ": score '" + cells[3] + "' is not a number");
    }
  }
  return table;
}

}  // namespace vrel
