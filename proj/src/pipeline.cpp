#include "vrel/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <tuple>
#include <unordered_map>

#include "json.hpp"
#include "vrel/errors.hpp"
#include "vrel/parallel.hpp"
#include "vrel/records.hpp"

using nlohmann::json;

namespace vrel {

std::vector<PairCandidate> candidate_pairs(const ImageRecord& image, const CandidateConfig& config, bool prefiltered) {
  config.validate();
  if (prefiltered) return enumerate_pairs(image.detections, config.max_pairs_per_image);
  const auto kept = select_candidates(image.detections, config);
  return enumerate_pairs(kept, config.max_pairs_per_image);
}

LabelledPairs annotated_pairs(std::span<const ImageRecord> images) {
  LabelledPairs out;
  for (const ImageRecord& image : images) {
    using Key = std::tuple<std::array<double, 4>, std::array<double, 4>, CategoryIndex, CategoryIndex>;
    std::map<Key, std::size_t> seen;
    for (const TripletAnnotation& a : image.annotations) {
      if (!a.has_boxes()) throw DataError("annotation in image '" + image.id + "' has no boxes");
      if (!a.subject_feature || !a.object_feature) {
        throw DataError("annotation in image '" + image.id + "' has no feature references");
      }
      const Key key{a.subject_box->corners(), a.object_box->corners(), a.subject_category, a.object_category};
      auto [it, inserted] = seen.emplace(key, out.pairs.size());
      if (inserted) {
        const Detection s{*a.subject_box, a.subject_category, 1.0, image.id, *a.subject_feature};
        const Detection o{*a.object_box, a.object_category, 1.0, image.id, *a.object_feature};
        out.pairs.push_back({image.id, s, o, std::nullopt});
        out.labels.emplace_back();
      }
      auto& labels = out.labels[it->second];
      if (std::find(labels.begin(), labels.end(), a.predicate) == labels.end()) labels.push_back(a.predicate);
    }
  }
  return out;
}

Eigen::MatrixXd spatial_samples(std::span<const PairCandidate> pairs) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(pairs.size()), 6);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const SpatialVector v = spatial_vector(pairs[i].subject.box, pairs[i].object.box);
    for (int j = 0; j < 6; ++j) out(static_cast<Eigen::Index>(i), j) = v[static_cast<std::size_t>(j)];
  }
  return out;
}

Eigen::MatrixXd appearance_samples(std::span<const ImageRecord> images, const FeatureStore& features) {
  std::set<std::size_t> refs;
  for (const ImageRecord& image : images) {
    for (const Detection& d : image.detections) refs.insert(d.feature_ref);
    for (const TripletAnnotation& a : image.annotations) {
      if (a.subject_feature) refs.insert(*a.subject_feature);
      if (a.object_feature) refs.insert(*a.object_feature);
    }
  }
  Eigen::MatrixXd out(static_cast<Eigen::Index>(refs.size()), static_cast<Eigen::Index>(features.dim()));
  Eigen::Index i = 0;
  for (std::size_t ref : refs) {
    const auto row = features.row(ref);
    const Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXf>(row.data(), static_cast<Eigen::Index>(row.size())).cast<double>();
    out.row(i++) = l2_normalized(v).transpose();
  }
  return out;
}

void attach_descriptors(std::span<PairCandidate> pairs, const GmmModel& gmm, const PcaModel& pca,
                        const FeatureStore& features) {
  if (static_cast<std::size_t>(pca.input_dim()) != features.dim()) {
    throw DataError("PCA model expects " + std::to_string(pca.input_dim()) + "-d features, store has " +
                    std::to_string(features.dim()));
  }
  parallel_for(pairs.size(), [&](std::size_t i) {
    PairCandidate& p = pairs[i];
    p.descriptor = make_pair_descriptor(gmm, pca, {p.subject, features.row(p.subject.feature_ref)},
                                        {p.object, features.row(p.object.feature_ref)});
  });
}

Eigen::MatrixXd descriptor_matrix(std::span<const PairCandidate> pairs) {
  if (pairs.empty()) return {};
  if (!pairs.front().descriptor) throw InputError("pair has no descriptor");
  const Eigen::Index d = pairs.front().descriptor->size();
  Eigen::MatrixXd X(static_cast<Eigen::Index>(pairs.size()), d);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (!pairs[i].descriptor || pairs[i].descriptor->size() != d) throw InputError("pair descriptors are missing or ragged");
    X.row(static_cast<Eigen::Index>(i)) = pairs[i].descriptor->full().transpose();
  }
  return X;
}

void save_pair_set(const PairSet& set, const std::string& prefix, const Vocabulary& vocabulary) {
  if (!set.labels.empty() && set.labels.size() != set.pairs.size()) throw InputError("labels do not align with pairs");
  const Eigen::Index dim = set.pairs.empty() ? 0 : set.pairs.front().descriptor.value().size();
  const Eigen::Index spatial_dim = set.pairs.empty() ? 0 : set.pairs.front().descriptor->spatial().size();

  std::vector<float> data;
  data.reserve(set.pairs.size() * static_cast<std::size_t>(dim));
  std::ofstream pairs_out(prefix + ".pairs.jsonl", std::ios::binary | std::ios::trunc);
  if (!pairs_out) throw DataError(prefix + ".pairs.jsonl: cannot write");
  for (std::size_t i = 0; i < set.pairs.size(); ++i) {
    const PairCandidate& p = set.pairs[i];
    const auto& v = p.descriptor.value().full();
    if (v.size() != dim || p.descriptor->spatial().size() != spatial_dim) throw InputError("ragged pair descriptors");
    for (Eigen::Index j = 0; j < dim; ++j) data.push_back(static_cast<float>(v(j)));
    json j = {{"image", p.image_id},
              {"subject", records::detection_to_json(p.subject, vocabulary)},
              {"object", records::detection_to_json(p.object, vocabulary)}};
    if (!set.labels.empty()) {
      json names = json::array();
      for (PredicateIndex r : set.labels[i]) names.push_back(vocabulary.predicate_name(r));
      j["predicates"] = names;
    }
    pairs_out << j.dump() << "\n";
  }
  FeatureStore(set.pairs.size(), static_cast<std::size_t>(dim), std::move(data)).save(prefix + ".relf");
  std::ofstream meta(prefix + ".meta.json", std::ios::binary | std::ios::trunc);
  meta << json{{"kind", set.kind}, {"spatial_dim", spatial_dim}, {"count", set.pairs.size()}, {"dim", dim}}.dump(2)
       << "\n";
}

PairSet load_pair_set(const std::string& prefix, const Vocabulary& vocabulary) {
  const std::string meta_path = prefix + ".meta.json";
  std::ifstream meta_in(meta_path);
  if (!meta_in) throw DataError(meta_path + ": cannot open");
  PairSet set;
  std::size_t spatial_dim = 0;
  std::size_t count = 0;
  try {
    const json meta = json::parse(meta_in);
    set.kind = meta.at("kind").get<std::string>();
    spatial_dim = meta.at("spatial_dim").get<std::size_t>();
    count = meta.at("count").get<std::size_t>();
  } catch (const json::exception& e) {
    throw DataError(meta_path + ": invalid metadata (" + e.what() + ")");
  }
  const FeatureStore store = FeatureStore::load(prefix + ".relf");
  if (store.rows() != count) throw DataError(prefix + ".relf: row count disagrees with " + meta_path);
  if (count > 0 && spatial_dim > store.dim()) throw DataError(meta_path + ": spatial_dim exceeds descriptor size");

  const std::string pairs_path = prefix + ".pairs.jsonl";
  std::ifstream in(pairs_path);
  if (!in) throw DataError(pairs_path + ": cannot open");
  std::string line;
  std::size_t lineno = 0;
  bool any_labels = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = pairs_path + ":" + std::to_string(lineno);
    if (set.pairs.size() == count) throw DataError(where + ": more pair records than descriptor rows");
    const json j = records::parse_line(line, where);
    PairCandidate p;
    try {
      p.image_id = j.at("image").get<std::string>();
      p.subject = records::detection_from_json(j.at("subject"), vocabulary, where);
      p.object = records::detection_from_json(j.at("object"), vocabulary, where);
    } catch (const json::exception& e) {
      throw DataError(where + ": " + e.what());
    }
    const auto row = store.row(set.pairs.size());
    Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXf>(row.data(), static_cast<Eigen::Index>(row.size())).cast<double>();
    const auto sd = static_cast<Eigen::Index>(spatial_dim);
    p.descriptor = PairDescriptor(v.head(sd), v.tail(v.size() - sd));
    std::vector<PredicateIndex> labels;
    if (j.contains("predicates")) {
      any_labels = true;
      for (const json& name : j["predicates"]) {
        if (!name.is_string()) throw DataError(where + ": predicate names must be strings");
        auto r = vocabulary.find_predicate(name.get<std::string>());
        if (!r) throw DataError(where + ": unknown predicate '" + name.get<std::string>() + "'");
        labels.push_back(*r);
      }
    }
    set.pairs.push_back(std::move(p));
    set.labels.push_back(std::move(labels));
  }
  if (set.pairs.size() != count) throw DataError(pairs_path + ": fewer pair records than descriptor rows");
  if (!any_labels) set.labels.clear();
  return set;
}

std::vector<std::size_t> image_blocks(std::span<const PairCandidate> pairs) {
  std::unordered_map<std::string, std::size_t> index;
  std::vector<std::size_t> out;
  out.reserve(pairs.size());
  for (const PairCandidate& p : pairs) out.push_back(index.emplace(p.image_id, index.size()).first->second);
  return out;
}

std::vector<RetrievalQuery> build_retrieval_queries(std::span<const PairCandidate> pairs,
                                                    std::span<const TripletAnnotation> annotations,
                                                    const RelationModel& model, const RetrievalOptions& options) {
  std::map<Triplet, std::vector<BoxPair>> positives;
  for (const TripletAnnotation& a : annotations) {
    if (!a.has_boxes()) throw InputError("retrieval ground truth in image '" + a.image_id + "' has no boxes");
    positives[a.triplet()].push_back({a.image_id, *a.subject_box, *a.object_box});
  }
  std::vector<char> suppressed(pairs.size(), 0);
  if (options.suppress_no_relation) {
    parallel_for(pairs.size(), [&](std::size_t i) {
      suppressed[i] = predicts_no_relation(pairs[i].descriptor.value().full(), model) ? 1 : 0;
    });
  }

  const auto& vocab = model.vocabulary;
  std::vector<std::pair<Triplet, std::vector<BoxPair>>> entries(positives.begin(), positives.end());
  std::vector<RetrievalQuery> queries(entries.size());
  parallel_for(entries.size(), [&](std::size_t q) {
    const Triplet& t = entries[q].first;
    RetrievalQuery& query = queries[q];
    query.name = vocab.object_name(t.subject) + " " + vocab.predicate_name(t.predicate) + " " + vocab.object_name(t.object);
    query.positives = std::move(entries[q].second);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const PairCandidate& p = pairs[i];
      if (suppressed[i] || p.subject.category != t.subject || p.object.category != t.object) continue;
      const double score = triplet_score(p, t, model, options.weights, options.language, options.score);
      query.candidates.push_back({{p.image_id, p.subject.box, p.object.box}, score});
    }
  });
  return queries;
}

}  // namespace vrel
