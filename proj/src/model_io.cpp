#include "vrel/model_io.hpp"

#include <cstdio>
#include <fstream>
#include <map>

#include "binary_io.hpp"
#include "vrel/errors.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace vrel {

namespace {

constexpr std::uint32_t kContainerVersion = 1;

struct Container {
  std::string kind;
  std::optional<Vocabulary> vocabulary;
  json meta = json::object();
  std::vector<std::pair<std::string, Eigen::MatrixXd>> arrays;
};

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

json vocabulary_json(const Vocabulary& v) {
  return {{"objects", v.object_names()}, {"predicates", v.predicate_names()}, {"no_relation", v.has_no_relation()}};
}

void write_container(const Container& c, const fs::path& path) {
  json header = {{"kind", c.kind}, {"meta", c.meta}, {"arrays", json::array()}};
  if (c.vocabulary) {
    header["vocabulary"] = vocabulary_json(*c.vocabulary);
    header["vocab_hash"] = hex64(c.vocabulary->hash());
  }
  std::uint64_t offset = 0;
  for (const auto& [name, m] : c.arrays) {
    header["arrays"].push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}, {"offset", offset}});
    offset += static_cast<std::uint64_t>(m.size()) * sizeof(double);
  }
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(path.string() + ": cannot write model file");
  out.write("RELM", 4);
  binary::write<std::uint32_t>(out, kContainerVersion);
  binary::write<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, m] : c.arrays) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) binary::write<double>(out, m(i, j));
    }
  }
  if (!out) throw DataError(path.string() + ": write failed");
}

Container read_container(const fs::path& path, const std::string& kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path.string() + ": cannot open model file");
  const std::string where = path.string();
  char magic[4];
  std::uint32_t version = 0;
  std::uint64_t header_len = 0;
  if (!in.read(magic, 4) || std::string(magic, 4) != "RELM") throw DataError(where + ": bad magic, expected RELM");
  if (!binary::read(in, version) || !binary::read(in, header_len)) throw DataError(where + ": truncated header");
  if (version != kContainerVersion) throw DataError(where + ": unsupported model version " + std::to_string(version));
  const auto file_size = static_cast<std::uint64_t>(fs::file_size(path));
  if (header_len > file_size - 16) throw DataError(where + ": header length exceeds file size");
  std::string text(header_len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(header_len));

  Container c;
  json header;
  try {
    header = json::parse(text);
    c.kind = header.at("kind").get<std::string>();
    c.meta = header.at("meta");
  } catch (const json::exception& e) {
    throw DataError(where + ": invalid model header (" + e.what() + ")");
  }
  if (c.kind != kind) throw DataError(where + ": file holds a '" + c.kind + "', expected '" + kind + "'");

  if (header.contains("vocabulary")) {
    try {
      const json& v = header["vocabulary"];
      c.vocabulary = Vocabulary(v.at("objects").get<std::vector<std::string>>(),
                                v.at("predicates").get<std::vector<std::string>>(), v.at("no_relation").get<bool>());
    } catch (const std::exception& e) {
      throw DataError(where + ": invalid vocabulary in header (" + e.what() + ")");
    }
    if (header.value("vocab_hash", std::string()) != hex64(c.vocabulary->hash())) {
      throw DataError(where + ": vocabulary hash mismatch");
    }
  }

  const std::uint64_t payload_start = 16 + header_len;
  std::uint64_t expected_end = payload_start;
  try {
    for (const json& a : header.at("arrays")) {
      const auto rows = a.at("rows").get<std::uint64_t>();
      const auto cols = a.at("cols").get<std::uint64_t>();
      const auto offset = a.at("offset").get<std::uint64_t>();
      if (payload_start + offset != expected_end) throw DataError(where + ": arrays are not contiguous");
      if (cols != 0 && rows > (file_size / sizeof(double)) / cols) throw DataError(where + ": array shape exceeds file");
      expected_end += rows * cols * sizeof(double);
      if (expected_end > file_size) throw DataError(where + ": payload truncated");
      Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
      for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) binary::read(in, m(i, j));
      }
      c.arrays.emplace_back(a.at("name").get<std::string>(), std::move(m));
    }
  } catch (const json::exception& e) {
    throw DataError(where + ": invalid array table (" + e.what() + ")");
  }
  if (!in) throw DataError(where + ": payload truncated");
  if (expected_end != file_size) throw DataError(where + ": trailing bytes after payload");
  return c;
}

const Eigen::MatrixXd& array(const Container& c, const std::string& name, const fs::path& path) {
  for (const auto& [n, m] : c.arrays) {
    if (n == name) return m;
  }
  throw DataError(path.string() + ": missing array '" + name + "'");
}

const Eigen::MatrixXd* optional_array(const Container& c, const std::string& name) {
  for (const auto& [n, m] : c.arrays) {
    if (n == name) return &m;
  }
  return nullptr;
}

std::uint64_t seed_from_hex(const json& meta, const char* key) {
  if (!meta.contains(key)) return 0;
  return std::stoull(meta[key].get<std::string>(), nullptr, 16);
}

void add_gmm(Container& c, const GmmModel& g, const std::string& prefix) {
  c.arrays.emplace_back(prefix + "means", g.means);
  c.arrays.emplace_back(prefix + "variances", g.variances);
  c.arrays.emplace_back(prefix + "weights", g.weights);
  c.meta[prefix + "seed"] = hex64(g.seed);
}

GmmModel take_gmm(const Container& c, const std::string& prefix, const fs::path& path) {
  GmmModel g;
  g.means = array(c, prefix + "means", path);
  g.variances = array(c, prefix + "variances", path);
  const Eigen::MatrixXd& w = array(c, prefix + "weights", path);
  if (w.cols() != 1 || g.variances.rows() != g.means.rows() || g.variances.cols() != g.means.cols() ||
      w.rows() != g.means.rows()) {
    throw DataError(path.string() + ": inconsistent GMM array shapes");
  }
  g.weights = w.col(0);
  g.seed = seed_from_hex(c.meta, (prefix + "seed").c_str());
  return g;
}

void add_pca(Container& c, const PcaModel& p, const std::string& prefix) {
  c.arrays.emplace_back(prefix + "mean", p.mean);
  c.arrays.emplace_back(prefix + "components", p.components);
  c.arrays.emplace_back(prefix + "explained_variance", p.explained_variance);
}

PcaModel take_pca(const Container& c, const std::string& prefix, const fs::path& path) {
  PcaModel p;
  const Eigen::MatrixXd& mean = array(c, prefix + "mean", path);
  const Eigen::MatrixXd& ev = array(c, prefix + "explained_variance", path);
  p.components = array(c, prefix + "components", path);
  if (mean.cols() != 1 || ev.cols() != 1 || mean.rows() != p.components.cols() || ev.rows() != p.components.rows()) {
    throw DataError(path.string() + ": inconsistent PCA array shapes");
  }
  p.mean = mean.col(0);
  p.explained_variance = ev.col(0);
  return p;
}

}  // namespace

void save_gmm(const GmmModel& gmm, const fs::path& path) {
  Container c{"gmm", std::nullopt, json::object(), {}};
  add_gmm(c, gmm, "");
  write_container(c, path);
}

GmmModel load_gmm(const fs::path& path) { return take_gmm(read_container(path, "gmm"), "", path); }

void save_pca(const PcaModel& pca, const fs::path& path) {
  Container c{"pca", std::nullopt, json::object(), {}};
  add_pca(c, pca, "");
  write_container(c, path);
}

PcaModel load_pca(const fs::path& path) { return take_pca(read_container(path, "pca"), "", path); }

void save_model(const ModelBundle& bundle, const fs::path& path) {
  const RelationModel& m = bundle.model;
  if (static_cast<std::size_t>(m.class_count()) != m.vocabulary.class_count()) {
    throw InputError("model weight columns do not match its vocabulary");
  }
  Container c{"relation_model", m.vocabulary, json::object(), {}};
  c.meta["lambda"] = m.lambda;
  c.meta["weights"] = {{"alpha_sub", bundle.weights.alpha_sub},
                       {"alpha_obj", bundle.weights.alpha_obj},
                       {"alpha_lang", bundle.weights.alpha_lang}};
  c.meta["info"] = bundle.info;
  c.arrays.emplace_back("classifier", m.weights);
  if (m.gmm) add_gmm(c, *m.gmm, "gmm.");
  if (m.pca) add_pca(c, *m.pca, "pca.");
  if (bundle.assignment) c.arrays.emplace_back("assignment", *bundle.assignment);
  write_container(c, path);
}

ModelBundle load_model(const fs::path& path, const Vocabulary* expected) {
  const Container c = read_container(path, "relation_model");
  if (!c.vocabulary) throw DataError(path.string() + ": model file has no vocabulary");
  if (expected && !(*expected == *c.vocabulary)) {
    throw DataError(path.string() + ": model vocabulary (hash " + hex64(c.vocabulary->hash()) +
                    ") does not match the dataset vocabulary (hash " + hex64(expected->hash()) + ")");
  }
  ModelBundle b;
  b.model.vocabulary = *c.vocabulary;
  b.model.weights = array(c, "classifier", path);
  if (static_cast<std::size_t>(b.model.weights.cols()) != b.model.vocabulary.class_count()) {
    throw DataError(path.string() + ": classifier columns do not match the vocabulary");
  }
  try {
    b.model.lambda = c.meta.at("lambda").get<double>();
    const json& w = c.meta.at("weights");
    b.weights = {w.at("alpha_sub").get<double>(), w.at("alpha_obj").get<double>(), w.at("alpha_lang").get<double>()};
    b.info = c.meta.value("info", json::object());
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": invalid model metadata (" + e.what() + ")");
  }
  if (optional_array(c, "gmm.means")) b.model.gmm = std::make_shared<GmmModel>(take_gmm(c, "gmm.", path));
  if (optional_array(c, "pca.mean")) b.model.pca = std::make_shared<PcaModel>(take_pca(c, "pca.", path));
  if (const auto* z = optional_array(c, "assignment")) b.assignment = *z;
  return b;
}

}  // namespace vrel
