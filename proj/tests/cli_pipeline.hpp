#pragma once

// Runs the command-line pipeline in-process on a small planted dataset.

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "vrel/cli.hpp"

namespace clitest {

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

inline Run run(const std::vector<std::string>& args) {
  std::ostringstream out;
  std::ostringstream err;
  const int code = vrel::run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

/// Relative path -> bytes for every regular file under `dir`.
inline std::map<std::string, std::string> snapshot(const std::filesystem::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files[std::filesystem::relative(e.path(), dir).string()] = slurp(e.path());
  }
  return files;
}

struct PipelineOptions {
  std::string seed = "7";
  std::string train_images = "60";
  std::string test_images = "30";
  std::string k = "64";
  std::string pca_dim = "8";
  std::string weak_iters = "100";
};

/// synth -> fit-gmm -> fit-pca -> featurize -> train-weak -> eval-recall (plus train-full on
/// annotated pairs for comparison) inside `dir`. Throws std::runtime_error naming the first step
/// that does not exit 0.
inline void run_pipeline(const std::filesystem::path& dir, const PipelineOptions& o = {}) {
  std::filesystem::remove_all(dir);
  const std::string d = dir.string();
  const std::string manifest = d + "/data/manifest.json";
  const std::vector<std::vector<std::string>> steps{
      {"--seed", o.seed, "synth", "--preset", "planted-bags", "--train-images", o.train_images, "--val-images", "10",
       "--test-images", o.test_images, "--feature-dim", "16", "--out", d + "/data"},
      {"--seed", o.seed, "fit-gmm", "--manifest", manifest, "--k", o.k, "--out", d + "/gmm.relm"},
      {"fit-pca", "--manifest", manifest, "--dim", o.pca_dim, "--out", d + "/pca.relm"},
      {"featurize", "--manifest", manifest, "--gmm", d + "/gmm.relm", "--pca", d + "/pca.relm", "--out", d + "/train"},
      {"featurize", "--manifest", manifest, "--gmm", d + "/gmm.relm", "--pca", d + "/pca.relm", "--pairs", "gt", "--out",
       d + "/train_gt"},
      {"featurize", "--manifest", manifest, "--split", "test", "--gmm", d + "/gmm.relm", "--pca", d + "/pca.relm",
       "--pairs", "gt", "--out", d + "/test_gt"},
      {"--seed", o.seed, "train-weak", "--manifest", manifest, "--features", d + "/train", "--max-iters", o.weak_iters,
       "--gmm", d + "/gmm.relm", "--pca", d + "/pca.relm", "--out", d + "/weak.relm"},
      {"train-full", "--manifest", manifest, "--features", d + "/train_gt", "--out", d + "/full.relm"},
      {"eval-recall", "--manifest", manifest, "--model", d + "/weak.relm", "--features", d + "/test_gt", "--mode",
       "predicate", "--topk", "1", "--report", d + "/weak_report.json"},
      {"eval-recall", "--manifest", manifest, "--model", d + "/full.relm", "--features", d + "/test_gt", "--mode",
       "predicate", "--topk", "1", "--report", d + "/full_report.json"},
  };
  for (const auto& args : steps) {
    const Run r = run(args);
    if (r.code != 0) {
      std::string cmd;
      for (const auto& a : args) cmd += a + " ";
      throw std::runtime_error("step failed (" + std::to_string(r.code) + "): " + cmd + "\n" + r.err);
    }
  }
}

}  // namespace clitest
