#include <filesystem>
#include <fstream>

#include "cli_pipeline.hpp"
#include "doctest.h"
#include "json.hpp"

namespace fs = std::filesystem;
using clitest::run;

namespace {

const char* const kSubcommands[] = {"fit-gmm",      "fit-pca", "featurize",   "train-full",     "train-weak", "train-noisy",
                                    "tune-weights", "score",   "eval-recall", "eval-retrieval", "synth"};

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::path(VREL_TEST_TMP) / "cli" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

double report_value(const fs::path& path, const std::string& metric_prefix) {
  const auto j = nlohmann::json::parse(clitest::slurp(path));
  for (const auto& r : j) {
    if (r.at("metric").get<std::string>().rfind(metric_prefix, 0) == 0) return r.at("value").get<double>();
  }
  throw std::runtime_error("metric not found: " + metric_prefix);
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("help exits 0 everywhere") {
    const auto top = run({"--help"});
    CHECK(top.code == 0);
    CHECK(top.out.find("Usage") != std::string::npos);
    for (const char* sub : kSubcommands) {
      const auto r = run({sub, "--help"});
      CHECK_MESSAGE(r.code == 0, sub);
      CHECK_MESSAGE(r.out.find("--") != std::string::npos, sub);
    }
  }

  TEST_CASE("usage errors exit 1") {
    CHECK(run({}).code == 1);
    CHECK(run({"no-such-command"}).code == 1);
    CHECK(run({"synth"}).code == 1);  // missing --out
    CHECK(run({"fit-gmm", "--manifest", "m.json", "--out", "g", "--k", "0"}).code == 1);
    CHECK(run({"synth", "--preset", "nope", "--out", "x"}).code == 1);
    CHECK(run({"eval-recall", "--manifest", "m.json"}).code == 1);  // neither predictions nor model
  }

  TEST_CASE("data errors exit 2") {
    const fs::path dir = fresh_dir("data_error");
    const auto r = run({"fit-pca", "--manifest", (dir / "missing.json").string(), "--out", (dir / "p.relm").string()});
    CHECK(r.code == 2);
    CHECK(r.err.find("missing.json") != std::string::npos);
  }

  TEST_CASE("synth is deterministic per seed") {
    const fs::path dir = fresh_dir("synth");
    auto make = [&](const std::string& seed, const std::string& name) {
      return run({"--seed", seed, "synth", "--preset", "planted-bags", "--train-images", "8", "--val-images", "2",
                  "--test-images", "2", "--out", (dir / name).string()})
          .code;
    };
    REQUIRE(make("7", "a") == 0);
    REQUIRE(make("7", "b") == 0);
    REQUIRE(make("8", "c") == 0);
    CHECK(clitest::snapshot(dir / "a") == clitest::snapshot(dir / "b"));
    CHECK(clitest::snapshot(dir / "a") != clitest::snapshot(dir / "c"));
  }

  TEST_CASE("config file supplies options") {
    const fs::path dir = fresh_dir("config");
    {
      std::ofstream cfg(dir / "run.toml");
      cfg << "seed = 3\n[synth]\ntrain-images = 4\nval-images = 1\ntest-images = 1\nout = \"" << (dir / "data").string()
          << "\"\n";
    }
    const auto r = run({"--config", (dir / "run.toml").string(), "synth"});
    CHECK(r.code == 0);
    CHECK(fs::exists(dir / "data" / "manifest.json"));
  }

  TEST_CASE("end-to-end pipeline on the planted dataset") {
    const fs::path dir = fresh_dir("pipeline");
    REQUIRE_NOTHROW(clitest::run_pipeline(dir));
    const double weak = report_value(dir / "weak_report.json", "top-1");
    const double full = report_value(dir / "full_report.json", "top-1");
    MESSAGE("top-1 accuracy weak " << weak << " full " << full);
    CHECK(full > 0.5);
    CHECK(weak > 0.2);  // above chance over five predicates

    const std::string d = dir.string();
    const std::string manifest = d + "/data/manifest.json";
    CHECK(run({"featurize", "--manifest", manifest, "--split", "val", "--gmm", d + "/gmm.relm", "--pca", d + "/pca.relm",
               "--out", d + "/val"})
              .code == 0);
    CHECK(run({"featurize", "--manifest", manifest, "--split", "test", "--gmm", d + "/gmm.relm", "--pca", d + "/pca.relm",
               "--out", d + "/test"})
              .code == 0);
    CHECK(run({"train-noisy", "--manifest", manifest, "--features", d + "/train", "--out", d + "/noisy.relm"}).code == 0);
    CHECK(run({"tune-weights", "--manifest", manifest, "--model", d + "/weak.relm", "--features", d + "/val",
               "--grid-sub", "0,0.5", "--grid-obj", "0,0.5", "--grid-lang", "0", "--out", d + "/tuned.relm"})
              .code == 0);
    CHECK(run({"score", "--manifest", manifest, "--model", d + "/tuned.relm", "--features", d + "/test", "--out",
               d + "/preds.jsonl"})
              .code == 0);
    const std::string preds = clitest::slurp(d + "/preds.jsonl");
    const auto first = nlohmann::json::parse(preds.substr(0, preds.find('\n')));
    CHECK(first.contains("subject_box"));
    CHECK(first.contains("score"));
    CHECK(run({"eval-recall", "--manifest", manifest, "--predictions", d + "/preds.jsonl", "--x", "50,100", "--report",
               d + "/rel.json"})
              .code == 0);
    const double r50 = report_value(d + "/rel.json", "recall@50");
    const double r100 = report_value(d + "/rel.json", "recall@100");
    CHECK(r50 <= r100);
    CHECK(run({"eval-retrieval", "--manifest", manifest, "--model", d + "/tuned.relm", "--features", d + "/test",
               "--report", d + "/ret.json"})
              .code == 0);
    CHECK(run({"eval-retrieval", "--manifest", manifest, "--model", d + "/full.relm", "--features", d + "/test_gt",
               "--report", d + "/ret_gt.json"})
              .code == 0);
    CHECK(report_value(d + "/ret_gt.json", "mAP gt") > 0.0);
  }
}
