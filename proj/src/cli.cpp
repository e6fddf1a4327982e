#include "vrel/cli.hpp"

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "vrel/candidates.hpp"
#include "vrel/dataset.hpp"
#include "vrel/errors.hpp"
#include "vrel/eval.hpp"
#include "vrel/features.hpp"
#include "vrel/gmm.hpp"
#include "vrel/model_io.hpp"
#include "vrel/parallel.hpp"
#include "vrel/pipeline.hpp"
#include "vrel/records.hpp"
#include "vrel/ridge.hpp"
#include "vrel/scoring.hpp"
#include "vrel/synth.hpp"
#include "vrel/weak.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace vrel {

namespace {

// Raised for option combinations that parse but make no sense; reported as a usage error.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <typename Fn>
void check_usage(Fn&& fn) {
  try {
    fn();
  } catch (const InputError& e) {
    throw UsageError(e.what());
  }
}

struct Globals {
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

struct Context {
  Globals globals;
  std::ostream& out;
  std::ostream& err;
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError(path.string() + ": cannot write");
  f << text;
}

void ensure_parent(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

std::vector<TripletAnnotation> split_annotations(const DatasetSplit& split) {
  std::vector<TripletAnnotation> out;
  for (const ImageRecord& image : split.images) out.insert(out.end(), image.annotations.begin(), image.annotations.end());
  return out;
}

json report_json(const EvalReport& r) {
  json breakdown = json::array();
  for (const EvalBreakdown& b : r.breakdown) {
    breakdown.push_back({{"key", b.key}, {"value", b.value}, {"gt", b.gt}, {"matched", b.matched}, {"predictions", b.predictions}});
  }
  return {{"metric", r.metric},
          {"value", r.value},
          {"gt", r.gt_count},
          {"matched", r.matched},
          {"predictions", r.predictions},
          {"excluded", r.excluded},
          {"breakdown", breakdown}};
}

// ---------------------------------------------------------------------------------------------
// Options shared by several subcommands

struct CandidateOptions {
  CandidateConfig config;
  std::size_t max_pairs = 0;
  bool prefiltered = false;
  std::string pairs = "candidates";

  void add(CLI::App* app) {
    app->add_option("--pairs", pairs, "Pair source: detector candidates or annotated boxes")
        ->check(CLI::IsMember({"candidates", "gt"}))
        ->capture_default_str();
    app->add_option("--score-threshold", config.score_threshold, "Keep detections scoring above this")->capture_default_str();
    app->add_option("--top-k", config.top_k, "Detections kept per image before thresholding")->capture_default_str();
    app->add_option("--nms", config.nms_threshold, "Per-category NMS IoU threshold")->capture_default_str();
    app->add_option("--max-pairs", max_pairs, "Cap on candidate pairs per image (0 = unlimited)")->capture_default_str();
    app->add_flag("--prefiltered", prefiltered, "Detections are already filtered; skip top-k, threshold and NMS");
  }

  CandidateConfig resolved() const {
    CandidateConfig c = config;
    if (max_pairs > 0) c.max_pairs_per_image = max_pairs;
    check_usage([&] { c.validate(); });
    return c;
  }

  LabelledPairs build(const DatasetSplit& split) const {
    if (pairs == "gt") return annotated_pairs(split.images);
    const CandidateConfig c = resolved();
    LabelledPairs out;
    for (const ImageRecord& image : split.images) {
      auto p = candidate_pairs(image, c, prefiltered);
      std::move(p.begin(), p.end(), std::back_inserter(out.pairs));
    }
    return out;
  }
};

struct ModelInput {
  std::string manifest;
  std::string split;

  void add(CLI::App* app, const std::string& default_split) {
    split = default_split;
    app->add_option("--manifest", manifest, "Dataset manifest.json")->required();
    app->add_option("--split", split, "Dataset split")->capture_default_str();
  }
};

std::shared_ptr<const GmmModel> optional_gmm(const std::string& path) {
  if (path.empty()) return nullptr;
  return std::make_shared<GmmModel>(load_gmm(path));
}

std::shared_ptr<const PcaModel> optional_pca(const std::string& path) {
  if (path.empty()) return nullptr;
  return std::make_shared<PcaModel>(load_pca(path));
}

// ---------------------------------------------------------------------------------------------
// Subcommands

struct FitGmm {
  ModelInput input;
  CandidateOptions candidates;
  Eigen::Index k = 400;
  GmmConfig gmm;
  std::string out;

  void add(CLI::App* app) {
    input.add(app, "train");
    candidates.add(app);
    app->add_option("--k", k, "Number of mixture components")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--max-iters", gmm.max_iters, "EM iteration limit")->check(CLI::NonNegativeNumber)->capture_default_str();
    app->add_option("--tol", gmm.tol, "Relative log-likelihood change for convergence")->capture_default_str();
    app->add_option("--floor", gmm.variance_floor, "Variance floor")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--out", out, "Output GMM file")->required();
  }

  void run(Context& ctx) {
    const Dataset ds = load_dataset(input.manifest);
    const LabelledPairs pairs = candidates.build(ds.split(input.split));
    gmm.seed = ctx.globals.seed;
    const GmmFit fit = fit_gmm(spatial_samples(pairs.pairs), k, gmm);
    ensure_parent(out);
    save_gmm(fit.model, out);
    ctx.out << "fit-gmm: " << pairs.pairs.size() << " pairs, k=" << k << ", " << fit.iterations << " iterations, "
            << (fit.converged ? "converged" : "not converged") << ", mean log-likelihood "
            << fit.log_likelihood.back() << ", reinitialized " << fit.reinitialized_components << "\n";
  }
};

struct FitPca {
  ModelInput input;
  Eigen::Index dim = 300;
  std::string out;

  void add(CLI::App* app) {
    input.add(app, "train");
    app->add_option("--dim", dim, "Output dimension per box")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--out", out, "Output PCA file")->required();
  }

  void run(Context& ctx) {
    const Dataset ds = load_dataset(input.manifest);
    const Eigen::MatrixXd samples = appearance_samples(ds.split(input.split).images, ds.features);
    const PcaModel pca = pca_fit(samples, dim);
    ensure_parent(out);
    save_pca(pca, out);
    ctx.out << "fit-pca: " << samples.rows() << " vectors, " << pca.input_dim() << " -> " << pca.output_dim()
            << ", retained variance " << pca.explained_variance.sum() << "\n";
  }
};

struct Featurize {
  ModelInput input;
  CandidateOptions candidates;
  std::string gmm_path;
  std::string pca_path;
  std::string out;

  void add(CLI::App* app) {
    input.add(app, "train");
    candidates.add(app);
    app->add_option("--gmm", gmm_path, "GMM file from fit-gmm")->required();
    app->add_option("--pca", pca_path, "PCA file from fit-pca")->required();
    app->add_option("--out", out, "Output prefix (writes PREFIX.relf, PREFIX.pairs.jsonl, PREFIX.meta.json)")->required();
  }

  void run(Context& ctx) {
    const Dataset ds = load_dataset(input.manifest);
    const GmmModel gmm = load_gmm(gmm_path);
    const PcaModel pca = load_pca(pca_path);
    LabelledPairs pairs = candidates.build(ds.split(input.split));
    attach_descriptors(pairs.pairs, gmm, pca, ds.features);
    PairSet set{candidates.pairs, std::move(pairs.pairs), std::move(pairs.labels)};
    ensure_parent(out);
    save_pair_set(set, out, ds.vocabulary);
    ctx.out << "featurize: " << set.pairs.size() << " " << set.kind << " pairs from split '" << input.split << "'\n";
  }
};

struct TrainCommon {
  ModelInput input;
  std::string features;
  std::string gmm_path;
  std::string pca_path;
  double lambda = 1e-3;
  std::string out;

  void add(CLI::App* app) {
    input.add(app, "train");
    app->add_option("--features", features, "Featurized pair prefix")->required();
    app->add_option("--lambda", lambda, "Ridge regularization")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--gmm", gmm_path, "Embed this GMM in the model file");
    app->add_option("--pca", pca_path, "Embed this PCA in the model file");
    app->add_option("--out", out, "Output model file")->required();
  }

  void save(ModelBundle& bundle) const {
    bundle.model.gmm = optional_gmm(gmm_path);
    bundle.model.pca = optional_pca(pca_path);
    ensure_parent(out);
    save_model(bundle, out);
  }
};

struct TrainFull {
  TrainCommon common;

  void add(CLI::App* app) { common.add(app); }

  void run(Context& ctx) {
    const Dataset ds = load_dataset(common.input.manifest);
    const PairSet set = load_pair_set(common.features, ds.vocabulary);
    if (set.labels.empty()) throw DataError(common.features + ": full supervision needs annotated pairs (featurize --pairs gt)");
    std::vector<LabelledRow> examples;
    for (std::size_t i = 0; i < set.labels.size(); ++i) {
      for (PredicateIndex r : set.labels[i]) examples.push_back({i, r});
    }
    ModelBundle bundle;
    bundle.model = train_ridge_labelled(descriptor_matrix(set.pairs), examples, common.lambda, ds.vocabulary);
    bundle.info = {{"trainer", "full"}, {"lambda", common.lambda}, {"pairs", set.pairs.size()}, {"examples", examples.size()}};
    common.save(bundle);
    ctx.out << "train-full: " << examples.size() << " labelled examples on " << set.pairs.size() << " pairs\n";
  }
};

std::vector<std::string> bag_images(std::span<const Bag> bags, std::span<const std::size_t> indices) {
  std::vector<std::string> out;
  for (std::size_t i : indices) out.push_back(bags[i].image_id);
  return out;
}

struct TrainWeak {
  TrainCommon common;
  FwConfig fw;
  bool keep_assignment = false;

  void add(CLI::App* app) {
    common.add(app);
    app->add_option("--max-iters", fw.max_iters, "Frank-Wolfe iteration limit")->check(CLI::NonNegativeNumber)->capture_default_str();
    app->add_option("--gap-tol", fw.gap_tol, "Stop when the duality gap falls below gap-tol * objective")->capture_default_str();
    app->add_option("--negative-rate", fw.negative_sampling_rate, "Fraction of unbagged pairs pinned to no-relation")
        ->capture_default_str();
    app->add_flag("--block-coordinate", fw.block_coordinate, "Block-coordinate steps, one image at a time");
    app->add_option("--exact-rows", fw.lmo.exact_row_limit, "Largest overlapping-bag group solved exactly")->capture_default_str();
    app->add_flag("--keep-assignment", keep_assignment, "Store the final assignment matrix in the model");
  }

  void run(Context& ctx) {
    fw.lambda = common.lambda;
    fw.seed = ctx.globals.seed;
    check_usage([&] { fw.validate(); });
    const Dataset ds = load_dataset(common.input.manifest);
    if (fw.negative_sampling_rate > 0.0 && !ds.vocabulary.has_no_relation()) {
      throw UsageError("--negative-rate needs a vocabulary with the no-relation class");
    }
    const PairSet set = load_pair_set(common.features, ds.vocabulary);
    const auto annotations = split_annotations(ds.split(common.input.split));
    const BagSet bags = build_bags(annotations, set.pairs);
    const Eigen::MatrixXd X = descriptor_matrix(set.pairs);
    const auto negatives = sample_negatives(set.pairs.size(), bags.bags, fw.negative_sampling_rate, ctx.globals.seed);
    std::vector<double> priority;
    for (const PairCandidate& p : set.pairs) priority.push_back(p.subject.score * p.object.score);
    const auto blocks = image_blocks(set.pairs);

    const WeakProblem problem{X, bags.bags, negatives, priority, blocks};
    const FwResult result = fw_train(problem, ds.vocabulary, fw);

    ModelBundle bundle;
    bundle.model = result.model;
    if (keep_assignment) bundle.assignment = result.assignment.Z;
    json skipped = json::array();
    for (std::size_t a : bags.skipped_annotations) skipped.push_back(annotations[a].image_id);
    bundle.info = {{"trainer", "weak"},
                   {"lambda", fw.lambda},
                   {"max_iters", fw.max_iters},
                   {"gap_tol", fw.gap_tol},
                   {"negative_sampling_rate", fw.negative_sampling_rate},
                   {"block_coordinate", fw.block_coordinate},
                   {"seed", ctx.globals.seed},
                   {"pairs", set.pairs.size()},
                   {"bags", bags.bags.size()},
                   {"negatives", negatives.size()},
                   {"iterations", result.iterations},
                   {"converged", result.converged},
                   {"objective_trace", result.objective_trace},
                   {"gap_trace", result.gap_trace},
                   {"heuristic_lmo_groups", result.heuristic_lmo_groups},
                   {"dropped_bags", bag_images(bags.bags, result.dropped_bags)},
                   {"skipped_annotations", skipped}};
    common.save(bundle);
    ctx.out << "train-weak: " << bags.bags.size() << " bags over " << set.pairs.size() << " pairs, " << result.iterations
            << " iterations, " << (result.converged ? "converged" : "not converged") << ", objective "
            << result.objective_trace.back() << ", gap " << result.gap_trace.back() << "\n";
    if (!result.dropped_bags.empty()) ctx.err << "warning: " << result.dropped_bags.size() << " infeasible bags dropped\n";
    if (!bags.skipped_annotations.empty()) {
      ctx.err << "warning: " << bags.skipped_annotations.size() << " annotations had no candidate pair\n";
    }
  }
};

struct TrainNoisy {
  TrainCommon common;
  double negative_rate = 0.0;

  void add(CLI::App* app) {
    common.add(app);
    app->add_option("--negative-rate", negative_rate, "Fraction of unbagged pairs labelled no-relation")->capture_default_str();
  }

  void run(Context& ctx) {
    const Dataset ds = load_dataset(common.input.manifest);
    const PairSet set = load_pair_set(common.features, ds.vocabulary);
    const auto annotations = split_annotations(ds.split(common.input.split));
    const BagSet bags = build_bags(annotations, set.pairs);
    std::vector<std::size_t> negatives;
    check_usage([&] { negatives = sample_negatives(set.pairs.size(), bags.bags, negative_rate, ctx.globals.seed); });
    const NoisyResult result =
        train_noisy(descriptor_matrix(set.pairs), bags.bags, negatives, ds.vocabulary, {common.lambda, ctx.globals.seed});
    ModelBundle bundle;
    bundle.model = result.model;
    bundle.info = {{"trainer", "noisy"},          {"lambda", common.lambda}, {"seed", ctx.globals.seed},
                   {"bags", bags.bags.size()},    {"negatives", negatives.size()},
                   {"examples", result.examples.size()}};
    common.save(bundle);
    ctx.out << "train-noisy: " << result.examples.size() << " examples from " << bags.bags.size() << " bags\n";
  }
};

struct ScoringOptions {
  std::string model_path;
  std::string features;
  std::string lang;
  std::size_t per_pair = 1;
  bool log_scores = false;

  void add(CLI::App* app, bool require_model = true) {
    auto* m = app->add_option("--model", model_path, "Model file");
    if (require_model) m->required();
    app->add_option("--features", features, "Featurized pair prefix")->required();
    app->add_option("--lang", lang, "Language-score CSV");
    app->add_option("--per-pair", per_pair, "Predicates kept per pair")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_flag("--log-detector-scores", log_scores, "Use log detector scores in the triplet score");
  }

  std::optional<LanguageScoreTable> language(const Vocabulary& vocab) const {
    if (lang.empty()) return std::nullopt;
    return load_language_table(lang, vocab);
  }
};

struct TuneWeights {
  ModelInput input;
  ScoringOptions scoring;
  std::string out;
  std::size_t x = 50;
  double iou_threshold = 0.5;
  std::vector<double> grid_sub{0.0, 0.1, 0.3, 0.5, 1.0};
  std::vector<double> grid_obj{0.0, 0.1, 0.3, 0.5, 1.0};
  std::vector<double> grid_lang{0.0, 0.1, 0.3, 0.5, 1.0};

  void add(CLI::App* app) {
    input.add(app, "val");
    scoring.add(app);
    app->add_option("--x", x, "Recall cutoff")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--iou", iou_threshold, "IoU threshold")->capture_default_str();
    app->add_option("--grid-sub", grid_sub, "Values tried for alpha_sub")->delimiter(',')->capture_default_str();
    app->add_option("--grid-obj", grid_obj, "Values tried for alpha_obj")->delimiter(',')->capture_default_str();
    app->add_option("--grid-lang", grid_lang, "Values tried for alpha_lang")->delimiter(',')->capture_default_str();
    app->add_option("--out", out, "Output model file with the tuned weights")->required();
  }

  void run(Context& ctx) {
    const Dataset ds = load_dataset(input.manifest);
    ModelBundle bundle = load_model(scoring.model_path, &ds.vocabulary);
    const PairSet set = load_pair_set(scoring.features, ds.vocabulary);
    const auto lang = scoring.language(ds.vocabulary);

    std::map<std::string, std::size_t> index;
    std::vector<ValidationImage> images;
    for (const ImageRecord& image : ds.split(input.split).images) {
      index.emplace(image.id, images.size());
      images.push_back({image.id, {}, image.annotations});
    }
    for (const PairCandidate& p : set.pairs) {
      auto it = index.find(p.image_id);
      if (it == index.end()) throw DataError("pair from image '" + p.image_id + "' is not in split '" + input.split + "'");
      images[it->second].pairs.push_back(p);
    }
    ScoreGrid grid{grid_sub, grid_obj, lang ? grid_lang : std::vector<double>{0.0}};
    TuneOptions options{x, iou_threshold, scoring.per_pair, {scoring.log_scores}};
    TuneResult result;
    check_usage([&] {
      for (const auto& c : grid.cells()) c.validate();
      EvalConfig{x, iou_threshold, DetectionMode::relationship, Localization::subject_object, scoring.per_pair, false}
          .validate();
    });
    result = tune_weights(images, bundle.model, grid, lang ? &*lang : nullptr, options);
    bundle.weights = result.weights;
    bundle.info["tuning"] = {{"split", input.split}, {"recall", result.recall}, {"cell_recalls", result.cell_recalls}};
    ensure_parent(out);
    save_model(bundle, out);
    ctx.out << "tune-weights: alpha_sub=" << result.weights.alpha_sub << " alpha_obj=" << result.weights.alpha_obj
            << " alpha_lang=" << result.weights.alpha_lang << " recall@" << x << "=" << result.recall << "\n";
  }
};

json scored_json(const ScoredTriplet& t, const Vocabulary& vocab) {
  return {{"image", t.image_id},
          {"pair", t.pair_id},
          {"subject", vocab.object_name(t.labels.subject)},
          {"predicate", vocab.predicate_name(t.labels.predicate)},
          {"object", vocab.object_name(t.labels.object)},
          {"subject_box", records::box_to_json(t.subject_box)},
          {"object_box", records::box_to_json(t.object_box)},
          {"score", t.score}};
}

ScoredTriplet scored_from_json(const json& j, const Vocabulary& vocab, const std::string& where) {
  try {
    ScoredTriplet t;
    t.image_id = j.at("image").get<std::string>();
    t.pair_id = j.at("pair").get<std::size_t>();
    auto s = vocab.find_object(j.at("subject").get<std::string>());
    auto r = vocab.find_predicate(j.at("predicate").get<std::string>());
    auto o = vocab.find_object(j.at("object").get<std::string>());
    if (!s || !r || !o) throw DataError(where + ": unknown category or predicate name");
    t.labels = {*s, *r, *o};
    t.subject_box = records::box_from_json(j.at("subject_box"), where);
    t.object_box = records::box_from_json(j.at("object_box"), where);
    t.score = j.at("score").get<double>();
    return t;
  } catch (const json::exception& e) {
    throw DataError(where + ": " + e.what());
  }
}

std::vector<ScoredTriplet> predictions_from_model(const Dataset& ds, const ScoringOptions& scoring) {
  const ModelBundle bundle = load_model(scoring.model_path, &ds.vocabulary);
  const PairSet set = load_pair_set(scoring.features, ds.vocabulary);
  const auto lang = scoring.language(ds.vocabulary);
  return score_pairs(set.pairs, bundle.model, bundle.weights, scoring.per_pair, lang ? &*lang : nullptr,
                     {scoring.log_scores});
}

struct Score {
  std::string manifest;
  ScoringOptions scoring;
  std::string out;

  void add(CLI::App* app) {
    app->add_option("--manifest", manifest, "Dataset manifest.json (for the vocabulary)")->required();
    scoring.add(app);
    app->add_option("--out", out, "Output predictions JSON-lines file")->required();
  }

  void run(Context& ctx) {
    const Dataset ds = load_dataset(manifest);
    const auto preds = predictions_from_model(ds, scoring);
    std::ostringstream text;
    for (const ScoredTriplet& t : preds) text << scored_json(t, ds.vocabulary).dump() << "\n";
    write_text(out, text.str());
    ctx.out << "score: " << preds.size() << " predictions\n";
  }
};

struct EvalRecall {
  ModelInput input;
  ScoringOptions scoring;
  std::string predictions;
  std::string mode = "relationship";
  std::vector<std::size_t> xs{50, 100};
  double iou_threshold = 0.5;
  std::vector<std::size_t> topk;
  std::string report;

  void add(CLI::App* app) {
    input.add(app, "test");
    scoring.add(app, false);
    app->remove_option(app->get_option("--features"));
    app->add_option("--features", scoring.features, "Featurized pair prefix");
    app->add_option("--predictions", predictions, "Predictions JSON-lines file (instead of --model/--features)");
    app->add_option("--mode", mode, "Detection mode")
        ->check(CLI::IsMember({"predicate", "phrase", "relationship"}))
        ->capture_default_str();
    app->add_option("--x", xs, "Recall cutoffs")->delimiter(',')->capture_default_str();
    app->add_option("--iou", iou_threshold, "IoU threshold")->capture_default_str();
    app->add_option("--topk", topk, "Also report top-k predicate accuracy on annotated pairs")->delimiter(',');
    app->add_option("--report", report, "Write the report as JSON");
  }

  void run(Context& ctx) {
    if (predictions.empty() == (scoring.model_path.empty() || scoring.features.empty())) {
      throw UsageError("give either --predictions or both --model and --features");
    }
    if (!topk.empty() && scoring.model_path.empty()) throw UsageError("--topk needs --model and --features");
    std::vector<EvalConfig> configs;
    for (std::size_t x : xs) {
      EvalConfig c{x, iou_threshold, parse_detection_mode(mode), Localization::subject_object, scoring.per_pair, false};
      check_usage([&] { c.validate(); });
      configs.push_back(c);
    }
    const Dataset ds = load_dataset(input.manifest);
    const auto gt = split_annotations(ds.split(input.split));
    std::vector<ScoredTriplet> preds;
    if (!predictions.empty()) {
      std::ifstream in(predictions);
      if (!in) throw DataError(predictions + ": cannot open");
      std::string line;
      for (std::size_t n = 1; std::getline(in, line); ++n) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = predictions + ":" + std::to_string(n);
        preds.push_back(scored_from_json(records::parse_line(line, where), ds.vocabulary, where));
      }
    } else {
      preds = predictions_from_model(ds, scoring);
    }

    std::vector<EvalReport> reports;
    for (const EvalConfig& c : configs) reports.push_back(recall_at_x(preds, gt, c));
    if (!topk.empty()) {
      const ModelBundle bundle = load_model(scoring.model_path, &ds.vocabulary);
      const PairSet set = load_pair_set(scoring.features, ds.vocabulary);
      if (set.labels.empty()) throw DataError(scoring.features + ": top-k accuracy needs annotated pairs");
      std::vector<std::vector<PredicateIndex>> ranked;
      for (const PairCandidate& p : set.pairs) {
        std::vector<PredicateIndex> r;
        for (const auto& [idx, score] : predict_relations(p.descriptor->full(), bundle.model, ds.vocabulary.predicate_count())) {
          r.push_back(idx);
        }
        ranked.push_back(std::move(r));
      }
      for (std::size_t k : topk) reports.push_back(topk_accuracy(ranked, set.labels, k));
    }
    ctx.out << format_report_table(reports);
    if (!report.empty()) {
      json j = json::array();
      for (const auto& r : reports) j.push_back(report_json(r));
      write_text(report, j.dump(2) + "\n");
    }
  }
};

struct EvalRetrieval {
  ModelInput input;
  ScoringOptions scoring;
  std::vector<std::string> localizations;
  double iou_threshold = 0.3;
  bool suppress = false;
  bool interpolated = false;
  std::string report;

  void add(CLI::App* app) {
    input.add(app, "test");
    scoring.add(app);
    app->add_option("--localization", localizations, "gt, union, subj, subj_obj (default: gt for annotated pairs, "
                                                     "otherwise union,subj,subj_obj)")
        ->delimiter(',');
    app->add_option("--iou", iou_threshold, "IoU threshold")->capture_default_str();
    app->add_flag("--suppress-no-relation", suppress, "Drop pairs whose best class is no-relation");
    app->add_flag("--interpolated", interpolated, "11-point interpolated AP");
    app->add_option("--report", report, "Write the report as JSON");
  }

  void run(Context& ctx) {
    std::vector<Localization> locs;
    check_usage([&] {
      for (const auto& l : localizations) locs.push_back(parse_localization(l));
      EvalConfig{50, iou_threshold, DetectionMode::relationship, Localization::union_box, 1, interpolated}.validate();
    });
    const Dataset ds = load_dataset(input.manifest);
    const ModelBundle bundle = load_model(scoring.model_path, &ds.vocabulary);
    const PairSet set = load_pair_set(scoring.features, ds.vocabulary);
    const auto lang = scoring.language(ds.vocabulary);
    const bool with_gt = set.kind == "gt";
    if (locs.empty()) {
      locs = with_gt ? std::vector<Localization>{Localization::gt}
                     : std::vector<Localization>{Localization::union_box, Localization::subject, Localization::subject_object};
    }
    if (suppress && !ds.vocabulary.has_no_relation()) throw UsageError("--suppress-no-relation needs the no-relation class");

    RetrievalOptions options;
    // Annotated pairs are ranked by the relation score alone.
    options.weights = with_gt ? ScoreWeights{} : bundle.weights;
    options.language = with_gt || !lang ? nullptr : &*lang;
    options.score = {scoring.log_scores};
    options.suppress_no_relation = suppress;
    const auto queries = build_retrieval_queries(set.pairs, split_annotations(ds.split(input.split)), bundle.model, options);

    std::vector<EvalReport> reports;
    for (Localization l : locs) {
      EvalConfig c;
      c.localization = l;
      c.iou_threshold = iou_threshold;
      c.interpolated_ap = interpolated;
      reports.push_back(retrieval_map(queries, c));
    }
    ctx.out << format_report_table(reports);
    if (!reports.empty() && !reports.front().excluded.empty()) {
      ctx.err << "note: " << reports.front().excluded.size() << " queries without positives excluded\n";
    }
    if (!report.empty()) {
      json j = json::array();
      for (const auto& r : reports) j.push_back(report_json(r));
      write_text(report, j.dump(2) + "\n");
    }
  }
};

struct Synth {
  std::string preset = "planted-bags";
  std::string out;
  PlantedDatasetConfig config;

  void add(CLI::App* app) {
    app->add_option("--preset", preset, "Synthetic benchmark")->check(CLI::IsMember({"planted-bags"}))->capture_default_str();
    app->add_option("--train-images", config.train_images, "Training images")->capture_default_str();
    app->add_option("--val-images", config.val_images, "Validation images")->capture_default_str();
    app->add_option("--test-images", config.test_images, "Test images")->capture_default_str();
    app->add_option("--feature-dim", config.feature_dim, "Appearance feature dimension")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app->add_option("--out", out, "Output dataset directory")->required();
  }

  void run(Context& ctx) {
    config.seed = ctx.globals.seed;
    const Dataset ds = make_planted_dataset(config);
    const fs::path manifest = save_dataset(ds, out);
    ctx.out << "synth: wrote " << manifest.string() << " (" << ds.features.rows() << " feature rows)\n";
  }
};

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Visual relation classifiers from detections under full or weak supervision"};
  app.name("vrel");
  app.require_subcommand(1);
  app.set_config("--config", "", "Read options from a TOML/INI file ([subcommand] sections)");
  Globals globals;
  app.add_option("--seed", globals.seed, "Random seed")->capture_default_str();
  app.add_option("--threads", globals.threads, "Worker threads (0 = all cores)")->capture_default_str();

  FitGmm fit_gmm_cmd;
  FitPca fit_pca_cmd;
  Featurize featurize_cmd;
  TrainFull train_full_cmd;
  TrainWeak train_weak_cmd;
  TrainNoisy train_noisy_cmd;
  TuneWeights tune_cmd;
  Score score_cmd;
  EvalRecall eval_recall_cmd;
  EvalRetrieval eval_retrieval_cmd;
  Synth synth_cmd;

  Context ctx{globals, out, err};
  std::vector<std::pair<CLI::App*, std::function<void()>>> commands;
  auto reg = [&](const char* name, const char* help, auto& cmd) {
    CLI::App* sub = app.add_subcommand(name, help);
    cmd.add(sub);
    commands.emplace_back(sub, [&cmd, &ctx] { cmd.run(ctx); });
  };
  reg("fit-gmm", "Fit the spatial Gaussian mixture", fit_gmm_cmd);
  reg("fit-pca", "Fit the appearance PCA", fit_pca_cmd);
  reg("featurize", "Build pair descriptors", featurize_cmd);
  reg("train-full", "Ridge regression on annotated pairs", train_full_cmd);
  reg("train-weak", "Weakly supervised training from image-level triplets", train_weak_cmd);
  reg("train-noisy", "Noisy-label baseline", train_noisy_cmd);
  reg("tune-weights", "Grid-search the triplet score weights on validation data", tune_cmd);
  reg("score", "Score candidate pairs", score_cmd);
  reg("eval-recall", "Detection recall@x and top-k accuracy", eval_recall_cmd);
  reg("eval-retrieval", "Triplet retrieval mAP", eval_retrieval_cmd);
  reg("synth", "Generate a seeded synthetic dataset", synth_cmd);

  std::vector<const char*> argv{"vrel"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }

  ctx.globals = globals;
  try {
    set_thread_count(globals.threads);
    for (auto& [sub, run] : commands) {
      if (sub->parsed()) run();
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitOk;
}

}  // namespace vrel
