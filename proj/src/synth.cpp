#include "vrel/synth.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "vrel/errors.hpp"

namespace vrel {

namespace {

Eigen::VectorXd gaussian(std::mt19937_64& rng, Eigen::Index n, double sigma) {
  std::normal_distribution<double> nd(0.0, sigma);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = nd(rng);
  return v;
}

double uniform(std::mt19937_64& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

std::size_t uniform_index(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

}  // namespace

PlantedBenchmark make_planted_benchmark(const PlantedConfig& c) {
  if (c.predicates < 2 || c.images == 0 || c.min_bag < 1 || c.max_bag < c.min_bag || c.dim == 0) {
    throw InputError("invalid planted benchmark configuration");
  }
  std::mt19937_64 rng(c.seed);
  const auto dim = static_cast<Eigen::Index>(c.dim);
  const auto R = c.predicates;

  std::vector<std::string> names;
  for (std::size_t r = 0; r < R; ++r) names.push_back("p" + std::to_string(r));
  PlantedBenchmark b;
  b.vocabulary = Vocabulary({"thing"}, names, false);

  std::vector<Eigen::VectorXd> centers;
  for (std::size_t r = 0; r < R; ++r) centers.push_back(gaussian(rng, dim, c.center_scale));
  auto sample = [&](std::size_t cluster) -> Eigen::VectorXd {
    if (cluster == PlantedBenchmark::kBackground) return gaussian(rng, dim, c.background_scale);
    return centers[cluster] + gaussian(rng, dim, c.noise);
  };

  std::vector<Eigen::VectorXd> rows;
  for (std::size_t image = 0; image < c.images; ++image) {
    const PredicateIndex label = image % R;
    const std::size_t size = uniform_index(rng, c.min_bag, c.max_bag);
    const std::size_t planted = uniform_index(rng, 0, size - 1);
    Bag bag{{}, label, "img" + std::to_string(image)};
    for (std::size_t k = 0; k < size; ++k) {
      std::size_t cluster = label;
      if (k != planted) {
        if (uniform(rng, 0.0, 1.0) < c.cluster_distractor_rate) {
          cluster = (label + uniform_index(rng, 1, R - 1)) % R;
        } else {
          cluster = PlantedBenchmark::kBackground;
        }
      }
      bag.rows.push_back(rows.size());
      if (k == planted) b.planted_rows.push_back(rows.size());
      b.row_cluster.push_back(cluster);
      b.row_block.push_back(image);
      b.row_priority.push_back(uniform(rng, 0.25, 1.0));
      rows.push_back(sample(cluster));
    }
    b.bags.push_back(std::move(bag));
  }

  b.descriptors.resize(static_cast<Eigen::Index>(rows.size()), dim + 1);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    b.descriptors.row(static_cast<Eigen::Index>(i)) << rows[i].transpose(), c.bias;
  }
  b.test_descriptors.resize(static_cast<Eigen::Index>(R * c.test_per_predicate), dim + 1);
  for (std::size_t i = 0; i < R * c.test_per_predicate; ++i) {
    const PredicateIndex label = i % R;
    b.test_descriptors.row(static_cast<Eigen::Index>(i)) << sample(label).transpose(), c.bias;
    b.test_labels.push_back(label);
  }
  return b;
}

// ---------------------------------------------------------------------------------------------

namespace {

constexpr double kImageW = 1000.0;
constexpr double kImageH = 800.0;

const std::vector<std::string> kObjects{"person", "dog", "car", "table", "chair", "bottle", "bicycle", "tree"};
const std::vector<std::string> kPredicates{"left of", "right of", "above", "below", "on"};

// Object box for the subject box under a predicate template (image y grows downwards).
BoundingBox place_object(std::mt19937_64& rng, const BoundingBox& s, PredicateIndex predicate) {
  const double w = uniform(rng, 60.0, 120.0);
  const double h = uniform(rng, 60.0, 120.0);
  switch (predicate) {
    case 0:  // subject left of object
      return BoundingBox::from_center(s.x() + 0.5 * s.w() + uniform(rng, 0.1, 0.5) * s.w() + 0.5 * w,
                                      s.y() + uniform(rng, -0.2, 0.2) * s.h(), w, h);
    case 1:
      return BoundingBox::from_center(s.x() - 0.5 * s.w() - uniform(rng, 0.1, 0.5) * s.w() - 0.5 * w,
                                      s.y() + uniform(rng, -0.2, 0.2) * s.h(), w, h);
    case 2:  // subject above object
      return BoundingBox::from_center(s.x() + uniform(rng, -0.2, 0.2) * s.w(),
                                      s.y() + 0.5 * s.h() + uniform(rng, 0.1, 0.5) * s.h() + 0.5 * h, w, h);
    case 3:
      return BoundingBox::from_center(s.x() + uniform(rng, -0.2, 0.2) * s.w(),
                                      s.y() - 0.5 * s.h() - uniform(rng, 0.1, 0.5) * s.h() - 0.5 * h, w, h);
    default: {  // subject on a wider supporting object
      const double wo = uniform(rng, 2.0, 3.0) * s.w();
      const double ho = uniform(rng, 0.6, 1.0) * s.h();
      return BoundingBox::from_center(s.x() + uniform(rng, -0.3, 0.3) * wo, s.y() + 0.5 * s.h() + 0.4 * ho, wo, ho);
    }
  }
}

BoundingBox random_box(std::mt19937_64& rng) {
  const double w = uniform(rng, 50.0, 130.0);
  const double h = uniform(rng, 50.0, 130.0);
  return BoundingBox::from_center(uniform(rng, 0.5 * w, kImageW - 0.5 * w), uniform(rng, 0.5 * h, kImageH - 0.5 * h), w,
                                  h);
}

struct DatasetBuilder {
  const PlantedDatasetConfig& config;
  std::mt19937_64 rng;
  std::vector<Eigen::VectorXd> category_means;
  std::vector<float> features;

  std::size_t add_feature(CategoryIndex category) {
    const Eigen::VectorXd v = category_means[category] + gaussian(rng, category_means[category].size(), 0.5);
    for (Eigen::Index i = 0; i < v.size(); ++i) features.push_back(static_cast<float>(v(i)));
    return features.size() / config.feature_dim - 1;
  }

  bool fits(const std::vector<Detection>& dets, const BoundingBox& box, CategoryIndex category) const {
    return std::none_of(dets.begin(), dets.end(),
                        [&](const Detection& d) { return d.category == category && iou(d.box, box) > 0.1; });
  }

  void add_decoys(ImageRecord& image, CategoryIndex category, std::size_t count) {
    for (std::size_t added = 0, attempts = 0; added < count && attempts < 1000; ++attempts) {
      const BoundingBox box = random_box(rng);
      if (!fits(image.detections, box, category)) continue;
      image.detections.push_back({box, category, uniform(rng, 0.5, 1.0), image.id, add_feature(category)});
      ++added;
    }
  }

  ImageRecord make_image(const std::string& id) {
    ImageRecord image{id, {}, {}};
    std::vector<CategoryIndex> cats(kObjects.size());
    std::iota(cats.begin(), cats.end(), 0);
    std::shuffle(cats.begin(), cats.end(), rng);
    const std::size_t annotations = uniform_index(rng, 1, 2);
    for (std::size_t a = 0; a < annotations; ++a) {
      const CategoryIndex sc = cats[2 * a];
      const CategoryIndex oc = cats[2 * a + 1];
      const PredicateIndex r = uniform_index(rng, 0, kPredicates.size() - 1);
      std::size_t ns = 0;
      std::size_t no = 0;
      do {
        ns = uniform_index(rng, 1, 4);
        no = uniform_index(rng, 1, 3);
      } while (ns * no < 3);

      BoundingBox s;
      BoundingBox o;
      for (int attempt = 0;; ++attempt) {
        s = BoundingBox::from_center(uniform(rng, 250.0, 750.0), uniform(rng, 200.0, 600.0), uniform(rng, 60.0, 120.0),
                                     uniform(rng, 60.0, 120.0));
        o = place_object(rng, s, r);
        if ((fits(image.detections, s, sc) && fits(image.detections, o, oc)) || attempt > 1000) break;
      }
      const std::size_t sf = add_feature(sc);
      const std::size_t of = add_feature(oc);
      image.detections.push_back({s, sc, uniform(rng, 0.5, 1.0), id, sf});
      image.detections.push_back({o, oc, uniform(rng, 0.5, 1.0), id, of});
      image.annotations.push_back({id, sc, r, oc, s, o, sf, of});
      add_decoys(image, sc, ns - 1);
      add_decoys(image, oc, no - 1);
    }
    add_decoys(image, cats[4], uniform_index(rng, 0, 1));
    std::shuffle(image.detections.begin(), image.detections.end(), rng);
    return image;
  }
};

}  // namespace

Dataset make_planted_dataset(const PlantedDatasetConfig& config) {
  if (config.feature_dim == 0) throw InputError("feature dimension must be positive");
  DatasetBuilder builder{config, std::mt19937_64(config.seed), {}, {}};
  for (std::size_t c = 0; c < kObjects.size(); ++c) {
    builder.category_means.push_back(gaussian(builder.rng, static_cast<Eigen::Index>(config.feature_dim), 1.0));
  }
  Dataset ds;
  ds.vocabulary = Vocabulary(kObjects, kPredicates, true);
  const std::pair<const char*, std::size_t> splits[] = {
      {"train", config.train_images}, {"val", config.val_images}, {"test", config.test_images}};
  for (const auto& [name, count] : splits) {
    DatasetSplit split{name, {}};
    for (std::size_t i = 0; i < count; ++i) split.images.push_back(builder.make_image(std::string(name) + "_" + std::to_string(i)));
    ds.splits.push_back(std::move(split));
  }
  const std::size_t rows = builder.features.size() / config.feature_dim;
  ds.features = FeatureStore(rows, config.feature_dim, std::move(builder.features));
  return ds;
}

}  // namespace vrel
