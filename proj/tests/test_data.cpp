#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "imdcl/data.hpp"
#include "imdcl/pipeline.hpp"
#include "imdcl/rng.hpp"

using namespace imdcl;

namespace {

DomainConfig small_domain() {
  DomainConfig cfg;
  cfg.input_dim = 8;
  cfg.source_classes = 6;
  cfg.target_classes = 6;
  cfg.source_samples_per_class = 30;
  cfg.target_samples_per_class = 40;
  return cfg;
}

}  // namespace

TEST_CASE("data: domain pair keeps label spaces disjoint and shapes consistent") {
  const DomainConfig cfg = small_domain();
  const DomainPair pair = make_domain_pair(cfg, 9);

  CHECK(pair.source.num_classes() == cfg.source_classes);
  CHECK(pair.target.num_classes() == cfg.target_classes);
  CHECK(pair.source.class_means.rows() == cfg.source_classes);
  CHECK(pair.source.class_means.cols() == cfg.input_dim);

  std::set<int> source_ids(pair.source.class_ids.begin(), pair.source.class_ids.end());
  std::set<int> target_ids(pair.target.class_ids.begin(), pair.target.class_ids.end());
  CHECK(source_ids.size() == cfg.source_classes);
  CHECK(target_ids.size() == cfg.target_classes);
  for (int id : target_ids) CHECK(source_ids.count(id) == 0);

  // The source domain observes the raw class blobs.
  CHECK(pair.source.transform_a == Matrix::identity(cfg.input_dim));
  CHECK(max_abs(pair.source.transform_b) == 0.0);
  CHECK(pair.source.noise_sigma == 0.0);

  CHECK(pair.source_data.rows() == cfg.source_classes * cfg.source_samples_per_class);
  CHECK(pair.source_data.x.cols() == cfg.input_dim);
}

TEST_CASE("data: severity zero is a pure task shift") {
  DomainConfig cfg = small_domain();
  cfg.shift_severity = 0.0;
  const DomainPair pair = make_domain_pair(cfg, 10);
  CHECK(pair.target.transform_a == Matrix::identity(cfg.input_dim));
  CHECK(max_abs(pair.target.transform_b) == 0.0);
  CHECK(pair.target.noise_sigma == 0.0);
  // Fresh classes still arrive: target means differ from source means.
  CHECK(max_abs_diff(pair.target.class_means,
                     Matrix(pair.target.class_means.rows(), cfg.input_dim, 0.0)) > 0.0);
}

TEST_CASE("data: generation is deterministic in the seed") {
  const DomainConfig cfg = small_domain();
  const DomainPair a = make_domain_pair(cfg, 33);
  const DomainPair b = make_domain_pair(cfg, 33);
  const DomainPair c = make_domain_pair(cfg, 34);

  CHECK(a.source_data.x == b.source_data.x);
  CHECK(a.source_data.y == b.source_data.y);
  CHECK(a.target.class_means == b.target.class_means);
  CHECK(a.target.transform_a == b.target.transform_a);
  CHECK(max_abs_diff(a.target.class_means, c.target.class_means) > 0.0);

  const Dataset ta = materialize(a.target);
  const Dataset tb = materialize(b.target);
  CHECK(ta.x == tb.x);
  CHECK(ta.y == tb.y);
}

TEST_CASE("data: severity only shapes the target transform, never the source") {
  DomainConfig near = small_domain();
  near.shift_severity = 0.2;
  DomainConfig far = small_domain();
  far.shift_severity = 0.8;
  const DomainPair a = make_domain_pair(near, 11);
  const DomainPair b = make_domain_pair(far, 11);
  CHECK(a.source_data.x == b.source_data.x);
  CHECK(a.target.class_means == b.target.class_means);
  CHECK(max_abs_diff(a.target.transform_a, b.target.transform_a) > 0.0);
  CHECK(b.target.noise_sigma > a.target.noise_sigma);
}

TEST_CASE("data: materialize lays classes out in contiguous blocks") {
  const DomainConfig cfg = small_domain();
  const DomainPair pair = make_domain_pair(cfg, 12);
  const Dataset data = materialize(pair.target);

  REQUIRE(data.rows() == cfg.target_classes * cfg.target_samples_per_class);
  for (std::size_t c = 0; c < cfg.target_classes; ++c) {
    for (std::size_t i = 0; i < cfg.target_samples_per_class; ++i) {
      CHECK(data.y[c * cfg.target_samples_per_class + i] == pair.target.class_ids[c]);
    }
  }
  CHECK(data.x.all_finite());
}

TEST_CASE("data: class blocks concentrate around the transformed means") {
  DomainConfig cfg = small_domain();
  cfg.shift_severity = 0.0;  // identity transform, no noise
  cfg.class_cov_scale = 0.2;
  cfg.target_samples_per_class = 200;
  const DomainPair pair = make_domain_pair(cfg, 13);
  const Dataset data = materialize(pair.target);

  for (std::size_t c = 0; c < cfg.target_classes; ++c) {
    for (std::size_t j = 0; j < cfg.input_dim; ++j) {
      double mean = 0.0;
      for (std::size_t i = 0; i < cfg.target_samples_per_class; ++i) {
        mean += data.x(c * cfg.target_samples_per_class + i, j);
      }
      mean /= static_cast<double>(cfg.target_samples_per_class);
      // Sample mean of 200 draws at std 0.2: five sigmas is 0.07.
      CHECK(std::abs(mean - pair.target.class_means(c, j)) < 0.1);
    }
  }
}

TEST_CASE("data: episodes have exact counts, disjoint rows, and local labels") {
  const DomainConfig cfg = small_domain();
  const DomainPair pair = make_domain_pair(cfg, 14);
  const Dataset data = materialize(pair.target);

  const std::size_t way = 4, shot = 2, queries = 5;
  const Episode ep = sample_episode(pair.target, way, shot, queries, 99);

  CHECK(ep.way() == way);
  CHECK(ep.shot() == shot);
  CHECK(ep.queries_per_class() == queries);
  REQUIRE(ep.support_count() == way * shot);
  REQUIRE(ep.query_count() == way * queries);
  CHECK(ep.support_x().cols() == cfg.input_dim);

  // Each local label appears exactly `shot` times in the support set.
  std::vector<std::size_t> counts(way, 0);
  for (int y : ep.support_y()) {
    REQUIRE(y >= 0);
    REQUIRE(static_cast<std::size_t>(y) < way);
    ++counts[static_cast<std::size_t>(y)];
  }
  for (std::size_t c = 0; c < way; ++c) CHECK(counts[c] == shot);
  const std::vector<std::size_t> qc = ep.query_class_counts();
  for (std::size_t c = 0; c < way; ++c) CHECK(qc[c] == queries);

  // Sampled classes are distinct target classes.
  std::set<int> classes(ep.sampled_class_ids.begin(), ep.sampled_class_ids.end());
  CHECK(classes.size() == way);
  for (int id : classes) {
    CHECK(std::count(pair.target.class_ids.begin(), pair.target.class_ids.end(), id) == 1);
  }

  // Support and query rows never overlap, and ids map back to the dataset.
  std::set<std::size_t> support_rows(ep.support_row_ids.begin(), ep.support_row_ids.end());
  std::set<std::size_t> query_rows(ep.query_row_ids.begin(), ep.query_row_ids.end());
  CHECK(support_rows.size() == ep.support_count());
  CHECK(query_rows.size() == ep.query_count());
  for (std::size_t r : query_rows) CHECK(support_rows.count(r) == 0);

  // Local support labels follow sampled-class order, consistent with the
  // dataset's global labels at the drawn rows.
  for (std::size_t i = 0; i < ep.support_count(); ++i) {
    const int global = data.y[ep.support_row_ids[i]];
    CHECK(global == ep.sampled_class_ids[static_cast<std::size_t>(ep.support_y()[i])]);
    for (std::size_t j = 0; j < cfg.input_dim; ++j) {
      CHECK(ep.support_x()(i, j) == data.x(ep.support_row_ids[i], j));
    }
  }
}

TEST_CASE("data: episode sampling is deterministic and seed-sensitive") {
  const DomainConfig cfg = small_domain();
  const DomainPair pair = make_domain_pair(cfg, 15);
  const Episode a = sample_episode(pair.target, 3, 1, 4, 7);
  const Episode b = sample_episode(pair.target, 3, 1, 4, 7);
  const Episode c = sample_episode(pair.target, 3, 1, 4, 8);
  CHECK(a.support_x() == b.support_x());
  CHECK(a.query_x() == b.query_x());
  CHECK(a.support_row_ids == b.support_row_ids);
  const bool differs = a.support_row_ids != c.support_row_ids ||
                       a.sampled_class_ids != c.sampled_class_ids;
  CHECK(differs);
}

TEST_CASE("data: episode sampling eventually touches every class") {
  const DomainConfig cfg = small_domain();
  const DomainPair pair = make_domain_pair(cfg, 16);
  std::set<int> seen;
  for (std::uint64_t e = 0; e < 200; ++e) {
    const Episode ep = sample_episode(pair.target, 3, 1, 2, e);
    seen.insert(ep.sampled_class_ids.begin(), ep.sampled_class_ids.end());
  }
  CHECK(seen.size() == cfg.target_classes);
}

TEST_CASE("data: episode construction validates its inputs") {
  const Matrix sx(2, 3), qx(4, 3);
  CHECK_THROWS_AS(Episode::make(sx, {0, 1}, qx, {0, 1, 0, 1}, 2, 2, 2), DimensionError);
  CHECK_THROWS_AS(Episode::make(sx, {0, 2}, qx, {0, 1, 0, 1}, 2, 1, 2), DimensionError);
  CHECK_THROWS_AS(Episode::make(sx, {0, 1}, qx, {0, 1, 0, 5}, 2, 1, 2), DimensionError);
  CHECK_THROWS_AS(sample_episode(DomainPair{}.target, 3, 1, 2, 1), DimensionError);
}

TEST_CASE("data: jitter is additive noise with the advertised scale") {
  Rng rng(17);
  Matrix x(400, 16);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < x.cols(); ++j) x(i, j) = rng.uniform(-1.0, 1.0);
  }
  CHECK(jitter(x, 0.0, 5) == x);
  CHECK(jitter(x, 0.1, 5) == jitter(x, 0.1, 5));
  CHECK(max_abs_diff(jitter(x, 0.1, 5), jitter(x, 0.1, 6)) > 0.0);

  // Mean per-row displacement of sigma * N(0, I_16) is about sigma * sqrt(16).
  const double sigma = 0.25;
  const Matrix moved = jitter(x, sigma, 21);
  double mean_dist = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double d2 = 0.0;
    for (std::size_t j = 0; j < x.cols(); ++j) {
      const double d = moved(i, j) - x(i, j);
      d2 += d * d;
    }
    mean_dist += std::sqrt(d2);
  }
  mean_dist /= static_cast<double>(x.rows());
  const double expect = sigma * std::sqrt(16.0);
  CHECK(std::abs(mean_dist - expect) / expect < 0.1);
}

TEST_CASE("data: severe shift lowers the label-free baseline on matched episodes") {
  // The benchmark's class structure and encoder, with trimmed sample counts
  // so the check stays fast. The encoder must actually fit the source task:
  // an underfit encoder's features are barely source-specific, and then the
  // shift strength stops mattering.
  DomainConfig near;
  near.source_samples_per_class = 50;
  near.target_samples_per_class = 60;
  near.shift_severity = 0.2;
  DomainConfig far = near;
  far.shift_severity = 0.8;

  const DomainPair near_pair = make_domain_pair(near, 41);
  const DomainPair far_pair = make_domain_pair(far, 41);
  // Identical source data (checked above), so one pretraining serves both.
  const ModelDims dims{.input_dim = 16, .hidden = {64, 64}, .feature_dim = 32, .num_classes = 2};
  PretrainConfig pc;
  pc.epochs = 300;
  const PretrainResult pre = pretrain_source(near_pair.source_data, dims, pc, 41);
  CHECK(pre.train_accuracy > 0.9);

  double near_sum = 0.0, far_sum = 0.0;
  const int episodes = 100;
  for (int e = 0; e < episodes; ++e) {
    const auto seed = static_cast<std::uint64_t>(e) + 1000;
    near_sum += nearest_centroid_accuracy(pre.model, sample_episode(near_pair.target, 5, 1, 8, seed));
    far_sum += nearest_centroid_accuracy(pre.model, sample_episode(far_pair.target, 5, 1, 8, seed));
  }
  CHECK(near_sum / episodes > far_sum / episodes);
  CHECK(near_sum / episodes > 0.3);  // comfortably above the 0.2 chance level
}

TEST_CASE("data: CSV round-trip is exact") {
  const DomainConfig cfg = small_domain();
  const DomainPair pair = make_domain_pair(cfg, 19);
  Dataset data = materialize(pair.target);
  data.x(0, 0) = 0.1 + 0.2;  // a value without a short decimal form

  const std::string path =
      (std::filesystem::temp_directory_path() / "imdcl_dataset_roundtrip.csv").string();
  write_dataset_csv(data, path);
  const Dataset back = read_dataset_csv(path);

  CHECK(back.y == data.y);
  REQUIRE(back.x.same_shape(data.x));
  CHECK(back.x == data.x);

  // Header names the class, id, and coordinate columns.
  std::FILE* f = std::fopen(path.c_str(), "r");
  REQUIRE(f != nullptr);
  char line[256];
  REQUIRE(std::fgets(line, sizeof line, f) != nullptr);
  std::fclose(f);
  CHECK(std::string(line).rfind("class,id,x0", 0) == 0);
  std::filesystem::remove(path);
}
