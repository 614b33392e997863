#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "imdcl/matrix.hpp"

namespace imdcl {

struct SourceModel;
class Episode;

// Evaluation entry points (defined in pipeline.cpp). Declared here because
// they are the only functions granted access to query labels.
double evaluate(const SourceModel& model, const Episode& episode);
double nearest_centroid_accuracy(const SourceModel& model, const Episode& episode);

// Knobs for synthesizing one source/target domain pair.
struct DomainConfig {
  std::size_t input_dim = 16;
  std::size_t source_classes = 20;
  std::size_t target_classes = 10;
  std::size_t source_samples_per_class = 100;
  std::size_t target_samples_per_class = 200;
  double class_mean_scale = 0.6;   // class means ~ uniform(-scale, scale)^d
  double class_cov_scale = 0.3;    // isotropic within-class std deviation
  double shift_severity = 0.2;     // strength of the target domain transform
};

// A materialized domain: Gaussian class blobs pushed through an affine
// domain transform x -> A x + b plus observation noise. The source domain
// uses the identity transform; a target domain at severity 0 differs from
// the source only by its fresh classes (pure task shift).
struct DomainSpec {
  std::size_t input_dim = 0;
  std::vector<int> class_ids;      // global ids; source and target never share
  Matrix class_means;              // num_classes x input_dim
  double class_cov_scale = 0.3;
  Matrix transform_a;              // input_dim x input_dim
  Matrix transform_b;              // 1 x input_dim
  double noise_sigma = 0.0;        // iid observation noise after the transform
  std::size_t samples_per_class = 0;
  std::uint64_t seed = 0;          // sampling stream for materialize()

  std::size_t num_classes() const { return class_ids.size(); }
};

struct Dataset {
  Matrix x;            // rows x input_dim
  std::vector<int> y;  // global class ids, parallel to rows

  std::size_t rows() const { return y.size(); }
};

struct DomainPair {
  DomainSpec source;
  Dataset source_data;
  DomainSpec target;
};

// Builds the paired domains. Source class ids are [0, source_classes);
// target ids continue from there, so the label spaces never intersect.
// Deterministic in (config, seed).
DomainPair make_domain_pair(const DomainConfig& config, std::uint64_t seed);

// Draws the domain's full dataset (samples_per_class rows per class),
// deterministically in spec.seed.
Dataset materialize(const DomainSpec& spec);

// One N-way K-shot episode with Q queries per class. Support labels are
// episode-local (0..N-1, in sampled-class order); query labels use the same
// mapping but are sealed behind Episode::LabelKey so adaptation code cannot
// read them.
class Episode {
 public:
  // Capability token for reading query labels. Only the evaluation functions
  // can mint one, which keeps every loss/adaptation path label-blind at
  // compile time.
  class LabelKey {
    LabelKey() = default;
    friend double imdcl::evaluate(const SourceModel&, const Episode&);
    friend double imdcl::nearest_centroid_accuracy(const SourceModel&, const Episode&);
  };

  static Episode make(Matrix support_x, std::vector<int> support_y, Matrix query_x,
                      std::vector<int> query_y, std::size_t way, std::size_t shot,
                      std::size_t queries_per_class);

  const Matrix& support_x() const { return support_x_; }
  const std::vector<int>& support_y() const { return support_y_; }
  const Matrix& query_x() const { return query_x_; }
  const std::vector<int>& query_labels(LabelKey) const { return query_y_; }

  std::size_t way() const { return way_; }
  std::size_t shot() const { return shot_; }
  std::size_t queries_per_class() const { return queries_per_class_; }
  std::size_t support_count() const { return support_y_.size(); }
  std::size_t query_count() const { return query_x_.rows(); }

  // Per-local-class query row counts; bookkeeping only (each entry equals
  // queries_per_class by construction).
  std::vector<std::size_t> query_class_counts() const;

  // Dataset row ids drawn for support/query, for sampling-hygiene checks.
  std::vector<std::size_t> support_row_ids;
  std::vector<std::size_t> query_row_ids;
  // Global ids of the sampled classes, indexed by episode-local label.
  std::vector<int> sampled_class_ids;

 private:
  Episode() = default;
  Matrix support_x_;
  std::vector<int> support_y_;
  Matrix query_x_;
  std::vector<int> query_y_;
  std::size_t way_ = 0;
  std::size_t shot_ = 0;
  std::size_t queries_per_class_ = 0;
};

// Samples an episode from the domain: `way` distinct classes, then
// shot + queries distinct dataset rows per class (support and query rows
// never overlap). Deterministic in (spec, seed).
Episode sample_episode(const DomainSpec& spec, std::size_t way, std::size_t shot,
                       std::size_t queries, std::uint64_t seed);

// Additive Gaussian perturbation, x + sigma * g. sigma = 0 returns x
// unchanged. Deterministic in seed.
Matrix jitter(const Matrix& x, double sigma, std::uint64_t seed);

// CSV round-trip with header "class,id,x0,...". Doubles are written with 17
// significant digits so re-import reproduces values exactly.
void write_dataset_csv(const Dataset& dataset, const std::string& path);
Dataset read_dataset_csv(const std::string& path);

}  // namespace imdcl
