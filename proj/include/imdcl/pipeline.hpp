#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "imdcl/data.hpp"
#include "imdcl/dcl.hpp"
#include "imdcl/losses.hpp"
#include "imdcl/model.hpp"

namespace imdcl {

// Which objectives drive adaptation. Ordered from weakest to strongest
// configuration; the ablation runner walks this ladder.
enum class Method {
  FineTune,           // supervised support loss only
  SIM,                // support loss + IM on the support set, no transduction
  IM,                 // adds the transductive IM phase over support + query
  IM_DCL_Unweighted,  // adds the contrastive phase with all weights forced to 1
  IM_DCL,             // full objective with distance-aware weights
};

enum class LambdaNMode {
  Variable,  // follow the decay schedule epoch by epoch
  FixedMin,  // hold the schedule's final (smallest) value
  FixedMax,  // hold the schedule's initial value (1)
};

std::string to_string(Method m);
std::string to_string(LambdaNMode m);
std::string to_string(WeightVariant v);
std::string to_string(DclMode m);
Method parse_method(const std::string& s);            // throws std::invalid_argument
LambdaNMode parse_lambda_n_mode(const std::string& s);
WeightVariant parse_weight_variant(const std::string& s);
DclMode parse_dcl_mode(const std::string& s);

struct PretrainConfig {
  std::size_t epochs = 300;
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-3;
};

struct PretrainResult {
  SourceModel model;
  double train_accuracy = 0.0;
  double final_loss = 0.0;
};

// Full-batch supervised training of encoder + source head on the source
// dataset. Rejects single-class datasets; aborts with NumericError if the
// loss goes non-finite. Deterministic in (dataset, dims, config, seed).
PretrainResult pretrain_source(const Dataset& source, const ModelDims& dims,
                               const PretrainConfig& config, std::uint64_t seed);

struct AdaptConfig {
  std::size_t epochs = 100;  // two-phase epochs (H)
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-3;
  LossWeights weights{};
  WeightScheme scheme{};
  LambdaNMode lambda_n_mode = LambdaNMode::Variable;
  DclOptions dcl{};
  bool encoder_frozen = false;
  Method method = Method::IM_DCL;
  bool augment = false;        // jitter the support batch each epoch
  double jitter_sigma = 0.1;
  std::uint64_t seed = 0;      // classifier init + jitter stream
};

// One epoch's worth of diagnostics. Phase-2 fields are meaningful only when
// phase2 is true (FineTune and SIM never run the transductive phase).
struct TrajectoryRecord {
  std::size_t epoch = 0;
  double loss_s = 0.0;          // phase-1 objective
  double ce = 0.0;              // its supervised part
  double im_support = 0.0;      // its IM part (0 for FineTune)
  bool phase2 = false;
  double loss_q = 0.0;          // phase-2 objective
  double im_all = 0.0;          // IM over support + query
  double dcl = 0.0;             // contrastive part (0 when inactive)
  double lambda_n_value = 0.0;
  double support_accuracy = 0.0;
};

struct AdaptResult {
  SourceModel model;
  std::vector<TrajectoryRecord> trajectory;
};

// Per-episode adaptation: fresh classifier head, then `epochs` rounds of
// supervised phase 1 on the support batch followed (method permitting) by
// transductive phase 2 on support + query. Query labels are never touched;
// aborts with NumericError on a non-finite loss.
AdaptResult adapt_episode(const SourceModel& pretrained, const Episode& episode,
                          const AdaptConfig& config);

// Query accuracy of the model's softmax argmax (ties resolve to the lowest
// class index). The only reader of query labels besides the centroid probe.
double evaluate(const SourceModel& model, const Episode& episode);

// Label-free-adaptation baseline probe: classify queries by the nearest
// support-class centroid in feature space.
double nearest_centroid_accuracy(const SourceModel& model, const Episode& episode);

struct ExperimentConfig {
  DomainConfig domain;
  std::vector<std::size_t> hidden = {64, 64};
  std::size_t feature_dim = 32;
  PretrainConfig pretrain;
  AdaptConfig adapt;
  std::size_t way = 5;
  std::size_t shot = 1;
  std::size_t queries = 15;
  std::size_t episodes = 100;
  std::uint64_t seed = 1234;  // the single top-level seed
};

struct RunReport {
  std::string method;
  std::size_t episodes = 0;
  std::vector<double> episode_accuracies;
  double mean_accuracy = 0.0;
  double ci95 = 0.0;  // 1.96 * sample std / sqrt(episodes); 0 for one episode
  double wall_time_sec = 0.0;
  // Per-episode trajectories, populated only when requested.
  std::vector<std::vector<TrajectoryRecord>> trajectories;
};

// Domain pair + pretrained encoder, ready for episodes. The source dataset is
// dropped as soon as pretraining finishes: adaptation is source-free by
// construction.
struct PreparedRun {
  DomainSpec target;
  PretrainResult pretrain;
};

PreparedRun prepare_run(const ExperimentConfig& config);

// Adapts and evaluates config.episodes episodes (paired across calls by the
// seed-derived episode streams). jobs > 1 distributes episodes over threads;
// results are identical regardless of jobs.
RunReport run_prepared(const PreparedRun& prepared, const ExperimentConfig& config,
                       std::size_t jobs = 1, bool keep_trajectories = false);

RunReport run_experiment(const ExperimentConfig& config, std::size_t jobs = 1,
                         bool keep_trajectories = false);

// Same domains, same pretrained model, same episode streams for every
// method — only the adaptation objective varies.
std::vector<RunReport> run_ablation(const ExperimentConfig& config,
                                    const std::vector<Method>& methods, std::size_t jobs = 1);

// Paired comparison of lambda_n modes (method forced to IM_DCL).
std::vector<RunReport> run_lambda_study(const ExperimentConfig& config,
                                        const std::vector<LambdaNMode>& modes,
                                        std::size_t jobs = 1,
                                        bool keep_trajectories = false);

// Mean accuracy and 95% half-width over a report list's episodes.
double mean_of(const std::vector<double>& values);
double ci95_of(const std::vector<double>& values);

// Report serialization. The CSV is fully deterministic (fixed-precision
// numbers, no timestamps) so identical runs produce identical bytes; the JSON
// adds wall-time and provenance fields.
void write_report_json(const std::string& path, const std::vector<RunReport>& reports,
                       const std::string& config_echo, const std::string& config_hash);
void write_report_csv(const std::string& path, const std::vector<RunReport>& reports);
void write_trajectory_jsonl(const std::string& path, const RunReport& report);

}  // namespace imdcl
