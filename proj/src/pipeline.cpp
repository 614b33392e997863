#include "imdcl/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <stdexcept>
#include <thread>

#include <nlohmann/json.hpp>

#include "imdcl/rng.hpp"
#include "imdcl/version.hpp"

namespace imdcl {

std::string to_string(Method m) {
  switch (m) {
    case Method::FineTune: return "FineTune";
    case Method::SIM: return "SIM";
    case Method::IM: return "IM";
    case Method::IM_DCL_Unweighted: return "IM_DCL_Unweighted";
    case Method::IM_DCL: return "IM_DCL";
  }
  return "?";
}

std::string to_string(LambdaNMode m) {
  switch (m) {
    case LambdaNMode::Variable: return "Variable";
    case LambdaNMode::FixedMin: return "FixedMin";
    case LambdaNMode::FixedMax: return "FixedMax";
  }
  return "?";
}

std::string to_string(WeightVariant v) {
  switch (v) {
    case WeightVariant::ReverseOrder: return "ReverseOrder";
    case WeightVariant::Opposite: return "Opposite";
    case WeightVariant::NonlinearLogistic: return "NonlinearLogistic";
  }
  return "?";
}

std::string to_string(DclMode m) {
  return m == DclMode::Full ? "Full" : "TopK";
}

namespace {

[[noreturn]] void bad_enum(const std::string& what, const std::string& s,
                           const std::string& valid) {
  throw std::invalid_argument(what + ": '" + s + "' is not one of " + valid);
}

}  // namespace

Method parse_method(const std::string& s) {
  for (Method m : {Method::FineTune, Method::SIM, Method::IM, Method::IM_DCL_Unweighted,
                   Method::IM_DCL}) {
    if (s == to_string(m)) return m;
  }
  bad_enum("method", s, "FineTune|SIM|IM|IM_DCL_Unweighted|IM_DCL");
}

LambdaNMode parse_lambda_n_mode(const std::string& s) {
  for (LambdaNMode m : {LambdaNMode::Variable, LambdaNMode::FixedMin, LambdaNMode::FixedMax}) {
    if (s == to_string(m)) return m;
  }
  bad_enum("lambda_n_mode", s, "Variable|FixedMin|FixedMax");
}

WeightVariant parse_weight_variant(const std::string& s) {
  for (WeightVariant v : {WeightVariant::ReverseOrder, WeightVariant::Opposite,
                          WeightVariant::NonlinearLogistic}) {
    if (s == to_string(v)) return v;
  }
  bad_enum("scheme", s, "ReverseOrder|Opposite|NonlinearLogistic");
}

DclMode parse_dcl_mode(const std::string& s) {
  for (DclMode m : {DclMode::Full, DclMode::TopK}) {
    if (s == to_string(m)) return m;
  }
  bad_enum("dcl_mode", s, "Full|TopK");
}

namespace {

// Argmax with ties resolved to the lowest index.
std::size_t argmax_row(std::span<const double> row) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < row.size(); ++j) {
    if (row[j] > row[best]) best = j;
  }
  return best;
}

double accuracy_against(const Matrix& logits, const std::vector<int>& labels) {
  std::size_t correct = 0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    if (argmax_row(logits.row_span(i)) == static_cast<std::size_t>(labels[i])) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

Matrix vstack(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() + b.rows(), a.cols());
  std::copy(a.data(), a.data() + a.size(), out.data());
  std::copy(b.data(), b.data() + b.size(), out.data() + a.size());
  return out;
}

void require_finite_loss(double value, const char* where) {
  if (!std::isfinite(value)) {
    throw NumericError(std::string(where) + ": loss diverged to a non-finite value");
  }
}

}  // namespace

PretrainResult pretrain_source(const Dataset& source, const ModelDims& dims,
                               const PretrainConfig& config, std::uint64_t seed) {
  if (source.rows() == 0) throw DimensionError("pretrain_source: empty dataset");
  if (source.x.cols() != dims.input_dim) {
    throw DimensionError("pretrain_source: dataset width does not match input_dim");
  }

  // Map global class ids onto contiguous head indices.
  std::map<int, int> head_index;
  for (int y : source.y) head_index.emplace(y, 0);
  if (head_index.size() < 2) {
    throw DimensionError("pretrain_source: dataset must contain at least two classes");
  }
  int next = 0;
  for (auto& [id, idx] : head_index) idx = next++;
  std::vector<int> labels(source.rows());
  for (std::size_t i = 0; i < source.rows(); ++i) labels[i] = head_index.at(source.y[i]);

  ModelDims full = dims;
  full.num_classes = head_index.size();
  PretrainResult result;
  result.model = init_model(seed, full);

  SgdState opt{config.lr, config.momentum, config.weight_decay, {}};
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    BoundModel bm = bind_model(result.model, true);
    Var loss = ce_loss(forward_logits(bm, constant(source.x)), labels);
    result.final_loss = scalar_value(loss);
    require_finite_loss(result.final_loss, "pretrain_source");
    backward(loss);
    auto bindings = model_bindings(result.model, bm);
    sgd_step(opt, bindings);
  }

  result.train_accuracy = accuracy_against(forward_logits(result.model, source.x), labels);
  return result;
}

AdaptResult adapt_episode(const SourceModel& pretrained, const Episode& episode,
                          const AdaptConfig& config) {
  validate(config.weights);

  AdaptResult result;
  result.model = pretrained;
  result.model.encoder_frozen = config.encoder_frozen;
  reinit_classifier(result.model, episode.way(), derive_seed(config.seed, "classifier"));
  SourceModel& model = result.model;

  const bool transductive = config.method == Method::IM || config.method == Method::IM_DCL ||
                            config.method == Method::IM_DCL_Unweighted;
  const bool contrastive =
      config.method == Method::IM_DCL || config.method == Method::IM_DCL_Unweighted;
  const bool learn_logistic = config.method == Method::IM_DCL && !config.dcl.unweighted &&
                              config.scheme.variant == WeightVariant::NonlinearLogistic;

  // The two phases alternate objectives, so each keeps its own momentum
  // buffers; both persist across epochs.
  SgdState phase1_opt{config.lr, config.momentum, config.weight_decay, {}};
  SgdState phase2_opt{config.lr, config.momentum, config.weight_decay, {}};

  // Logistic scheme parameters live alongside the model during adaptation.
  Matrix k_val(1, 1, config.scheme.logistic_k);
  Matrix x0_val(1, 1, config.scheme.logistic_x0);

  const Matrix all_x = vstack(episode.support_x(), episode.query_x());
  const LambdaNSchedule schedule{config.epochs};

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    TrajectoryRecord rec;
    rec.epoch = epoch;
    switch (config.lambda_n_mode) {
      case LambdaNMode::Variable: rec.lambda_n_value = lambda_n(schedule, epoch); break;
      case LambdaNMode::FixedMin: rec.lambda_n_value = lambda_n(schedule, config.epochs); break;
      case LambdaNMode::FixedMax: rec.lambda_n_value = lambda_n(schedule, 0); break;
    }

    // Phase 1: supervised inductive step on the support batch.
    {
      const Matrix sx = config.augment
                            ? jitter(episode.support_x(), config.jitter_sigma,
                                     derive_seed(config.seed, "jitter", epoch))
                            : episode.support_x();
      BoundModel bm = bind_model(model, true);
      Var logits = forward_logits(bm, constant(sx));
      Var ce = ce_loss(logits, episode.support_y());
      rec.ce = scalar_value(ce);
      Var loss_s = ce;
      if (config.method != Method::FineTune) {
        Var im_s = im_loss(logits, config.weights);
        rec.im_support = scalar_value(im_s);
        loss_s = add(ce, scale(im_s, config.weights.lambda_im));
      }
      rec.loss_s = scalar_value(loss_s);
      require_finite_loss(rec.loss_s, "adapt_episode phase 1");
      backward(loss_s);
      auto bindings = model_bindings(model, bm);
      sgd_step(phase1_opt, bindings);
    }

    // Phase 2: unsupervised transductive step on support + query.
    if (transductive) {
      rec.phase2 = true;
      BoundModel bm = bind_model(model, true);
      Var logits = forward_logits(bm, constant(all_x));
      Var im_all = im_loss(logits, config.weights);
      rec.im_all = scalar_value(im_all);
      Var loss_q = im_all;

      LogisticVars logistic;
      bool logistic_bound = false;
      if (contrastive) {
        const MemoryBank bank = refresh_bank(model, episode);
        DclOptions options = config.dcl;
        options.unweighted =
            options.unweighted || config.method == Method::IM_DCL_Unweighted;
        WeightScheme scheme = config.scheme;
        scheme.logistic_k = k_val(0, 0);
        scheme.logistic_x0 = x0_val(0, 0);
        const LogisticVars* bound = nullptr;
        if (learn_logistic) {
          logistic.k = param(k_val);
          logistic.x0 = param(x0_val);
          bound = &logistic;
          logistic_bound = true;
        }
        Var dcl = dcl_loss(softmax_rows(logits), bank, scheme, rec.lambda_n_value, options,
                           bound);
        rec.dcl = scalar_value(dcl);
        loss_q = add(im_all, scale(dcl, config.weights.lambda_dcl));
      }

      rec.loss_q = scalar_value(loss_q);
      require_finite_loss(rec.loss_q, "adapt_episode phase 2");
      backward(loss_q);
      auto bindings = model_bindings(model, bm);
      if (logistic_bound) {
        bindings.push_back({&k_val, &logistic.k->grad, false});
        bindings.push_back({&x0_val, &logistic.x0->grad, false});
      }
      sgd_step(phase2_opt, bindings);
    }

    rec.support_accuracy =
        accuracy_against(forward_logits(model, episode.support_x()), episode.support_y());
    result.trajectory.push_back(rec);
  }

  return result;
}

double evaluate(const SourceModel& model, const Episode& episode) {
  const Matrix probs = softmax_rows(forward_logits(model, episode.query_x()));
  const std::vector<int>& labels = episode.query_labels(Episode::LabelKey{});
  std::size_t correct = 0;
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    if (argmax_row(probs.row_span(i)) == static_cast<std::size_t>(labels[i])) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

double nearest_centroid_accuracy(const SourceModel& model, const Episode& episode) {
  const Matrix support_f = forward_features(model, episode.support_x());
  const Matrix query_f = forward_features(model, episode.query_x());
  const std::size_t way = episode.way();
  const std::size_t d = support_f.cols();

  Matrix centroids(way, d, 0.0);
  std::vector<std::size_t> counts(way, 0);
  for (std::size_t i = 0; i < support_f.rows(); ++i) {
    const auto c = static_cast<std::size_t>(episode.support_y()[i]);
    for (std::size_t j = 0; j < d; ++j) centroids(c, j) += support_f(i, j);
    ++counts[c];
  }
  for (std::size_t c = 0; c < way; ++c) {
    for (std::size_t j = 0; j < d; ++j) centroids(c, j) /= static_cast<double>(counts[c]);
  }

  const std::vector<int>& labels = episode.query_labels(Episode::LabelKey{});
  std::size_t correct = 0;
  for (std::size_t i = 0; i < query_f.rows(); ++i) {
    std::size_t best = 0;
    double best_dist = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < way; ++c) {
      double dist = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = query_f(i, j) - centroids(c, j);
        dist += diff * diff;
      }
      if (dist < best_dist) {
        best_dist = dist;
        best = c;
      }
    }
    if (best == static_cast<std::size_t>(labels[i])) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

double mean_of(const std::vector<double>& values) {
  if (values.empty()) return 0.0;
  return std::accumulate(values.begin(), values.end(), 0.0) /
         static_cast<double>(values.size());
}

double ci95_of(const std::vector<double>& values) {
  if (values.size() < 2) return 0.0;
  const double mean = mean_of(values);
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double std_dev = std::sqrt(ss / static_cast<double>(values.size() - 1));
  return 1.96 * std_dev / std::sqrt(static_cast<double>(values.size()));
}

PreparedRun prepare_run(const ExperimentConfig& config) {
  DomainPair pair = make_domain_pair(config.domain, derive_seed(config.seed, "domain"));
  ModelDims dims{config.domain.input_dim, config.hidden, config.feature_dim,
                 config.domain.source_classes};
  PreparedRun prepared;
  prepared.pretrain = pretrain_source(pair.source_data, dims, config.pretrain,
                                      derive_seed(config.seed, "pretrain"));
  prepared.target = std::move(pair.target);
  // pair (and the source dataset inside it) dies here: episodes only ever see
  // the pretrained weights and the target domain.
  return prepared;
}

RunReport run_prepared(const PreparedRun& prepared, const ExperimentConfig& config,
                       std::size_t jobs, bool keep_trajectories) {
  if (config.episodes == 0) throw DimensionError("run_prepared: episodes must be positive");
  const auto start = std::chrono::steady_clock::now();

  RunReport report;
  report.method = to_string(config.adapt.method);
  report.episodes = config.episodes;
  report.episode_accuracies.resize(config.episodes, 0.0);
  if (keep_trajectories) report.trajectories.resize(config.episodes);

  auto run_one = [&](std::size_t e) {
    Episode episode = sample_episode(prepared.target, config.way, config.shot, config.queries,
                                     derive_seed(config.seed, "episode", e));
    AdaptConfig adapt = config.adapt;
    adapt.seed = derive_seed(config.seed, "adapt", e);
    AdaptResult adapted = adapt_episode(prepared.pretrain.model, episode, adapt);
    report.episode_accuracies[e] = evaluate(adapted.model, episode);
    if (keep_trajectories) report.trajectories[e] = std::move(adapted.trajectory);
  };

  const std::size_t workers = std::max<std::size_t>(1, std::min(jobs, config.episodes));
  if (workers == 1) {
    for (std::size_t e = 0; e < config.episodes; ++e) run_one(e);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        while (true) {
          const std::size_t e = next.fetch_add(1);
          if (e >= config.episodes) return;
          try {
            run_one(e);
          } catch (...) {
            std::lock_guard<std::mutex> lock(failure_mutex);
            if (!failure) failure = std::current_exception();
            return;
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
  }

  report.mean_accuracy = mean_of(report.episode_accuracies);
  report.ci95 = ci95_of(report.episode_accuracies);
  report.wall_time_sec =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

RunReport run_experiment(const ExperimentConfig& config, std::size_t jobs,
                         bool keep_trajectories) {
  return run_prepared(prepare_run(config), config, jobs, keep_trajectories);
}

std::vector<RunReport> run_ablation(const ExperimentConfig& config,
                                    const std::vector<Method>& methods, std::size_t jobs) {
  const PreparedRun prepared = prepare_run(config);
  std::vector<RunReport> reports;
  reports.reserve(methods.size());
  for (Method m : methods) {
    ExperimentConfig variant = config;
    variant.adapt.method = m;
    reports.push_back(run_prepared(prepared, variant, jobs));
  }
  return reports;
}

std::vector<RunReport> run_lambda_study(const ExperimentConfig& config,
                                        const std::vector<LambdaNMode>& modes, std::size_t jobs,
                                        bool keep_trajectories) {
  const PreparedRun prepared = prepare_run(config);
  std::vector<RunReport> reports;
  reports.reserve(modes.size());
  for (LambdaNMode mode : modes) {
    ExperimentConfig variant = config;
    variant.adapt.method = Method::IM_DCL;
    variant.adapt.lambda_n_mode = mode;
    RunReport r = run_prepared(prepared, variant, jobs, keep_trajectories);
    r.method = to_string(Method::IM_DCL) + "/" + to_string(mode);
    reports.push_back(std::move(r));
  }
  return reports;
}

namespace {

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

nlohmann::json trajectory_record_json(std::size_t episode, const TrajectoryRecord& rec) {
  nlohmann::json j;
  j["episode"] = episode;
  j["epoch"] = rec.epoch;
  j["loss_s"] = rec.loss_s;
  j["ce"] = rec.ce;
  j["im_support"] = rec.im_support;
  j["phase2"] = rec.phase2;
  if (rec.phase2) {
    j["loss_q"] = rec.loss_q;
    j["im_all"] = rec.im_all;
    j["dcl"] = rec.dcl;
  } else {
    j["loss_q"] = nullptr;
    j["im_all"] = nullptr;
    j["dcl"] = nullptr;
  }
  j["lambda_n"] = rec.lambda_n_value;
  j["support_accuracy"] = rec.support_accuracy;
  return j;
}

}  // namespace

void write_report_json(const std::string& path, const std::vector<RunReport>& reports,
                       const std::string& config_echo, const std::string& config_hash) {
  nlohmann::json j;
  j["version"] = kVersion;
  j["config_hash"] = config_hash;
  j["config"] = config_echo;
  j["runs"] = nlohmann::json::array();
  for (const auto& r : reports) {
    nlohmann::json rj;
    rj["method"] = r.method;
    rj["episodes"] = r.episodes;
    rj["mean_accuracy"] = r.mean_accuracy;
    rj["ci95"] = r.ci95;
    rj["wall_time_sec"] = r.wall_time_sec;
    rj["accuracies"] = r.episode_accuracies;
    j["runs"].push_back(std::move(rj));
  }
  j["pairwise_deltas"] = nlohmann::json::array();
  for (std::size_t a = 0; a < reports.size(); ++a) {
    for (std::size_t b = a + 1; b < reports.size(); ++b) {
      nlohmann::json dj;
      dj["a"] = reports[a].method;
      dj["b"] = reports[b].method;
      dj["delta"] = reports[b].mean_accuracy - reports[a].mean_accuracy;
      j["pairwise_deltas"].push_back(std::move(dj));
    }
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_report_json: cannot open " + path);
  out << j.dump(2) << "\n";
}

void write_report_csv(const std::string& path, const std::vector<RunReport>& reports) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_report_csv: cannot open " + path);
  out << "method,episodes,mean_accuracy,ci95,delta_vs_baseline\n";
  const double baseline = reports.empty() ? 0.0 : reports.front().mean_accuracy;
  for (const auto& r : reports) {
    out << r.method << "," << r.episodes << "," << fixed6(r.mean_accuracy) << ","
        << fixed6(r.ci95) << "," << fixed6(r.mean_accuracy - baseline) << "\n";
  }
}

void write_trajectory_jsonl(const std::string& path, const RunReport& report) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_trajectory_jsonl: cannot open " + path);
  for (std::size_t e = 0; e < report.trajectories.size(); ++e) {
    for (const auto& rec : report.trajectories[e]) {
      out << trajectory_record_json(e, rec).dump() << "\n";
    }
  }
}

}  // namespace imdcl
