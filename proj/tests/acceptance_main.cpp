// Acceptance audit: eight end-to-end checks on the built library and CLI.
// Each check prints exactly one [PASS]/[FAIL] line; the exit code is the
// number of failed checks. argv[1] must name the CLI binary (used by the
// determinism check).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "imdcl/autodiff.hpp"
#include "imdcl/config.hpp"
#include "imdcl/data.hpp"
#include "imdcl/dcl.hpp"
#include "imdcl/gradcheck_suite.hpp"
#include "imdcl/losses.hpp"
#include "imdcl/model.hpp"
#include "imdcl/pipeline.hpp"
#include "imdcl/rng.hpp"

#include "support/oracles.hpp"

namespace {

using namespace imdcl;
namespace fs = std::filesystem;

struct Outcome {
  bool pass = false;
  std::string detail;
};

int g_failures = 0;

void run_check(int number, const std::string& name, const std::function<Outcome()>& body) {
  Outcome outcome;
  try {
    outcome = body();
  } catch (const std::exception& e) {
    outcome = {false, std::string("exception: ") + e.what()};
  }
  if (!outcome.pass) ++g_failures;
  std::printf("[%s] %d. %s: %s\n", outcome.pass ? "PASS" : "FAIL", number, name.c_str(),
              outcome.detail.c_str());
  std::fflush(stdout);
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string fmt(const char* format, ...) {
  char buf[512];
  va_list args;
  va_start(args, format);
  std::vsnprintf(buf, sizeof buf, format, args);
  va_end(args);
  return buf;
}

Matrix random_softmax_rows(Rng& rng, std::size_t rows, std::size_t cols) {
  Matrix logits(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) logits(i, j) = rng.uniform(-2.0, 2.0);
  }
  return softmax_rows(logits);
}

// ---------------------------------------------------------------------------

Outcome check_gradient_fidelity() {
  const auto start = std::chrono::steady_clock::now();
  const auto entries = run_gradcheck_suite(20, 99);
  const double secs = seconds_since(start);

  bool enough = entries.size() >= 7;
  for (const auto& e : entries) enough = enough && e.instances >= 20;
  const double worst = worst_rel_err(entries);
  const bool pass = enough && worst <= 1e-4 && secs <= 60.0;
  return {pass, fmt("worst rel err %.2e across %zu loss families (>=20 instances each) in %.1fs",
                    worst, entries.size(), secs)};
}

Outcome check_contrastive_oracle() {
  Rng rng(2024);
  double worst_loss_err = 0.0;
  double worst_weight_err = 0.0;

  for (int inst = 0; inst < 100; ++inst) {
    const std::size_t m = 3 + rng.uniform_int(14);   // 3..16
    const std::size_t way = 2 + rng.uniform_int(5);  // 2..6
    const std::size_t fdim = 3 + rng.uniform_int(6);

    MemoryBank bank;
    bank.features = Matrix(m, fdim);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < fdim; ++j) bank.features(i, j) = rng.gaussian();
    }
    bank.predictions = random_softmax_rows(rng, m, way);
    const std::size_t supports = 1 + rng.uniform_int(m - 1);
    bank.origin.assign(m, -1);
    for (std::size_t i = 0; i < supports; ++i) {
      bank.origin[i] = static_cast<int>(i % way);
    }

    const Matrix live = random_softmax_rows(rng, m, way);

    WeightScheme scheme;
    scheme.variant = static_cast<WeightVariant>(inst % 3);
    DclOptions options;
    options.mode = inst % 2 == 0 ? DclMode::Full : DclMode::TopK;
    options.top_k = 1 + rng.uniform_int(m - 1);
    options.unweighted = inst % 10 == 0;
    const double lambda = rng.uniform(0.0, 1.0);

    const double lib = scalar_value(dcl_loss(constant(live), bank, scheme, lambda, options));
    const double ref = oracles::dcl(live, bank, scheme, lambda, options);
    worst_loss_err = std::max(worst_loss_err, std::abs(lib - ref));

    for (std::size_t anchor = 0; anchor < m; ++anchor) {
      const std::vector<double> pos = positive_weights(bank, anchor);
      const std::vector<double> ref_pos = oracles::positive_weights(bank.features, anchor);
      const std::vector<double> neg = negative_weights(scheme, pos);
      const std::vector<double> ref_neg = oracles::negative_weights(scheme, ref_pos);
      for (std::size_t i = 0; i < pos.size(); ++i) {
        worst_weight_err = std::max(worst_weight_err, std::abs(pos[i] - ref_pos[i]));
        worst_weight_err = std::max(worst_weight_err, std::abs(neg[i] - ref_neg[i]));
      }
    }
  }

  const bool pass = worst_loss_err <= 1e-10 && worst_weight_err <= 1e-12;
  return {pass, fmt("100 random instances (m<=16): loss err %.2e (tol 1e-10), "
                    "weight err %.2e (tol 1e-12)",
                    worst_loss_err, worst_weight_err)};
}

Outcome check_analytic_values() {
  const std::size_t n = 7;
  const Matrix uniform_logits(5, n, 0.3);  // equal entries per row
  const double cert = certainty_loss_value(uniform_logits);
  const double div = diversity_loss_value(uniform_logits);
  const double im = im_loss_value(uniform_logits, LossWeights{1.0, 1.0, 0.1});

  const LambdaNSchedule schedule{100};
  const double lam0 = lambda_n(schedule, 0);
  const double lam_end = lambda_n(schedule, 100);

  const double cert_err = std::abs(cert - std::log(static_cast<double>(n)));
  const double div_err = std::abs(div + std::log(static_cast<double>(n)));
  const double im_err = std::abs(im);
  const double lam0_err = std::abs(lam0 - 1.0);
  const double lam_end_err = std::abs(lam_end - std::pow(11.0, -5.0));

  const bool pass = cert_err <= 1e-9 && div_err <= 1e-9 && im_err <= 1e-9 &&
                    lam0_err <= 1e-12 && lam_end_err <= 1e-12;
  return {pass, fmt("uniform certainty ln7 err %.1e, diversity -ln7 err %.1e, IM zero err %.1e, "
                    "decay endpoints err %.1e/%.1e",
                    cert_err, div_err, im_err, lam0_err, lam_end_err)};
}

ExperimentConfig regime_config(double severity) {
  ExperimentConfig cfg;  // defaults: 16d domain, 20/10 classes, 5-way 1-shot 15-query
  cfg.domain.shift_severity = severity;
  cfg.adapt.dcl.mode = DclMode::TopK;  // neighborhood selection, as in the regime configs
  cfg.episodes = 200;
  cfg.seed = 7;
  return cfg;
}

Outcome check_method_ordering() {
  const auto start = std::chrono::steady_clock::now();
  const ExperimentConfig cfg = regime_config(0.2);
  const auto reports = run_ablation(cfg, {Method::FineTune, Method::IM, Method::IM_DCL}, 1);
  const double secs = seconds_since(start);

  const double ft = reports[0].mean_accuracy;
  const double im = reports[1].mean_accuracy;
  const double full = reports[2].mean_accuracy;
  const double ci = reports[2].ci95;

  const bool ladder = ft + 0.01 <= im && im <= full + ci && full >= ft + 0.02;
  const bool pass = ladder && secs <= 900.0;
  return {pass, fmt("200 paired episodes: FineTune %.4f, IM %.4f, IM_DCL %.4f +/- %.4f "
                    "(single thread, %.0fs)",
                    ft, im, full, ci, secs)};
}

Outcome check_lambda_schedule_ordering() {
  const ExperimentConfig cfg = regime_config(0.8);
  const auto reports =
      run_lambda_study(cfg, {LambdaNMode::Variable, LambdaNMode::FixedMin}, 1, true);

  const double variable = reports[0].mean_accuracy;
  const double fixed_min = reports[1].mean_accuracy;
  const double ci = reports[1].ci95;

  bool decreasing = !reports[0].trajectories.empty();
  if (decreasing) {
    const auto& traj = reports[0].trajectories[0];
    decreasing = traj.size() == cfg.adapt.epochs;
    for (std::size_t h = 1; h < traj.size(); ++h) {
      decreasing = decreasing && traj[h].lambda_n_value < traj[h - 1].lambda_n_value;
    }
  }

  const bool pass = variable >= fixed_min - ci && decreasing;
  return {pass, fmt("distant regime, 200 paired episodes: Variable %.4f vs FixedMin %.4f "
                    "+/- %.4f; negative-weight coefficient strictly decreasing: %s",
                    variable, fixed_min, ci, decreasing ? "yes" : "no")};
}

Outcome check_source_free_adaptation() {
  DomainConfig domain;
  domain.input_dim = 8;
  domain.source_classes = 6;
  domain.target_classes = 6;
  domain.source_samples_per_class = 30;
  domain.target_samples_per_class = 40;
  DomainPair pair = make_domain_pair(domain, 51);

  const ModelDims dims{.input_dim = 8, .hidden = {32, 32}, .feature_dim = 16, .num_classes = 2};
  PretrainConfig pc;
  pc.epochs = 200;
  const PretrainResult pre = pretrain_source(pair.source_data, dims, pc, 51);

  // Release every source sample before adaptation ever runs.
  pair.source_data = Dataset{};

  const Episode episode = sample_episode(pair.target, 5, 1, 15, 3);
  AdaptConfig adapt;
  adapt.epochs = 40;
  adapt.method = Method::IM_DCL;
  adapt.seed = 3;
  const AdaptResult result = adapt_episode(pre.model, episode, adapt);
  const double accuracy = evaluate(result.model, episode);

  bool finite = result.model.classifier.w.all_finite();
  for (const auto& layer : result.model.encoder) finite = finite && layer.w.all_finite();

  const bool pass = result.trajectory.size() == adapt.epochs && accuracy >= 0.0 &&
                    accuracy <= 1.0 && finite;
  return {pass, fmt("adapted 40 epochs with the source dataset destroyed, query accuracy %.2f "
                    "(query labels stay sealed; see the negative-compile test)",
                    accuracy)};
}

Outcome check_cli_determinism(const std::string& cli) {
  if (cli.empty()) return {false, "CLI binary path was not passed as argv[1]"};

  const fs::path base = fs::temp_directory_path() / "imdcl_acceptance_cli";
  std::error_code ec;
  fs::remove_all(base, ec);

  const std::string overrides =
      " --set input_dim=8 --set source_classes=6 --set target_classes=6"
      " --set source_samples_per_class=30 --set target_samples_per_class=40"
      " --set hidden_width=32 --set feature_dim=16 --set pretrain_epochs=80"
      " --set epochs=8 --set queries=5 --set episodes=6 --set seed=5";

  std::vector<std::string> csvs;
  for (int run = 1; run <= 2; ++run) {
    const fs::path dir = base / ("run" + std::to_string(run));
    const std::string cmd = "\"" + cli + "\" ablate --methods FineTune,IM_DCL" + overrides +
                            " --output-dir \"" + dir.string() + "\" > /dev/null 2>&1";
    if (std::system(cmd.c_str()) != 0) {
      return {false, fmt("CLI run %d exited nonzero", run)};
    }
    std::ifstream in(dir / "report.csv", std::ios::binary);
    if (!in) return {false, fmt("CLI run %d produced no report.csv", run)};
    std::ostringstream ss;
    ss << in.rdbuf();
    csvs.push_back(ss.str());
  }
  fs::remove_all(base, ec);

  const bool pass = !csvs[0].empty() && csvs[0] == csvs[1];
  return {pass, fmt("two ablate runs, report.csv byte-identical: %s (%zu bytes)",
                    pass ? "yes" : "no", csvs[0].size())};
}

Outcome check_im_collapse() {
  const std::size_t m = 8, n = 4;
  const LossWeights weights{1.0, 1.0, 0.1};
  const double lr = 0.5;

  // Plain descent can stall in a confidently unbalanced allocation, so
  // optimize from several starts and keep the lowest-loss solution (the
  // balanced one scores strictly lower: its batch marginal is exactly
  // uniform).
  double best_loss = std::numeric_limits<double>::infinity();
  Matrix logits;
  for (int restart = 0; restart < 6; ++restart) {
    Rng rng(88 + static_cast<std::uint64_t>(restart));
    Matrix trial(m, n);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) trial(i, j) = rng.uniform(-0.1, 0.1);
    }
    double final_loss = 0.0;
    for (int step = 0; step < 800; ++step) {
      Var leaf = param(trial);
      Var loss = im_loss(leaf, weights);
      final_loss = scalar_value(loss);
      backward(loss);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) trial(i, j) -= lr * leaf->grad(i, j);
      }
    }
    if (final_loss < best_loss) {
      best_loss = final_loss;
      logits = trial;
    }
  }

  const Matrix probs = softmax_rows(logits);
  double mean_row_max = 0.0;
  std::vector<double> marginal(n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double row_max = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      row_max = std::max(row_max, probs(i, j));
      marginal[j] += probs(i, j) / static_cast<double>(m);
    }
    mean_row_max += row_max / static_cast<double>(m);
  }
  double marginal_dev = 0.0;
  for (double q : marginal) marginal_dev = std::max(marginal_dev, std::abs(q - 1.0 / n));

  // Relabeling the classes (permuting logit columns) leaves the objective
  // unchanged: the loss cannot tell which assignment is the correct one.
  const std::vector<std::size_t> perm = {2, 0, 3, 1};
  Matrix permuted(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) permuted(i, perm[j]) = logits(i, j);
  }
  const double gap = std::abs(im_loss_value(logits, weights) - im_loss_value(permuted, weights));

  const bool pass = mean_row_max >= 0.95 && marginal_dev <= 0.05 && gap <= 1e-9;
  return {pass, fmt("free-logit descent: mean row max %.3f (>=0.95), marginal dev %.3f "
                    "(<=0.05), relabeling gap %.1e (<=1e-9)",
                    mean_row_max, marginal_dev, gap)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::string cli = argc > 1 ? argv[1] : "";

  run_check(1, "gradient fidelity", check_gradient_fidelity);
  run_check(2, "contrastive loss matches the brute-force oracle", check_contrastive_oracle);
  run_check(3, "analytic loss values", check_analytic_values);
  run_check(4, "method ordering on the near regime", check_method_ordering);
  run_check(5, "decay schedule ordering on the distant regime",
            check_lambda_schedule_ordering);
  run_check(6, "source-free adaptation contract", check_source_free_adaptation);
  run_check(7, "CLI report determinism", [&] { return check_cli_determinism(cli); });
  run_check(8, "confident-but-label-blind collapse of the unsupervised objective",
            check_im_collapse);

  if (g_failures == 0) {
    std::printf("all 8 checks passed\n");
  } else {
    std::printf("%d of 8 checks FAILED\n", g_failures);
  }
  return g_failures;
}
