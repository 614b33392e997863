// imdcl: source-free few-shot adaptation on synthetic domain-shift benchmarks.
//
// Subcommands:
//   pretrain     train the source model, write a checkpoint
//   adapt        run adaptation episodes with one method, write reports
//   ablate       compare methods on paired episodes
//   lambda-study compare negative-weight decay modes on paired episodes
//   gradcheck    audit analytic gradients against finite differences
//   export-data  dump the synthetic datasets as CSV
//
// Exit codes: 0 success, 1 configuration error, 2 numerical failure.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "imdcl/config.hpp"
#include "imdcl/data.hpp"
#include "imdcl/gradcheck_suite.hpp"
#include "imdcl/pipeline.hpp"
#include "imdcl/rng.hpp"
#include "imdcl/version.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string output_dir;
  std::size_t jobs = 1;
};

void attach_common(CLI::App* cmd, CommonArgs& args, bool with_jobs = true) {
  cmd->add_option("--config", args.config_path, "Config file (key = value under [sections])");
  cmd->add_option("--set", args.overrides, "Override a config key, e.g. --set lr=0.05")
      ->take_all();
  cmd->add_option("--output-dir", args.output_dir,
                  "Where reports/checkpoints go (default: $IMDCL_OUTPUT_DIR or .)");
  if (with_jobs) {
    cmd->add_option("--jobs", args.jobs, "Worker threads for episodes (default 1)")
        ->check(CLI::PositiveNumber);
  }
}

std::filesystem::path resolve_output_dir(const CommonArgs& args) {
  std::string dir = args.output_dir;
  if (dir.empty()) {
    if (const char* env = std::getenv("IMDCL_OUTPUT_DIR")) dir = env;
  }
  if (dir.empty()) dir = ".";
  std::filesystem::path p(dir);
  std::filesystem::create_directories(p);
  return p;
}

imdcl::ExperimentConfig resolve_and_echo(const CommonArgs& args) {
  imdcl::ExperimentConfig config = imdcl::resolve_config(args.config_path, args.overrides);
  std::cout << "# imdcl " << imdcl::kVersion << ", config "
            << imdcl::config_hash(config) << "\n"
            << imdcl::echo_config(config) << std::flush;
  return config;
}

void print_report_table(const std::vector<imdcl::RunReport>& reports) {
  std::printf("%-22s %9s %14s %10s\n", "method", "episodes", "mean_accuracy", "ci95");
  for (const auto& r : reports) {
    std::printf("%-22s %9zu %14.4f %10.4f\n", r.method.c_str(), r.episodes, r.mean_accuracy,
                r.ci95);
  }
}

void write_reports(const std::filesystem::path& dir, const std::vector<imdcl::RunReport>& reports,
                   const imdcl::ExperimentConfig& config) {
  imdcl::write_report_json((dir / "report.json").string(), reports,
                           imdcl::echo_config(config), imdcl::config_hash(config));
  imdcl::write_report_csv((dir / "report.csv").string(), reports);
  std::cout << "wrote " << (dir / "report.json").string() << " and "
            << (dir / "report.csv").string() << "\n";
}

int cmd_pretrain(const CommonArgs& args) {
  const auto config = resolve_and_echo(args);
  const auto dir = resolve_output_dir(args);
  imdcl::PreparedRun prepared = imdcl::prepare_run(config);
  const auto path = (dir / "checkpoint.json").string();
  imdcl::save_checkpoint(prepared.pretrain.model, path);
  std::printf("source train accuracy: %.4f (final loss %.6f)\n",
              prepared.pretrain.train_accuracy, prepared.pretrain.final_loss);
  std::cout << "wrote " << path << "\n";
  return 0;
}

int cmd_adapt(const CommonArgs& args, const std::string& checkpoint) {
  const auto config = resolve_and_echo(args);
  const auto dir = resolve_output_dir(args);

  imdcl::PreparedRun prepared;
  if (checkpoint.empty()) {
    prepared = imdcl::prepare_run(config);
  } else {
    // Reuse a saved encoder; the target domain still comes from the config.
    imdcl::DomainPair pair = imdcl::make_domain_pair(
        config.domain, imdcl::derive_seed(config.seed, "domain"));
    prepared.target = std::move(pair.target);
    prepared.pretrain.model = imdcl::load_checkpoint(checkpoint);
  }

  imdcl::RunReport report = imdcl::run_prepared(prepared, config, args.jobs, true);
  print_report_table({report});
  write_reports(dir, {report}, config);
  imdcl::write_trajectory_jsonl((dir / "trajectory.jsonl").string(), report);
  std::cout << "wrote " << (dir / "trajectory.jsonl").string() << "\n";
  return 0;
}

int cmd_ablate(const CommonArgs& args, const std::string& methods_csv) {
  const auto config = resolve_and_echo(args);
  const auto dir = resolve_output_dir(args);

  std::vector<imdcl::Method> methods;
  if (methods_csv.empty()) {
    methods = {imdcl::Method::FineTune, imdcl::Method::SIM, imdcl::Method::IM,
               imdcl::Method::IM_DCL_Unweighted, imdcl::Method::IM_DCL};
  } else {
    std::string token;
    std::stringstream ss(methods_csv);
    while (std::getline(ss, token, ',')) methods.push_back(imdcl::parse_method(token));
  }

  const auto reports = imdcl::run_ablation(config, methods, args.jobs);
  print_report_table(reports);
  write_reports(dir, reports, config);
  return 0;
}

int cmd_lambda_study(const CommonArgs& args) {
  const auto config = resolve_and_echo(args);
  const auto dir = resolve_output_dir(args);
  const std::vector<imdcl::LambdaNMode> modes = {
      imdcl::LambdaNMode::Variable, imdcl::LambdaNMode::FixedMin, imdcl::LambdaNMode::FixedMax};
  const auto reports = imdcl::run_lambda_study(config, modes, args.jobs);
  print_report_table(reports);
  write_reports(dir, reports, config);
  return 0;
}

int cmd_gradcheck(std::size_t instances, std::uint64_t seed) {
  const auto entries = imdcl::run_gradcheck_suite(instances, seed);
  std::printf("%-24s %10s %14s\n", "loss", "instances", "max_rel_err");
  for (const auto& e : entries) {
    std::printf("%-24s %10zu %14.3e\n", e.name.c_str(), e.instances, e.max_rel_err);
  }
  const double worst = imdcl::worst_rel_err(entries);
  std::printf("worst: %.3e (tolerance 1e-4)\n", worst);
  if (worst > 1e-4) {
    std::fprintf(stderr, "gradcheck: analytic gradients disagree with finite differences\n");
    return 2;
  }
  return 0;
}

int cmd_export_data(const CommonArgs& args) {
  const auto config = resolve_and_echo(args);
  const auto dir = resolve_output_dir(args);
  imdcl::DomainPair pair =
      imdcl::make_domain_pair(config.domain, imdcl::derive_seed(config.seed, "domain"));
  const auto source_path = (dir / "source.csv").string();
  const auto target_path = (dir / "target.csv").string();
  imdcl::write_dataset_csv(pair.source_data, source_path);
  imdcl::write_dataset_csv(imdcl::materialize(pair.target), target_path);
  std::cout << "wrote " << source_path << " and " << target_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"source-free few-shot adaptation sandbox"};
  app.require_subcommand(1);
  app.set_version_flag("--version", imdcl::kVersion);

  CommonArgs pretrain_args, adapt_args, ablate_args, lambda_args, export_args;
  std::string checkpoint_path, methods_csv;
  std::size_t gc_instances = 20;
  std::uint64_t gc_seed = 99;

  attach_common(app.add_subcommand("pretrain", "train the source model"), pretrain_args, false);

  auto* adapt = app.add_subcommand("adapt", "adapt to target episodes");
  attach_common(adapt, adapt_args);
  adapt->add_option("--checkpoint", checkpoint_path, "reuse a pretrained checkpoint");

  auto* ablate = app.add_subcommand("ablate", "compare methods on paired episodes");
  attach_common(ablate, ablate_args);
  ablate->add_option("--methods", methods_csv,
                     "comma-separated subset (default: all five methods)");

  attach_common(app.add_subcommand("lambda-study", "compare lambda_n modes"), lambda_args);

  auto* gradcheck = app.add_subcommand("gradcheck", "audit gradients vs finite differences");
  gradcheck->add_option("--instances", gc_instances, "instances per loss (default 20)")
      ->check(CLI::PositiveNumber);
  gradcheck->add_option("--seed", gc_seed, "randomization seed");

  attach_common(app.add_subcommand("export-data", "dump datasets as CSV"), export_args, false);

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("pretrain")) return cmd_pretrain(pretrain_args);
    if (app.got_subcommand("adapt")) return cmd_adapt(adapt_args, checkpoint_path);
    if (app.got_subcommand("ablate")) return cmd_ablate(ablate_args, methods_csv);
    if (app.got_subcommand("lambda-study")) return cmd_lambda_study(lambda_args);
    if (app.got_subcommand("gradcheck")) return cmd_gradcheck(gc_instances, gc_seed);
    if (app.got_subcommand("export-data")) return cmd_export_data(export_args);
  } catch (const imdcl::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const imdcl::NumericError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 2;
  } catch (const imdcl::DimensionError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
