#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "amaml/experiment.hpp"

namespace {

using amaml::experiment::ExperimentConfig;

struct CommonArgs {
  std::string config_path;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<std::string> algorithm;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool config_required) {
  auto* config_opt =
      cmd->add_option("--config", args.config_path, "experiment config JSON file");
  if (config_required) config_opt->required();
  cmd->add_option("--out", args.out_dir, "output directory");
  cmd->add_option("--seed", args.seed, "master seed override");
  cmd->add_option("--threads", args.threads, "worker threads (0 = available parallelism)");
  cmd->add_option("--algorithm", args.algorithm,
                  "algorithm override: amaml|maml|fomaml|reptile|imaml");
}

ExperimentConfig load_config(const CommonArgs& args, const ExperimentConfig& defaults) {
  ExperimentConfig cfg =
      args.config_path.empty() ? defaults : ExperimentConfig::from_json_file(args.config_path);
  if (args.seed) cfg.seed = *args.seed;
  if (args.threads) cfg.threads = *args.threads;
  if (args.algorithm) cfg.meta.algorithm = amaml::meta::algorithm_from_name(*args.algorithm);
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"A-MAML: meta-learning initializations through adjoint ODEs"};
  app.require_subcommand(1);

  CommonArgs train_args, test_args, check_args, bench_args;
  std::string theta_path;
  bool baseline_random = false;
  bool corrupt_adjoint_sign = false;

  CLI::App* train_cmd =
      app.add_subcommand("meta-train", "meta-learn an initialization and write a theta file");
  add_common(train_cmd, train_args, /*config_required=*/true);

  CLI::App* test_cmd =
      app.add_subcommand("meta-test", "adaptation curve of a saved initialization on fresh tasks");
  add_common(test_cmd, test_args, /*config_required=*/true);
  test_cmd->add_option("--theta", theta_path, "theta binary written by meta-train")->required();
  test_cmd->add_flag("--baseline-random", baseline_random,
                     "also emit the curve of the untrained random init");

  CLI::App* check_cmd =
      app.add_subcommand("grad-check", "verify the adjoint gradient against runtime oracles");
  add_common(check_cmd, check_args, /*config_required=*/false);
  check_cmd
      ->add_flag("--corrupt-adjoint-sign", corrupt_adjoint_sign,
                 "test hook: flip the adjoint seed sign; the check must fail")
      ->group("");  // hidden

  CLI::App* bench_cmd =
      app.add_subcommand("bench", "sweep the horizon per algorithm and record resource counters");
  add_common(bench_cmd, bench_args, /*config_required=*/true);

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_cmd->parsed()) {
      run_meta_train(load_config(train_args, {}), train_args.out_dir);
    } else if (test_cmd->parsed()) {
      amaml::experiment::MetaTestOptions options;
      options.baseline_random = baseline_random;
      run_meta_test(load_config(test_args, {}), theta_path, test_args.out_dir, options);
    } else if (check_cmd->parsed()) {
      amaml::experiment::GradCheckOptions options;
      options.corrupt_adjoint_sign = corrupt_adjoint_sign;
      const ExperimentConfig cfg =
          load_config(check_args, amaml::experiment::grad_check_defaults());
      if (!run_grad_check(cfg, options, std::cout)) return 1;
    } else if (bench_cmd->parsed()) {
      run_bench(load_config(bench_args, {}), bench_args.out_dir);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
