#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "envae/cli.hpp"

int main(int argc, char** argv) {
  using namespace envae::cli;
  CLI::App app{"Energy-score VAE training and diagnostics"};
  app.require_subcommand(1);

  TrainOptions train_opt;
  std::uint64_t seed_override = 0;
  auto* train = app.add_subcommand("train", "train a model");
  train->add_option("--config", train_opt.config, "run config (JSON)")->required();
  train->add_option("--out", train_opt.out, "output directory")->required();
  auto* seed_flag = train->add_option("--seed", seed_override, "override train.seed");

  EvalOptions eval_opt;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the held-out split");
  eval->add_option("--checkpoint", eval_opt.checkpoint)->required();
  eval->add_option("--config", eval_opt.config)->required();
  eval->add_option("--out", eval_opt.out)->required();

  SampleOptions sample_opt;
  std::vector<std::uint64_t> walk;
  auto* sample = app.add_subcommand("sample", "decode prior draws or a latent walk");
  sample->add_option("--checkpoint", sample_opt.checkpoint)->required();
  sample->add_option("--out", sample_opt.out)->required();
  sample->add_option("--n", sample_opt.n, "number of prior samples");
  sample->add_option("--walk", walk, "two seeds for the walk endpoints")->expected(2)->delimiter(',');
  sample->add_option("--steps", sample_opt.steps, "intermediate walk steps")->capture_default_str();
  sample->add_option("--seed", sample_opt.seed, "seed for prior samples")->capture_default_str();

  SweepOptions sweep_opt;
  auto* sweep = app.add_subcommand("sweep", "train and evaluate over one hyperparameter");
  sweep->add_option("--config", sweep_opt.config)->required();
  sweep->add_option("--param", sweep_opt.param, "loss.beta | loss.m_samples | arch.latent_dim")->required();
  sweep->add_option("--values", sweep_opt.values, "comma-separated values")->required();
  sweep->add_option("--out", sweep_opt.out)->required();

  BenchOptions bench_opt;
  auto* bench = app.add_subcommand("bench", "per-epoch timing of each loss variant");
  bench->add_option("--config", bench_opt.config)->required();
  bench->add_option("--out", bench_opt.out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  if (*train) {
    if (*seed_flag) train_opt.seed = seed_override;
    return cmd_train(train_opt, std::cerr);
  }
  if (*eval) return cmd_eval(eval_opt, std::cerr);
  if (*sample) {
    if (!walk.empty()) sample_opt.walk = std::make_pair(walk[0], walk[1]);
    return cmd_sample(sample_opt, std::cerr);
  }
  if (*sweep) return cmd_sweep(sweep_opt, std::cerr);
  return cmd_bench(bench_opt, std::cerr);
}
