#include <iostream>

#include "CLI11.hpp"
#include "wta/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Spiking winner-take-all networks trained with an online variational rule"};
  app.require_subcommand(1);

  wta::TrainArgs train;
  std::uint64_t train_seed = 0;
  std::string train_manifest;
  auto* cmd_train = app.add_subcommand("train", "train from a JSON config; writes checkpoint and metrics");
  cmd_train->add_option("--config", train.config, "experiment config (JSON)")->required();
  auto* train_seed_opt = cmd_train->add_option("--seed", train_seed, "override the config seed");
  cmd_train->add_option("--out-dir", train.out_dir, "output directory")->capture_default_str();
  auto* train_manifest_opt = cmd_train->add_option("--manifest", train_manifest, "override the training manifest");

  wta::EvalArgs eval;
  std::uint64_t eval_seed = 0;
  std::string eval_manifest;
  auto* cmd_eval = app.add_subcommand("eval", "free-run a checkpoint on a manifest and report accuracy");
  cmd_eval->add_option("--checkpoint", eval.checkpoint, "checkpoint file")->required();
  auto* eval_manifest_opt = cmd_eval->add_option("--manifest", eval_manifest, "manifest (default: config test manifest)");
  auto* eval_seed_opt = cmd_eval->add_option("--seed", eval_seed, "sampling seed (default: checkpoint seed)");

  wta::GradcheckArgs grad;
  auto* cmd_grad = app.add_subcommand("gradcheck", "run the gradient and estimator oracle suites");
  cmd_grad->add_option("--seed", grad.seed, "seed")->capture_default_str();
  cmd_grad->add_option("--networks", grad.networks, "random networks for the finite-difference suite")->capture_default_str();
  cmd_grad->add_option("--samples", grad.samples, "Monte Carlo episodes")->capture_default_str()->check(CLI::Range(2, 100000000));
  cmd_grad->add_option("--steps", grad.steps, "episode length of the enumeration network")->capture_default_str()->check(CLI::Range(1, 8));
  cmd_grad->add_flag("--mutate-sign", grad.mutate_sign, "negate the analytic gradient (the check must then fail)");

  wta::SynthArgs synth;
  auto* cmd_synth = app.add_subcommand("synth", "write the synthetic polarity task to disk");
  cmd_synth->add_option("--out-dir", synth.out_dir, "output directory")->capture_default_str();
  cmd_synth->add_option("--seed", synth.seed, "seed")->capture_default_str();
  cmd_synth->add_option("--pixels", synth.pixels, "pixels")->capture_default_str();
  cmd_synth->add_option("--steps", synth.steps, "time steps")->capture_default_str();
  cmd_synth->add_option("--classes", synth.classes, "classes")->capture_default_str();
  cmd_synth->add_option("--train-per-class", synth.train_per_class, "training examples per class")->capture_default_str();
  cmd_synth->add_option("--test-per-class", synth.test_per_class, "test examples per class")->capture_default_str();
  cmd_synth->add_option("--event-rate", synth.event_rate, "per pixel-step activity probability")->capture_default_str();
  cmd_synth->add_option("--jitter", synth.jitter, "probability of a one-step timing shift")->capture_default_str();

  wta::InspectArgs inspect;
  auto* cmd_inspect = app.add_subcommand("inspect", "summarize a checkpoint");
  cmd_inspect->add_option("--checkpoint", inspect.checkpoint, "checkpoint file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : wta::kExitConfig;
  }

  if (cmd_train->parsed()) {
    if (*train_seed_opt) train.seed = train_seed;
    if (*train_manifest_opt) train.manifest = train_manifest;
    return wta::cmd_train(train, std::cout, std::cerr);
  }
  if (cmd_eval->parsed()) {
    if (*eval_seed_opt) eval.seed = eval_seed;
    if (*eval_manifest_opt) eval.manifest = eval_manifest;
    return wta::cmd_eval(eval, std::cout, std::cerr);
  }
  if (cmd_grad->parsed()) return wta::cmd_gradcheck(grad, std::cout, std::cerr);
  if (cmd_synth->parsed()) return wta::cmd_synth(synth, std::cout, std::cerr);
  if (cmd_inspect->parsed()) return wta::cmd_inspect(inspect, std::cout, std::cerr);
  return wta::kExitFailure;
}
