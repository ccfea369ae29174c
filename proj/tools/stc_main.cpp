// Command-line front end for the transition-correction pipeline.
//
// Workflow: gen-data -> pretrain -> correct -> train -> eval, plus
// verify-bounds for the tabular bound checks and diagnose for the
// action-distribution study. Every subcommand writes a resolved.ini snapshot
// into the output directory so any run can be reproduced exactly.

#include <CLI11.hpp>
#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include "stc/errors.hpp"
#include "stc/pipeline.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::vector<std::string> overrides;
  std::int64_t seed = -1;  // -1: use the config's seed list
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "Experiment config file (INI)");
  cmd->add_option("--out", args.out_dir, "Workspace directory")->required();
  cmd->add_option("--set", args.overrides, "Override a config value (section.key=value)");
  cmd->add_option("--seed", args.seed, "Replace the config's seed list with a single seed");
}

stc::config::ExperimentConfig load_config(const CommonArgs& args) {
  auto cfg = stc::config::parse_config(args.config_path, args.overrides);
  if (args.seed >= 0) cfg.seeds = {static_cast<std::uint64_t>(args.seed)};
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Selective transition correction for cross-domain offline RL"};
  app.require_subcommand(1);

  CommonArgs gen_args, pretrain_args, correct_args, train_args, eval_args, diagnose_args;
  CommonArgs bounds_args;
  stc::pipeline::BoundsOptions bounds_options;

  add_common(app.add_subcommand("gen-data", "Generate source and target datasets"), gen_args);
  add_common(app.add_subcommand("pretrain", "Train inverse/forward/reward models"),
             pretrain_args);
  add_common(app.add_subcommand("correct", "Apply selective correction to the source data"),
             correct_args);
  add_common(app.add_subcommand("train", "Run the offline actor-critic on corrected data"),
             train_args);
  add_common(app.add_subcommand("eval", "Evaluate trained actors in the target environment"),
             eval_args);
  add_common(app.add_subcommand("diagnose", "Action-distribution comparison via KD-tree pairing"),
             diagnose_args);

  auto* bounds_cmd =
      app.add_subcommand("verify-bounds", "Randomized tabular verification of the bounds");
  add_common(bounds_cmd, bounds_args);
  bounds_cmd->add_option("--theorem", bounds_options.theorem,
                         "Which check to run: 1, 2, 3, telescoping, or all");
  bounds_cmd->add_option("--trials", bounds_options.trials, "Trials per check");
  bounds_cmd->add_option("--delta", bounds_options.delta, "Confidence level for theorem 3");
  bounds_cmd->add_option("--samples", bounds_options.sample_sizes,
                         "Target sample sizes cycled through theorem 3 trials");
  bounds_cmd->add_option("--bounds-seed", bounds_options.seed, "Base seed for trial generation");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("gen-data")) {
      const auto cfg = load_config(gen_args);
      stc::pipeline::gen_data(cfg, {gen_args.out_dir});
      std::printf("wrote %s and %s\n",
                  stc::pipeline::Workspace{gen_args.out_dir}.source_dataset().c_str(),
                  stc::pipeline::Workspace{gen_args.out_dir}.target_dataset().c_str());
    } else if (app.got_subcommand("pretrain")) {
      const auto cfg = load_config(pretrain_args);
      const auto report = stc::pipeline::pretrain(cfg, {pretrain_args.out_dir});
      std::printf("holdout mse: inverse %.6g forward %.6g reward %.6g\n",
                  static_cast<double>(report.inverse_mse),
                  static_cast<double>(report.forward_mse),
                  static_cast<double>(report.reward_mse));
    } else if (app.got_subcommand("correct")) {
      const auto cfg = load_config(correct_args);
      const auto rates = stc::pipeline::correct(cfg, {correct_args.out_dir});
      std::size_t i = 0;
      for (float lambda : cfg.lambda) {
        for (float alpha : cfg.alpha) {
          std::printf("lambda %g alpha %g: acceptance rate %.4f\n",
                      static_cast<double>(lambda), static_cast<double>(alpha), rates[i++]);
        }
      }
    } else if (app.got_subcommand("train")) {
      const auto cfg = load_config(train_args);
      const auto summaries = stc::pipeline::train(cfg, {train_args.out_dir});
      for (const auto& s : summaries) {
        std::printf(
            "lambda %g alpha %g beta %g seed %llu: acceptance %.4f, final score %.2f, final "
            "return %.2f\n",
            static_cast<double>(s.lambda), static_cast<double>(s.alpha),
            static_cast<double>(s.beta), static_cast<unsigned long long>(s.seed),
            s.acceptance_rate, s.final_score, s.final_return);
      }
    } else if (app.got_subcommand("eval")) {
      const auto cfg = load_config(eval_args);
      const auto reports = stc::pipeline::evaluate_runs(cfg, {eval_args.out_dir});
      for (const auto& r : reports) {
        std::printf("mean return %.3f, normalized score %.2f (refs %.3f / %.3f)\n",
                    r.mean_return, r.normalized_score, r.reference_random, r.reference_expert);
      }
    } else if (app.got_subcommand("diagnose")) {
      const auto cfg = load_config(diagnose_args);
      stc::pipeline::diagnose(cfg, {diagnose_args.out_dir});
      std::printf("wrote diagnostics and densities CSVs in %s\n", diagnose_args.out_dir.c_str());
    } else if (app.got_subcommand("verify-bounds")) {
      (void)load_config(bounds_args);  // validates config/overrides for snapshotting
      stc::pipeline::Workspace ws{bounds_args.out_dir};
      const auto summary = stc::pipeline::verify_bounds(bounds_options, ws);
      std::printf("%zu trials, %d violations", summary.reports.size(), summary.violations);
      if (bounds_options.theorem == "3" || bounds_options.theorem == "all") {
        std::printf(", theorem-3 failure rate %.4f", summary.theorem3_failure_rate);
      }
      std::printf("; rows in %s\n", ws.bounds_csv().c_str());
      if (summary.violations > 0 && bounds_options.theorem != "3") return 7;
    }
  } catch (const stc::ConfigError& e) {
    std::fprintf(stderr, "error[config]: %s\n", e.what());
    return 2;
  } catch (const stc::FormatError& e) {
    std::fprintf(stderr, "error[format]: %s\n", e.what());
    return 3;
  } catch (const stc::UsageError& e) {
    std::fprintf(stderr, "error[usage]: %s\n", e.what());
    return 4;
  } catch (const stc::NumericalError& e) {
    std::fprintf(stderr, "error[numerical]: %s\n", e.what());
    return 5;
  } catch (const stc::IoError& e) {
    std::fprintf(stderr, "error[io]: %s\n", e.what());
    return 6;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
