#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vidcorr/gradcheck.hpp"
#include "vidcorr/runner.hpp"

namespace {

// Exit codes: 0 success, 1 usage/config, 2 numeric fault, 3 verification failure.
constexpr int kExitUsage = 1;
constexpr int kExitNumeric = 2;
constexpr int kExitVerification = 3;

vidcorr::RunConfig make_config(const std::string& config_path,
                               const std::vector<std::string>& overrides) {
  vidcorr::RunConfig config =
      config_path.empty() ? vidcorr::RunConfig() : vidcorr::RunConfig::load(config_path);
  for (const std::string& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      throw vidcorr::ConfigError("override must be section.key=value, got '" + kv + "'");
    }
    config.apply_override(kv.substr(0, eq), kv.substr(eq + 1));
  }
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-supervised video correspondence at desk scale"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::vector<std::string> overrides;
  app.add_option("--config", config_path, "Config file (defaults used when omitted)");
  app.add_option("--set", overrides, "Override: section.key=value (repeatable)");

  std::string out_dir = "out";
  std::string init_checkpoint;
  bool from_scratch = false;

  auto* train_spatial = app.add_subcommand("train-spatial", "Contrastive pretraining on still images");
  train_spatial->add_option("--out", out_dir, "Output directory");

  auto* train_temporal = app.add_subcommand("train-temporal", "Temporal training on synthetic video");
  train_temporal->add_option("--out", out_dir, "Output directory");
  train_temporal->add_option("--init", init_checkpoint, "Step-1 checkpoint to start from");
  train_temporal->add_flag("--from-scratch", from_scratch,
                           "Train without a step-1 checkpoint (temporal-only configuration)");

  std::string clip_dir, checkpoint;
  auto* propagate = app.add_subcommand("propagate", "Propagate frame-0 labels through a clip directory");
  propagate->add_option("--checkpoint", checkpoint, "Trained checkpoint")->required();
  propagate->add_option("--clip", clip_dir, "Clip directory (frames + masks)")->required();
  propagate->add_option("--out", out_dir, "Output directory");

  int iters = 0;
  std::string export_clips;
  auto* eval_synth = app.add_subcommand("eval-synth", "Score label propagation on held-out synthetic clips");
  eval_synth->add_option("--checkpoint", checkpoint, "Trained checkpoint");
  eval_synth->add_flag("--from-scratch", from_scratch, "Evaluate a freshly initialized encoder");
  eval_synth->add_option("--iters", iters, "From-scratch temporal steps before evaluating");
  eval_synth->add_option("--export-clips", export_clips, "Also export the held-out clips here");
  eval_synth->add_option("--out", out_dir, "Output directory");

  auto* gradcheck = app.add_subcommand("gradcheck", "Run every finite-difference verification suite");

  std::string csv_path, svg_path;
  auto* plot = app.add_subcommand("plot", "Render a loss/score CSV as SVG");
  plot->add_option("--csv", csv_path, "Input CSV")->required();
  plot->add_option("--out", svg_path, "Output SVG path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_spatial->parsed()) {
      const auto art = vidcorr::run_train_spatial(make_config(config_path, overrides), out_dir);
      std::cout << "checkpoint " << art.checkpoint << "\nloss_csv " << art.loss_csv << "\n";
    } else if (train_temporal->parsed()) {
      if (init_checkpoint.empty() && !from_scratch) {
        std::cerr << "train-temporal needs --init <checkpoint> or --from-scratch\n";
        return kExitUsage;
      }
      const auto art = vidcorr::run_train_temporal(make_config(config_path, overrides), out_dir,
                                                   init_checkpoint);
      std::cout << "checkpoint " << art.checkpoint << "\nloss_csv " << art.loss_csv << "\n";
    } else if (propagate->parsed()) {
      vidcorr::run_propagate(checkpoint, clip_dir, out_dir);
      std::cout << "labels written to " << out_dir << "\n";
    } else if (eval_synth->parsed()) {
      if (checkpoint.empty() && !from_scratch) {
        std::cerr << "eval-synth needs --checkpoint <path> or --from-scratch\n";
        return kExitUsage;
      }
      const auto art = vidcorr::run_eval_synth(make_config(config_path, overrides), checkpoint,
                                               out_dir, iters, export_clips);
      std::cout << "J " << art.aggregate.j_mean << " F " << art.aggregate.f_mean << " J&F "
                << art.aggregate.jf_mean << "\n";
    } else if (gradcheck->parsed()) {
      const auto report = vidcorr::run_gradient_suite();
      bool all_ok = true;
      for (const auto& item : report) {
        std::printf("[%s] %-28s max_rel_err %.3e (tol %.0e)\n", item.passed ? "PASS" : "FAIL",
                    item.name.c_str(), item.max_rel_err, item.tolerance);
        all_ok = all_ok && item.passed;
      }
      if (!all_ok) return kExitVerification;
    } else if (plot->parsed()) {
      vidcorr::run_plot(csv_path, svg_path);
      std::cout << "wrote " << svg_path << "\n";
    }
  } catch (const vidcorr::NumericFault& e) {
    std::cerr << "numeric fault: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const vidcorr::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return 0;
}
