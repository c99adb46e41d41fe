#pragma once

#include <optional>
#include <string>
#include <vector>

#include "vidcorr/config.hpp"
#include "vidcorr/metrics.hpp"

namespace vidcorr {

// Checkpoints are tensor archives holding the encoder weights plus a manifest
// entry with the full resolved config text.
void save_checkpoint(const Encoder& encoder, const RunConfig& config, const std::string& path);

struct Checkpoint {
  Encoder encoder;
  RunConfig config;
};
Checkpoint load_checkpoint(const std::string& path);

struct TrainArtifacts {
  std::string checkpoint;
  std::string loss_csv;
  double final_loss = 0.0;
};

// Step-1 contrastive pretraining; writes checkpoint.vta, loss.csv and
// config.resolved under outdir.
TrainArtifacts run_train_spatial(const RunConfig& config, const std::string& outdir);

// Step-2 temporal training. `init_checkpoint` empty trains from scratch (no
// teacher, no global distillation); otherwise the checkpoint initializes the
// student and its frozen copy is the teacher.
TrainArtifacts run_train_temporal(const RunConfig& config, const std::string& outdir,
                                  const std::string& init_checkpoint);

// Builds the fixed training corpus for a config.
std::vector<SynthClip> build_corpus(const RunConfig& config);

struct EvalArtifacts {
  SegScore aggregate;
  std::vector<SegScore> per_sequence;
  std::string scores_csv;
  std::string summary;
};

// Generates held-out clips, propagates frame-0 labels, scores them, and writes
// scores.csv + summary.txt. `checkpoint` empty evaluates a freshly initialized
// encoder; `train_iters` > 0 first trains it from scratch for that many steps.
EvalArtifacts run_eval_synth(const RunConfig& config, const std::string& checkpoint,
                             const std::string& outdir, int train_iters = 0,
                             const std::string& export_clips_dir = "");

// Runs label propagation over an exported clip directory; writes per-frame
// label archives and overlay images.
void run_propagate(const std::string& checkpoint, const std::string& clip_dir,
                   const std::string& outdir);

// Renders the numeric columns of a CSV (first column = x) as an SVG chart.
void run_plot(const std::string& csv_path, const std::string& svg_path);

// Writes an (H,W,3) RGB [0,1] frame blended with label colors as binary PPM.
void write_overlay_ppm(const Tensor& frame, const IntGrid& labels, const std::string& path);

std::string format_csv_double(double v);

}  // namespace vidcorr
