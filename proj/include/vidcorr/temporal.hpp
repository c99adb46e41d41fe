#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "vidcorr/correlation.hpp"
#include "vidcorr/data.hpp"
#include "vidcorr/encoder.hpp"
#include "vidcorr/optim.hpp"
#include "vidcorr/tensor.hpp"

namespace vidcorr {

struct TemporalLossWeights {
  double alpha = 1.0;  // local correlation distillation
  double beta = 10.0;  // global correlation distillation
};

// ---- losses -------------------------------------------------------------------

// T(c, I_r): reconstruction of the target frame from reference pixels.
Tensor reconstruct_frame(const LocalCorrelationMap& c, const Tensor& reference_frame);

// Mean absolute difference over all pixels and channels.
Tensor reconstruction_loss(const Tensor& reconstructed, const Tensor& target);

// Sum of per-level reconstruction losses over the fine pyramid levels.
Tensor pyramid_reconstruction_loss(const std::vector<LocalCorrelationMap>& maps,
                                   const std::vector<Tensor>& reference_levels,
                                   const std::vector<Tensor>& target_levels);

// Masked mean squared error between the student map and a detached pseudo
// label, normalized by (selected queries x window cells). An all-zero mask
// yields an exact 0.
Tensor local_correlation_distillation(const LocalCorrelationMap& student,
                                      const LocalCorrelationMap& pseudo,
                                      const std::vector<std::uint8_t>& mask);

// Mean squared error between student and teacher global maps.
Tensor global_correlation_distillation(const GlobalCorrelationMap& student,
                                       const GlobalCorrelationMap& teacher);

Tensor temporal_total_loss(const Tensor& rec, const Tensor& lc, const Tensor& gc,
                           const TemporalLossWeights& weights);

// ---- training -------------------------------------------------------------------

struct TemporalTrainConfig {
  int steps = 2000;
  int pairs_per_step = 4;  // frame pairs averaged into one optimizer step
  TemporalLossWeights weights;
  double tau = 0.07;
  std::vector<int> window_sizes = {17, 9};  // r^l per reconstruction level
  EntropyConvention entropy = EntropyConvention::AsWritten;
  ThresholdSpec threshold = ThresholdSpec::quantile(0.5);
  bool entropy_selection = true;  // when off, the distillation mask is all ones
  bool pyramid = true;            // when off, reconstruct at the top matching level only
  bool local_distillation = true;
  double dropout_prob = 0.8;
  int max_gap = 4;
  LabNormalization lab;
  std::uint64_t seed = 21;
  AdamConfig optimizer{1.5e-3, 0.9, 0.999, 1e-8, true, 2000};
};

struct LossBreakdown {
  double rec = 0.0;
  double lc = 0.0;
  double gc = 0.0;
  double total = 0.0;
  double masked_fraction = 0.0;
};

// Step-2 trainer: one Adam step on the student per call. The teacher, when
// present, must be frozen; it anchors the global correlation maps.
class TemporalTrainer {
 public:
  TemporalTrainer(Encoder& student, const Encoder* teacher,
                  const std::vector<SynthClip>& corpus, const TemporalTrainConfig& config);

  LossBreakdown train_step();

  // Deterministic loss assembly on a fixed pair of lab-normalized frames;
  // exposed for gradient verification. `dropout_channel` = -1 means no channel
  // is dropped. `fixed_*` replace the detached selection/pseudo-label branches
  // (they are stop-gradient targets, so pinning them is how finite differences
  // verify the implemented gradient); `*_out` capture what was used.
  struct AssembleOptions {
    int dropout_channel = -1;
    const std::vector<std::uint8_t>* fixed_mask = nullptr;
    const LocalCorrelationMap* fixed_pseudo = nullptr;
    std::vector<std::uint8_t>* mask_out = nullptr;
    LocalCorrelationMap* pseudo_out = nullptr;
  };
  LossBreakdown assemble_losses(const Tensor& lab_target, const Tensor& lab_reference,
                                const AssembleOptions& options, Tensor* total_out);

 private:
  struct CachedClip {
    std::vector<Tensor> lab_frames;  // normalized Lab full-res
  };

  Encoder& student_;
  const Encoder* teacher_;
  const std::vector<SynthClip>* corpus_;
  TemporalTrainConfig config_;
  std::vector<CachedClip> cache_;
  Adam optimizer_;
  Rng rng_;
  std::vector<int> recon_strides_;  // strides of reconstruction levels

  friend class TemporalLossProbe;
};

}  // namespace vidcorr
