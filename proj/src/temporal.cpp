#include "vidcorr/temporal.hpp"

#include <cmath>
#include <string>

namespace vidcorr {

Tensor reconstruct_frame(const LocalCorrelationMap& c, const Tensor& reference_frame) {
  return apply_correlation(c, reference_frame);
}

Tensor reconstruction_loss(const Tensor& reconstructed, const Tensor& target) {
  if (reconstructed.shape() != target.shape()) {
    throw ShapeError("reconstruction_loss: shape mismatch " + shape_str(reconstructed.shape()) +
                     " vs " + shape_str(target.shape()));
  }
  return mean(l1_diff(reconstructed, target));
}

Tensor pyramid_reconstruction_loss(const std::vector<LocalCorrelationMap>& maps,
                                   const std::vector<Tensor>& reference_levels,
                                   const std::vector<Tensor>& target_levels) {
  if (maps.empty()) throw ShapeError("pyramid_reconstruction_loss: no levels");
  if (maps.size() != reference_levels.size() || maps.size() != target_levels.size()) {
    throw ShapeError("pyramid_reconstruction_loss: level count mismatch (" +
                     std::to_string(maps.size()) + " maps, " +
                     std::to_string(reference_levels.size()) + " reference, " +
                     std::to_string(target_levels.size()) + " target)");
  }
  Tensor total;
  for (std::size_t l = 0; l < maps.size(); ++l) {
    Tensor level = reconstruction_loss(reconstruct_frame(maps[l], reference_levels[l]),
                                       target_levels[l]);
    total = l == 0 ? level : add(total, level);
  }
  return total;
}

Tensor local_correlation_distillation(const LocalCorrelationMap& student,
                                      const LocalCorrelationMap& pseudo,
                                      const std::vector<std::uint8_t>& mask) {
  if (student.values.shape() != pseudo.values.shape()) {
    throw ShapeError("local_correlation_distillation: map shapes differ, " +
                     shape_str(student.values.shape()) + " vs " +
                     shape_str(pseudo.values.shape()));
  }
  const std::int64_t n = student.h * student.w;
  if (static_cast<std::int64_t>(mask.size()) != n) {
    throw ShapeError("local_correlation_distillation: mask length " +
                     std::to_string(mask.size()) + " does not match " + std::to_string(n) +
                     " queries");
  }
  std::int64_t selected = 0;
  for (auto m : mask) selected += m ? 1 : 0;
  if (selected == 0) return Tensor::scalar(0.0);

  const std::int64_t cells = static_cast<std::int64_t>(student.r) * student.r;
  std::vector<double> expanded(static_cast<std::size_t>(n * cells));
  for (std::int64_t q = 0; q < n; ++q) {
    const double m = mask[static_cast<std::size_t>(q)] ? 1.0 : 0.0;
    for (std::int64_t j = 0; j < cells; ++j) expanded[static_cast<std::size_t>(q * cells + j)] = m;
  }
  Tensor mask_t = Tensor::from_data(student.values.shape(), std::move(expanded));
  Tensor masked = mul(sq_diff(student.values, pseudo.values), mask_t);
  return mul_scalar(sum(masked), 1.0 / static_cast<double>(selected * cells));
}

Tensor global_correlation_distillation(const GlobalCorrelationMap& student,
                                       const GlobalCorrelationMap& teacher) {
  if (student.values.shape() != teacher.values.shape()) {
    throw ShapeError("global_correlation_distillation: map shapes differ, " +
                     shape_str(student.values.shape()) + " vs " +
                     shape_str(teacher.values.shape()));
  }
  return mean(sq_diff(student.values, teacher.values));
}

Tensor temporal_total_loss(const Tensor& rec, const Tensor& lc, const Tensor& gc,
                           const TemporalLossWeights& weights) {
  for (const Tensor* t : {&rec, &lc, &gc}) {
    if (t->size() != 1) throw ShapeError("temporal_total_loss: components must be scalars");
    if (!std::isfinite(t->value())) throw NumericFault("temporal_total_loss: non-finite component");
  }
  if (!(weights.alpha >= 0.0) || !(weights.beta >= 0.0) || !std::isfinite(weights.alpha) ||
      !std::isfinite(weights.beta)) {
    throw std::invalid_argument("temporal_total_loss: weights must be finite and non-negative");
  }
  return add(add(rec, mul_scalar(lc, weights.alpha)), mul_scalar(gc, weights.beta));
}

// ---- trainer ---------------------------------------------------------------------

TemporalTrainer::TemporalTrainer(Encoder& student, const Encoder* teacher,
                                 const std::vector<SynthClip>& corpus,
                                 const TemporalTrainConfig& config)
    : student_(student),
      teacher_(teacher),
      corpus_(&corpus),
      config_(config),
      optimizer_(student.parameters(), config.optimizer),
      rng_(config.seed) {
  if (teacher_ && !teacher_->frozen()) {
    throw std::invalid_argument("temporal trainer: teacher must be frozen");
  }
  if (corpus.empty()) throw std::invalid_argument("temporal trainer: empty corpus");
  const auto& strides = student.config().stage_total_strides;
  if (strides.size() < 2) {
    throw ConfigError("temporal trainer: encoder needs at least two pyramid levels");
  }
  // Reconstruction runs on all levels below the top; the coarsest level hosts
  // the global correlation.
  recon_strides_.assign(strides.begin(), strides.end() - 1);
  if (config_.window_sizes.size() != recon_strides_.size()) {
    throw ConfigError("temporal trainer: window_sizes must list one r per reconstruction level");
  }
  for (std::size_t l = 0; l + 1 < config_.window_sizes.size(); ++l) {
    const int s = recon_strides_[l + 1] / recon_strides_[l];
    const int required = compatible_fine_window(config_.window_sizes[l + 1], s);
    if (config_.window_sizes[l] != required) {
      throw ConfigError("temporal trainer: window size at level " + std::to_string(l) +
                        " must be " + std::to_string(required) +
                        " to pool onto the next level");
    }
  }
  cache_.reserve(corpus.size());
  for (const SynthClip& clip : corpus) {
    CachedClip c;
    for (const Tensor& frame : clip.frames) {
      c.lab_frames.push_back(lab_normalize(rgb_to_lab(frame), config_.lab));
    }
    cache_.push_back(std::move(c));
  }
}

LossBreakdown TemporalTrainer::assemble_losses(const Tensor& lab_target,
                                               const Tensor& lab_reference,
                                               const AssembleOptions& options,
                                               Tensor* total_out) {
  const int levels = student_.config().levels();
  const std::size_t n_recon = recon_strides_.size();
  const int dropout_channel = options.dropout_channel;

  // Encoder inputs carry the channel bottleneck; reconstruction targets and
  // reference pixels stay unmasked.
  Tensor in_t = dropout_channel >= 0 ? zero_channel(lab_target, dropout_channel) : lab_target;
  Tensor in_r = dropout_channel >= 0 ? zero_channel(lab_reference, dropout_channel) : lab_reference;

  FeaturePyramid pyr_t = student_.encode_pyramid(in_t);
  FeaturePyramid pyr_r = student_.encode_pyramid(in_r);

  FramePyramid frames_t = frame_pyramid(lab_target, recon_strides_);
  FramePyramid frames_r = frame_pyramid(lab_reference, recon_strides_);

  // Local correlation maps at every reconstruction level.
  std::vector<LocalCorrelationMap> maps;
  for (std::size_t l = 0; l < n_recon; ++l) {
    Tensor ft = l2_normalize_lastdim(pyr_t.levels[l]);
    Tensor fr = l2_normalize_lastdim(pyr_r.levels[l]);
    maps.push_back(local_correlation(ft, fr, config_.window_sizes[l], config_.tau,
                                     static_cast<int>(l)));
  }

  // Reconstruction: all levels when the pyramid is on, else only the top
  // matching level (the coarsest reconstruction level).
  Tensor rec;
  if (config_.pyramid) {
    rec = pyramid_reconstruction_loss(maps, frames_r.levels, frames_t.levels);
  } else {
    const std::size_t top = n_recon - 1;
    rec = reconstruction_loss(reconstruct_frame(maps[top], frames_r.levels[top]),
                              frames_t.levels[top]);
  }

  // Local correlation distillation: the finer map, detached and pooled, is the
  // pseudo label for the top matching level.
  Tensor lc = Tensor::scalar(0.0);
  double masked_fraction = 0.0;
  if (config_.local_distillation && config_.weights.alpha > 0.0 && n_recon >= 2) {
    const std::size_t top = n_recon - 1;
    const LocalCorrelationMap& student_map = maps[top];
    LocalCorrelationMap pseudo;
    if (options.fixed_pseudo) {
      pseudo = *options.fixed_pseudo;
    } else {
      LocalCorrelationMap fine_detached = maps[top - 1];
      fine_detached.values = maps[top - 1].values.detach();
      const int ratio = recon_strides_[top] / recon_strides_[top - 1];
      pseudo = correlation_downsample(fine_detached, ratio);
    }

    std::vector<std::uint8_t> mask;
    if (options.fixed_mask) {
      mask = *options.fixed_mask;
    } else if (config_.entropy_selection) {
      LocalCorrelationMap detached_student = student_map;
      detached_student.values = student_map.values.detach();
      EntropyMap h = entropy_map(detached_student, config_.entropy);
      mask = entropy_mask(h, config_.threshold);
    } else {
      mask.assign(static_cast<std::size_t>(student_map.h * student_map.w), 1);
    }
    std::int64_t selected = 0;
    for (auto m : mask) selected += m ? 1 : 0;
    masked_fraction = static_cast<double>(selected) / static_cast<double>(mask.size());
    lc = local_correlation_distillation(student_map, pseudo, mask);
    if (options.pseudo_out) *options.pseudo_out = pseudo;
    if (options.mask_out) *options.mask_out = mask;
  }

  // Global correlation distillation against the frozen teacher.
  Tensor gc = Tensor::scalar(0.0);
  if (teacher_ && config_.weights.beta > 0.0) {
    Tensor ft = l2_normalize_lastdim(pyr_t.levels[levels - 1]);
    Tensor fr = l2_normalize_lastdim(pyr_r.levels[levels - 1]);
    GlobalCorrelationMap a_student = global_correlation(ft, fr, config_.tau);
    GlobalCorrelationMap a_teacher;
    {
      NoGradScope no_grad;
      FeaturePyramid tp_t = teacher_->encode_pyramid(in_t);
      FeaturePyramid tp_r = teacher_->encode_pyramid(in_r);
      a_teacher = global_correlation(l2_normalize_lastdim(tp_t.levels[levels - 1]),
                                     l2_normalize_lastdim(tp_r.levels[levels - 1]), config_.tau);
    }
    gc = global_correlation_distillation(a_student, a_teacher);
  }

  Tensor total = temporal_total_loss(rec, lc, gc, config_.weights);
  if (total_out) *total_out = total;

  LossBreakdown out;
  out.rec = rec.value();
  out.lc = lc.value();
  out.gc = gc.value();
  out.total = total.value();
  out.masked_fraction = masked_fraction;
  return out;
}

LossBreakdown TemporalTrainer::train_step() {
  const int pairs = std::max(1, config_.pairs_per_step);
  ComputationRecord record;
  LossBreakdown breakdown;
  {
    RecordingScope scope(record);
    std::vector<Tensor> totals;
    for (int p = 0; p < pairs; ++p) {
      const auto clip_idx = static_cast<std::size_t>(
          rng_.uniform_int(0, static_cast<std::int64_t>(cache_.size()) - 1));
      const CachedClip& clip = cache_[clip_idx];
      const auto len = static_cast<std::int64_t>(clip.lab_frames.size());
      const std::int64_t gap = rng_.uniform_int(1, std::min<std::int64_t>(config_.max_gap, len - 1));
      const std::int64_t t = rng_.uniform_int(gap, len - 1);
      const std::int64_t r = t - gap;

      AssembleOptions options;
      if (rng_.uniform() < config_.dropout_prob) {
        options.dropout_channel = static_cast<int>(rng_.uniform_int(0, 2));
      }
      Tensor total;
      LossBreakdown one = assemble_losses(clip.lab_frames[static_cast<std::size_t>(t)],
                                          clip.lab_frames[static_cast<std::size_t>(r)], options,
                                          &total);
      totals.push_back(reshape(total, {1}));
      breakdown.rec += one.rec;
      breakdown.lc += one.lc;
      breakdown.gc += one.gc;
      breakdown.total += one.total;
      breakdown.masked_fraction += one.masked_fraction;
    }
    Tensor batch_total = mean(concat(totals, 0));
    record.backward(batch_total);
  }
  const double inv = 1.0 / static_cast<double>(pairs);
  breakdown.rec *= inv;
  breakdown.lc *= inv;
  breakdown.gc *= inv;
  breakdown.total *= inv;
  breakdown.masked_fraction *= inv;
  optimizer_.step();
  return breakdown;
}

}  // namespace vidcorr
