#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vidcorr/rng.hpp"
#include "vidcorr/tensor.hpp"

namespace vidcorr {

// Integer label map (0 = background, k = sprite id).
struct IntGrid {
  std::int64_t h = 0;
  std::int64_t w = 0;
  std::vector<std::int32_t> v;

  std::int32_t at(std::int64_t y, std::int64_t x) const { return v[static_cast<std::size_t>(y * w + x)]; }
  std::int32_t& at(std::int64_t y, std::int64_t x) { return v[static_cast<std::size_t>(y * w + x)]; }
  static IntGrid zeros(std::int64_t h, std::int64_t w) {
    return IntGrid{h, w, std::vector<std::int32_t>(static_cast<std::size_t>(h * w), 0)};
  }
};

// ---- color ------------------------------------------------------------------

// sRGB [0,1] -> CIE Lab (D65). L in [0,100], a/b roughly [-110, 110].
Tensor rgb_to_lab(const Tensor& rgb);
Tensor lab_to_rgb(const Tensor& lab);

// Fixed normalization constants applied to Lab before it enters the encoder.
// Stored in checkpoints via the config echo so evaluation renormalizes
// identically.
struct LabNormalization {
  double l_center = 50.0, l_scale = 100.0;
  double a_center = 0.0, a_scale = 220.0;
  double b_center = 0.0, b_scale = 220.0;
};

Tensor lab_normalize(const Tensor& lab, const LabNormalization& n);
Tensor lab_denormalize(const Tensor& norm, const LabNormalization& n);

// Zero one channel of an (H,W,3) frame; returns a fresh constant tensor.
Tensor zero_channel(const Tensor& frame, int channel);

// ---- pyramids ---------------------------------------------------------------

struct FramePyramid {
  std::vector<Tensor> levels;  // (h^l, w^l, C)
};

// Center sampling: level with stride s keeps pixels at s*k + floor(s/2).
Tensor frame_downsample(const Tensor& frame, int stride);
FramePyramid frame_pyramid(const Tensor& frame, const std::vector<int>& strides);
IntGrid label_downsample(const IntGrid& labels, int stride);

// ---- synthetic video ----------------------------------------------------------

struct SynthConfig {
  std::int64_t height = 64;
  std::int64_t width = 64;
  int length = 12;
  int sprite_count = 2;
  int texture_classes = 32;
  int sprite_min_size = 20;
  int sprite_max_size = 28;
  int motion_amplitude = 3;   // max per-frame displacement, per axis
  double texture_scale = 1.0; // multiplies procedural pattern periods
  bool subpixel = false;      // integer motion unless set
  bool occluder = false;      // bar sprite crossing the scene
};

struct SynthClip {
  std::vector<Tensor> frames;    // (H,W,3) RGB in [0,1]
  std::vector<IntGrid> gt_masks; // visibility-resolved sprite ids
  std::vector<Tensor> gt_flow;   // (H,W,2) displacement t -> t+1, size length-1
  std::uint64_t seed = 0;
  int num_labels = 0;            // background + sprites (+ occluder)
};

SynthClip synth_clip(const SynthConfig& config, std::uint64_t seed);

// Single still image for contrastive pretraining: textured sprites of one
// class over a random background. Instance identity = (class_id, seed).
Tensor synth_image(int class_id, std::uint64_t seed, std::int64_t h, std::int64_t w,
                   int texture_classes);

// ---- augmentation -------------------------------------------------------------

struct AugmentationPolicy {
  double min_crop_scale = 0.6;  // 1.0 disables cropping
  double flip_prob = 0.5;
  double jitter = 0.05;         // per-channel additive amplitude
};

Tensor augment(const Tensor& image, const AugmentationPolicy& policy, Rng& draw);
Tensor hflip(const Tensor& image);

// ---- clip archive on disk -------------------------------------------------------

void export_clip(const SynthClip& clip, const std::string& dir);
SynthClip import_clip(const std::string& dir);

}  // namespace vidcorr
