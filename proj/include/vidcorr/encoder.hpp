#pragma once

#include <cstdint>
#include <vector>

#include "vidcorr/tensor.hpp"

namespace vidcorr {

struct EncoderConfig {
  int in_channels = 3;
  std::vector<int> stage_channels = {16, 32, 64};
  std::vector<int> stage_total_strides = {4, 8, 32};
  std::uint64_t init_seed = 7;

  int levels() const { return static_cast<int>(stage_channels.size()); }
  int coarsest_stride() const { return stage_total_strides.back(); }
  void validate() const;
};

// Per-frame feature maps, fine to coarse, shape (h^l, w^l, d^l). Raw stage
// outputs: consumers L2-normalize along channels before any correlation.
struct FeaturePyramid {
  std::vector<Tensor> levels;
};

// Plain strided conv trunk. Each stage halves resolution with 3x3 stride-2
// conv blocks until its cumulative stride is reached; the pyramid taps the
// stage's last conv output before the trunk nonlinearity.
class Encoder {
 public:
  explicit Encoder(const EncoderConfig& config);

  const EncoderConfig& config() const { return config_; }

  FeaturePyramid encode_pyramid(const Tensor& frame) const;

  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;

  // Detached copy: same values, weights take no gradient. Used for momentum
  // (key) encoders and teachers.
  Encoder clone_detached() const;

  // Make weights permanently immutable; forwards never record gradients.
  void freeze() { frozen_ = true; }
  bool frozen() const { return frozen_; }

  struct ConvLayer {
    Tensor w;  // (kh,kw,Cin,Cout)
    Tensor b;  // (Cout)
  };
  const std::vector<std::vector<ConvLayer>>& stages() const { return stages_; }

 private:
  Encoder() = default;
  EncoderConfig config_;
  std::vector<std::vector<ConvLayer>> stages_;
  bool frozen_ = false;
  friend void momentum_update(Encoder&, const Encoder&, double);
  friend Encoder load_encoder_weights(const EncoderConfig&, const class ArchiveReader&);
};

// theta_teacher <- m * theta_teacher + (1-m) * theta_student, elementwise.
void momentum_update(Encoder& teacher, const Encoder& student, double m);

class ArchiveReader;
class ArchiveWriter;
void save_encoder_weights(const Encoder& enc, ArchiveWriter& writer);
Encoder load_encoder_weights(const EncoderConfig& config, const ArchiveReader& reader);

}  // namespace vidcorr
