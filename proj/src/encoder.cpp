#include "vidcorr/encoder.hpp"

#include <cmath>
#include <optional>
#include <string>

#include "vidcorr/archive.hpp"
#include "vidcorr/rng.hpp"

namespace vidcorr {

void EncoderConfig::validate() const {
  if (stage_channels.empty() || stage_channels.size() != stage_total_strides.size()) {
    throw ConfigError("encoder: stage_channels and stage_total_strides must align");
  }
  int prev = 1;
  for (int s : stage_total_strides) {
    if (s <= prev || s % prev != 0) {
      throw ConfigError("encoder: stage strides must be strictly increasing and divide the next");
    }
    const int ratio = s / prev;
    if ((ratio & (ratio - 1)) != 0) {
      throw ConfigError("encoder: stage stride ratios must be powers of two");
    }
    prev = s;
  }
  if (in_channels < 1) throw ConfigError("encoder: in_channels must be positive");
}

namespace {

Tensor kaiming_uniform(Shape shape, std::int64_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
  for (double& x : v) x = rng.uniform(-bound, bound);
  return Tensor::from_data(std::move(shape), std::move(v), true);
}

}  // namespace

Encoder::Encoder(const EncoderConfig& config) : config_(config) {
  config_.validate();
  Rng rng(config_.init_seed);
  int in_ch = config_.in_channels;
  int prev_stride = 1;
  for (std::size_t s = 0; s < config_.stage_channels.size(); ++s) {
    const int out_ch = config_.stage_channels[s];
    const int ratio = config_.stage_total_strides[s] / prev_stride;
    prev_stride = config_.stage_total_strides[s];
    int halvings = 0;
    for (int r = ratio; r > 1; r /= 2) ++halvings;
    std::vector<ConvLayer> stage;
    for (int i = 0; i < halvings; ++i) {
      const int ci = i == 0 ? in_ch : out_ch;
      const std::int64_t fan_in = 3 * 3 * ci;
      ConvLayer layer;
      layer.w = kaiming_uniform({3, 3, ci, out_ch}, fan_in, rng);
      const double bb = 1.0 / std::sqrt(static_cast<double>(fan_in));
      std::vector<double> bias(static_cast<std::size_t>(out_ch));
      for (double& x : bias) x = rng.uniform(-bb, bb);
      layer.b = Tensor::from_data({out_ch}, std::move(bias), true);
      stage.push_back(std::move(layer));
    }
    stages_.push_back(std::move(stage));
    in_ch = out_ch;
  }
}

FeaturePyramid Encoder::encode_pyramid(const Tensor& frame) const {
  if (frame.rank() != 3 || frame.shape()[2] != config_.in_channels) {
    throw ShapeError("encode_pyramid: expected (H,W," + std::to_string(config_.in_channels) +
                     "), got " + shape_str(frame.shape()));
  }
  const std::int64_t H = frame.shape()[0], W = frame.shape()[1];
  const int coarse = config_.coarsest_stride();
  if (H % coarse != 0 || W % coarse != 0) {
    throw ShapeError("encode_pyramid: frame extents " + shape_str(frame.shape()) +
                     " must be multiples of " + std::to_string(coarse));
  }
  std::optional<NoGradScope> frozen_guard;
  if (frozen_) frozen_guard.emplace();
  FeaturePyramid pyr;
  Tensor h = frame;
  for (const auto& stage : stages_) {
    for (std::size_t i = 0; i < stage.size(); ++i) {
      h = conv2d(h, stage[i].w, stage[i].b, /*stride=*/2, /*pad=*/1);
      if (i + 1 < stage.size()) h = relu(h);
    }
    pyr.levels.push_back(h);  // pre-activation stage output
    h = relu(h);
  }
  return pyr;
}

std::vector<Tensor*> Encoder::parameters() {
  std::vector<Tensor*> out;
  for (auto& stage : stages_) {
    for (auto& layer : stage) {
      out.push_back(&layer.w);
      out.push_back(&layer.b);
    }
  }
  return out;
}

std::vector<const Tensor*> Encoder::parameters() const {
  std::vector<const Tensor*> out;
  for (const auto& stage : stages_) {
    for (const auto& layer : stage) {
      out.push_back(&layer.w);
      out.push_back(&layer.b);
    }
  }
  return out;
}

Encoder Encoder::clone_detached() const {
  Encoder copy;
  copy.config_ = config_;
  for (const auto& stage : stages_) {
    std::vector<ConvLayer> s;
    for (const auto& layer : stage) {
      s.push_back(ConvLayer{layer.w.detach(), layer.b.detach()});
    }
    copy.stages_.push_back(std::move(s));
  }
  return copy;
}

void momentum_update(Encoder& teacher, const Encoder& student, double m) {
  if (teacher.frozen()) throw std::invalid_argument("momentum_update: encoder is frozen");
  if (m < 0.0 || m > 1.0) throw std::invalid_argument("momentum_update: m must be in [0,1]");
  auto tp = teacher.parameters();
  auto sp = student.parameters();
  if (tp.size() != sp.size()) {
    throw ShapeError("momentum_update: weight structure mismatch");
  }
  for (std::size_t i = 0; i < tp.size(); ++i) {
    if (tp[i]->shape() != sp[i]->shape()) {
      throw ShapeError("momentum_update: weight shape mismatch at index " + std::to_string(i) +
                       ": " + shape_str(tp[i]->shape()) + " vs " + shape_str(sp[i]->shape()));
    }
    auto t = tp[i]->raw_data();
    auto s = sp[i]->data();
    for (std::size_t j = 0; j < t.size(); ++j) t[j] = m * t[j] + (1.0 - m) * s[j];
  }
}

void save_encoder_weights(const Encoder& enc, ArchiveWriter& writer) {
  const auto& stages = enc.stages();
  for (std::size_t s = 0; s < stages.size(); ++s) {
    for (std::size_t l = 0; l < stages[s].size(); ++l) {
      const std::string base = "enc.stage" + std::to_string(s) + ".conv" + std::to_string(l);
      writer.add(base + ".w", stages[s][l].w);
      writer.add(base + ".b", stages[s][l].b);
    }
  }
}

Encoder load_encoder_weights(const EncoderConfig& config, const ArchiveReader& reader) {
  Encoder enc(config);
  for (std::size_t s = 0; s < enc.stages_.size(); ++s) {
    for (std::size_t l = 0; l < enc.stages_[s].size(); ++l) {
      const std::string base = "enc.stage" + std::to_string(s) + ".conv" + std::to_string(l);
      Tensor w = reader.tensor(base + ".w");
      Tensor b = reader.tensor(base + ".b");
      if (w.shape() != enc.stages_[s][l].w.shape() || b.shape() != enc.stages_[s][l].b.shape()) {
        throw ShapeError("load_encoder_weights: checkpoint does not match config at " + base);
      }
      std::copy(w.data().begin(), w.data().end(), enc.stages_[s][l].w.raw_data().begin());
      std::copy(b.data().begin(), b.data().end(), enc.stages_[s][l].b.raw_data().begin());
    }
  }
  return enc;
}

}  // namespace vidcorr
