#include "vidcorr/propagation.hpp"

#include <algorithm>
#include <cmath>

namespace vidcorr {

void PropagationMemory::append(Tensor features, Tensor labels) {
  if (!entries_.empty()) {
    if (features.shape() != entries_[0].features.shape() ||
        labels.shape() != entries_[0].labels.shape()) {
      throw ShapeError("propagation memory: entry shapes must match the first frame");
    }
  }
  entries_.push_back(Entry{std::move(features), std::move(labels)});
  // Keep the ground-truth first frame plus the last `capacity_` predictions.
  while (entries_.size() > static_cast<std::size_t>(capacity_) + 1) {
    entries_.erase(entries_.begin() + 1);
  }
}

Tensor propagate_step(const PropagationMemory& memory, const Tensor& features,
                      const PropagationParams& params) {
  if (memory.size() == 0) throw std::invalid_argument("propagate_step: empty memory");
  if (features.rank() != 3) {
    throw ShapeError("propagate_step: features must be (h,w,d), got " +
                     shape_str(features.shape()));
  }
  if (features.shape() != memory.entry(0).features.shape()) {
    throw ShapeError("propagate_step: feature shape differs from memory entries");
  }
  if (params.r_eval < 1 || params.r_eval % 2 == 0) {
    throw std::invalid_argument("propagate_step: window must be odd");
  }
  if (params.top_k < 1) throw std::invalid_argument("propagate_step: top_k must be positive");

  const std::int64_t h = features.shape()[0], w = features.shape()[1], d = features.shape()[2];
  const std::int64_t C = memory.entry(0).labels.shape()[2];
  const int rad = (params.r_eval - 1) / 2;

  std::vector<double> out(static_cast<std::size_t>(h * w * C), 0.0);
  const auto fd = features.data();

  struct Candidate {
    double logit;
    const double* label;  // (C) pointer into the memory entry
  };
  std::vector<Candidate> cands;
  cands.reserve(memory.size() * static_cast<std::size_t>(params.r_eval * params.r_eval));

  for (std::int64_t qy = 0; qy < h; ++qy) {
    for (std::int64_t qx = 0; qx < w; ++qx) {
      cands.clear();
      const double* qf = &fd[(qy * w + qx) * d];
      for (std::size_t e = 0; e < memory.size(); ++e) {
        const auto ef = memory.entry(e).features.data();
        const auto el = memory.entry(e).labels.data();
        for (int dy = -rad; dy <= rad; ++dy) {
          const std::int64_t ry = qy + dy;
          if (ry < 0 || ry >= h) continue;
          for (int dx = -rad; dx <= rad; ++dx) {
            const std::int64_t rx = qx + dx;
            if (rx < 0 || rx >= w) continue;
            double acc = 0.0;
            const double* rf = &ef[(ry * w + rx) * d];
            for (std::int64_t c = 0; c < d; ++c) acc += qf[c] * rf[c];
            cands.push_back(Candidate{acc / params.tau, &el[(ry * w + rx) * C]});
          }
        }
      }
      const std::size_t keep = std::min<std::size_t>(cands.size(),
                                                     static_cast<std::size_t>(params.top_k));
      // Deterministic selection: ties broken by gather order.
      std::stable_sort(cands.begin(), cands.end(),
                       [](const Candidate& a, const Candidate& b) { return a.logit > b.logit; });
      double mx = cands[0].logit;
      double z = 0.0;
      for (std::size_t i = 0; i < keep; ++i) z += std::exp(cands[i].logit - mx);
      double* orow = &out[static_cast<std::size_t>((qy * w + qx) * C)];
      for (std::size_t i = 0; i < keep; ++i) {
        const double weight = std::exp(cands[i].logit - mx) / z;
        for (std::int64_t c = 0; c < C; ++c) orow[c] += weight * cands[i].label[c];
      }
    }
  }
  detail::check_finite("propagate_step", out);
  return Tensor::from_data({h, w, C}, std::move(out));
}

IntGrid hard_labels(const Tensor& soft, std::int64_t out_h, std::int64_t out_w) {
  const std::int64_t h = soft.shape()[0], w = soft.shape()[1], C = soft.shape()[2];
  IntGrid grid = IntGrid::zeros(out_h, out_w);
  const auto sd = soft.data();
  for (std::int64_t y = 0; y < out_h; ++y) {
    for (std::int64_t x = 0; x < out_w; ++x) {
      const std::int64_t sy = std::min(y * h / out_h, h - 1);
      const std::int64_t sx = std::min(x * w / out_w, w - 1);
      const double* row = &sd[(sy * w + sx) * C];
      int best = 0;
      for (std::int64_t c = 1; c < C; ++c) {
        if (row[c] > row[best]) best = static_cast<int>(c);
      }
      grid.at(y, x) = best;
    }
  }
  return grid;
}

Tensor labels_to_soft(const IntGrid& labels, int num_classes) {
  std::vector<double> soft(static_cast<std::size_t>(labels.h * labels.w * num_classes), 0.0);
  for (std::int64_t i = 0; i < labels.h * labels.w; ++i) {
    const std::int32_t c = labels.v[static_cast<std::size_t>(i)];
    if (c < 0 || c >= num_classes) {
      throw ShapeError("labels_to_soft: label id " + std::to_string(c) +
                       " outside the declared class count");
    }
    soft[static_cast<std::size_t>(i * num_classes + c)] = 1.0;
  }
  return Tensor::from_data({labels.h, labels.w, num_classes}, std::move(soft));
}

std::vector<IntGrid> run_sequence(const Encoder& encoder, const std::vector<Tensor>& frames,
                                  const IntGrid& init_labels, int num_classes,
                                  const PropagationParams& params) {
  if (frames.empty()) throw std::invalid_argument("run_sequence: empty clip");
  const auto& strides = encoder.config().stage_total_strides;
  if (strides.size() < 2) throw ConfigError("run_sequence: encoder needs >= 2 levels");
  const int eval_level = encoder.config().levels() - 2;  // second-coarsest level
  const int stride = strides[static_cast<std::size_t>(eval_level)];

  const std::int64_t H = frames[0].shape()[0], W = frames[0].shape()[1];
  if (init_labels.h != H || init_labels.w != W) {
    throw ShapeError("run_sequence: init labels must match frame extents");
  }

  NoGradScope no_grad;
  auto eval_features = [&](const Tensor& frame) {
    Tensor lab = lab_normalize(rgb_to_lab(frame), params.lab);
    FeaturePyramid pyr = encoder.encode_pyramid(lab);
    return l2_normalize_lastdim(pyr.levels[static_cast<std::size_t>(eval_level)]);
  };

  PropagationMemory memory(params.memory_size);
  memory.append(eval_features(frames[0]),
                labels_to_soft(label_downsample(init_labels, stride), num_classes));

  std::vector<IntGrid> out;
  out.push_back(init_labels);
  for (std::size_t t = 1; t < frames.size(); ++t) {
    Tensor features = eval_features(frames[t]);
    Tensor soft = propagate_step(memory, features, params);
    out.push_back(hard_labels(soft, H, W));
    memory.append(std::move(features), std::move(soft));
  }
  return out;
}

}  // namespace vidcorr
