#pragma once

#include <cstdint>
#include <vector>

#include "vidcorr/data.hpp"
#include "vidcorr/encoder.hpp"
#include "vidcorr/tensor.hpp"

namespace vidcorr {

struct PropagationParams {
  int r_eval = 9;
  int top_k = 10;
  double tau = 0.07;
  int memory_size = 4;  // retained past predictions, besides the first frame
  LabNormalization lab;
};

// Ordered reference bank: entry 0 is always the ground-truth-labeled first
// frame; at capacity the oldest non-first prediction is evicted.
class PropagationMemory {
 public:
  explicit PropagationMemory(int capacity) : capacity_(capacity) {}

  struct Entry {
    Tensor features;  // (h,w,d), unit-norm channels
    Tensor labels;    // (h,w,C), per-pixel simplex
  };

  void append(Tensor features, Tensor labels);
  std::size_t size() const { return entries_.size(); }
  const Entry& entry(std::size_t i) const { return entries_[i]; }

 private:
  int capacity_;
  std::vector<Entry> entries_;
};

// One recurrent inference step: per query pixel, gather window similarities
// to every memory entry, keep the top_k logits, softmax at tau, and blend the
// corresponding memory labels.
Tensor propagate_step(const PropagationMemory& memory, const Tensor& features,
                      const PropagationParams& params);

// Per-pixel argmax of a soft label map, upsampled to (H, W) by nearest
// neighbor.
IntGrid hard_labels(const Tensor& soft, std::int64_t out_h, std::int64_t out_w);

// Propagates frame-0 annotations through a clip with the encoder's
// evaluation-level features (the second-coarsest pyramid level). Returns one
// full-resolution hard label map per frame; frame 0 echoes the input labels.
std::vector<IntGrid> run_sequence(const Encoder& encoder, const std::vector<Tensor>& frames,
                                  const IntGrid& init_labels, int num_classes,
                                  const PropagationParams& params);

// One-hot soft labels at evaluation resolution from an integer map.
Tensor labels_to_soft(const IntGrid& labels, int num_classes);

}  // namespace vidcorr
