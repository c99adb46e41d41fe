#pragma once

#include <cstdint>
#include <deque>
#include <vector>

#include "vidcorr/data.hpp"
#include "vidcorr/encoder.hpp"
#include "vidcorr/optim.hpp"
#include "vidcorr/tensor.hpp"

namespace vidcorr {

// FIFO bank of detached, unit-norm key vectors serving as negatives.
class NegativeQueue {
 public:
  explicit NegativeQueue(std::size_t capacity) : capacity_(capacity) {}

  void push(std::vector<double> key);
  std::size_t size() const { return keys_.size(); }
  std::size_t capacity() const { return capacity_; }
  const std::deque<std::vector<double>>& keys() const { return keys_; }

  // Snapshot as a constant (K, d) tensor; undefined tensor when empty.
  Tensor as_tensor(std::int64_t dim) const;

 private:
  std::size_t capacity_;
  std::deque<std::vector<double>> keys_;
};

// Contrastive instance-discrimination loss. Negatives are constants; the loss
// is differentiable in q and k_pos.
Tensor info_nce_loss(const Tensor& q, const Tensor& k_pos, const Tensor& negatives, double tau_c);
inline Tensor info_nce_loss(const Tensor& q, const Tensor& k_pos, double tau_c) {
  return info_nce_loss(q, k_pos, Tensor(), tau_c);
}

// Two-layer projection head applied to the spatially pooled top-level feature.
struct ProjectionHead {
  Tensor w1, b1, w2, b2;

  ProjectionHead() = default;
  ProjectionHead(std::int64_t in_dim, std::int64_t hidden, std::int64_t out_dim,
                 std::uint64_t seed);
  Tensor forward(const Tensor& pooled) const;  // (d) -> (out_dim), unit norm
  std::vector<Tensor*> parameters();
  ProjectionHead clone_detached() const;
};

// Pools level-N features (h,w,d) into a single (d) vector.
Tensor global_average_pool(const Tensor& features);

struct SpatialTrainConfig {
  int steps = 500;
  int batch = 8;
  std::size_t queue_capacity = 512;
  double tau_c = 0.07;
  double key_momentum = 0.99;
  std::int64_t proj_hidden = 64;
  std::int64_t proj_dim = 32;
  AugmentationPolicy augmentation;
  LabNormalization lab;
  int texture_classes = 32;
  std::int64_t image_size = 64;
  std::uint64_t seed = 11;
  AdamConfig optimizer{1e-3, 0.9, 0.999, 1e-8, true, 500};
};

// One optimizer step of contrastive pretraining over a batch of images.
// Returns the batch loss. Keys are enqueued after the step.
class SpatialTrainer {
 public:
  SpatialTrainer(Encoder& student, const SpatialTrainConfig& config);

  double train_step(const std::vector<Tensor>& batch);
  double train_step();  // draws a synthetic batch internally

  const NegativeQueue& queue() const { return queue_; }
  NegativeQueue& queue() { return queue_; }
  const Encoder& key_encoder() const { return key_encoder_; }
  ProjectionHead& head() { return head_; }

 private:
  Encoder& student_;
  SpatialTrainConfig config_;
  Encoder key_encoder_;
  ProjectionHead head_;
  ProjectionHead key_head_;
  NegativeQueue queue_;
  Adam optimizer_;
  Rng rng_;

  Tensor embed(const Encoder& enc, const ProjectionHead& head, const Tensor& image) const;
};

}  // namespace vidcorr
