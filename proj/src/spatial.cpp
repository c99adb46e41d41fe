#include "vidcorr/spatial.hpp"

#include <cmath>

namespace vidcorr {

void NegativeQueue::push(std::vector<double> key) {
  double sq = 0.0;
  for (double v : key) sq += v * v;
  const double norm = std::sqrt(sq);
  if (std::abs(norm - 1.0) > 1e-5) {
    throw std::invalid_argument("negative queue: key is not unit-norm");
  }
  if (!keys_.empty() && keys_.front().size() != key.size()) {
    throw ShapeError("negative queue: key dimension changed");
  }
  keys_.push_back(std::move(key));
  while (keys_.size() > capacity_) keys_.pop_front();
}

Tensor NegativeQueue::as_tensor(std::int64_t dim) const {
  if (keys_.empty()) return Tensor();
  std::vector<double> flat;
  flat.reserve(keys_.size() * static_cast<std::size_t>(dim));
  for (const auto& k : keys_) {
    if (static_cast<std::int64_t>(k.size()) != dim) {
      throw ShapeError("negative queue: stored key dimension mismatch");
    }
    flat.insert(flat.end(), k.begin(), k.end());
  }
  return Tensor::from_data({static_cast<std::int64_t>(keys_.size()), dim}, std::move(flat));
}

namespace {

void check_nonzero_vector(const Tensor& v, const char* name) {
  if (v.rank() != 1) {
    throw ShapeError(std::string("info_nce_loss: ") + name + " must be a vector, got " +
                     shape_str(v.shape()));
  }
  double sq = 0.0;
  for (double x : v.data()) sq += x * x;
  if (sq < 1e-24) {
    throw std::invalid_argument(std::string("info_nce_loss: zero-norm ") + name);
  }
}

}  // namespace

Tensor info_nce_loss(const Tensor& q, const Tensor& k_pos, const Tensor& negatives, double tau_c) {
  if (!(tau_c > 0.0)) throw std::invalid_argument("info_nce_loss: tau_c must be positive");
  check_nonzero_vector(q, "query");
  check_nonzero_vector(k_pos, "positive key");
  const std::int64_t d = q.shape()[0];
  if (k_pos.shape()[0] != d) {
    throw ShapeError("info_nce_loss: dimension mismatch " + shape_str(q.shape()) + " vs " +
                     shape_str(k_pos.shape()));
  }
  Tensor pos_logit = reshape(mul_scalar(dot(q, k_pos), 1.0 / tau_c), {1});
  Tensor logits;
  if (negatives.defined() && negatives.size() > 0) {
    if (negatives.rank() != 2 || negatives.shape()[1] != d) {
      throw ShapeError("info_nce_loss: negatives must be (K," + std::to_string(d) + "), got " +
                       shape_str(negatives.shape()));
    }
    Tensor neg_logits =
        reshape(mul_scalar(matmul_nt(reshape(q, {1, d}), negatives), 1.0 / tau_c),
                {negatives.shape()[0]});
    const Tensor parts[] = {pos_logit, neg_logits};
    logits = concat(parts, 0);
  } else {
    logits = pos_logit;
  }
  Tensor probs = softmax_lastdim(logits);
  return neg(sum(log(slice(probs, 0, 0, 1))));
}

ProjectionHead::ProjectionHead(std::int64_t in_dim, std::int64_t hidden, std::int64_t out_dim,
                               std::uint64_t seed) {
  Rng rng(seed);
  auto init = [&rng](Shape shape, std::int64_t fan_in) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
    for (double& x : v) x = rng.uniform(-bound, bound);
    return Tensor::from_data(std::move(shape), std::move(v), true);
  };
  w1 = init({in_dim, hidden}, in_dim);
  b1 = Tensor::zeros({hidden}, true);
  w2 = init({hidden, out_dim}, hidden);
  b2 = Tensor::zeros({out_dim}, true);
}

Tensor ProjectionHead::forward(const Tensor& pooled) const {
  const std::int64_t d = pooled.shape()[0];
  Tensor h = add(reshape(matmul(reshape(pooled, {1, d}), w1), {w1.shape()[1]}), b1);
  h = relu(h);
  Tensor out = add(reshape(matmul(reshape(h, {1, h.shape()[0]}), w2), {w2.shape()[1]}), b2);
  return l2_normalize_lastdim(out);
}

std::vector<Tensor*> ProjectionHead::parameters() { return {&w1, &b1, &w2, &b2}; }

ProjectionHead ProjectionHead::clone_detached() const {
  ProjectionHead copy;
  copy.w1 = w1.detach();
  copy.b1 = b1.detach();
  copy.w2 = w2.detach();
  copy.b2 = b2.detach();
  return copy;
}

Tensor global_average_pool(const Tensor& features) {
  if (features.rank() != 3) {
    throw ShapeError("global_average_pool: expected (h,w,d), got " + shape_str(features.shape()));
  }
  const std::int64_t n = features.shape()[0] * features.shape()[1];
  const std::int64_t d = features.shape()[2];
  Tensor flat = reshape(features, {n, d});
  Tensor weights = Tensor::full({1, n}, 1.0 / static_cast<double>(n));
  return reshape(matmul(weights, flat), {d});
}

SpatialTrainer::SpatialTrainer(Encoder& student, const SpatialTrainConfig& config)
    : student_(student),
      config_(config),
      key_encoder_(student.clone_detached()),
      head_(student.config().stage_channels.back(), config.proj_hidden, config.proj_dim,
            config.seed ^ 0x9e3779b97f4a7c15ULL),
      key_head_(head_.clone_detached()),
      queue_(config.queue_capacity),
      optimizer_([&] {
        auto params = student.parameters();
        for (Tensor* t : head_.parameters()) params.push_back(t);
        return params;
      }(), config.optimizer),
      rng_(config.seed) {}

Tensor SpatialTrainer::embed(const Encoder& enc, const ProjectionHead& head,
                             const Tensor& image) const {
  Tensor lab = lab_normalize(rgb_to_lab(image), config_.lab);
  FeaturePyramid pyr = enc.encode_pyramid(lab);
  return head.forward(global_average_pool(pyr.levels.back()));
}

double SpatialTrainer::train_step(const std::vector<Tensor>& batch) {
  if (batch.empty()) throw std::invalid_argument("spatial_train_step: empty batch");
  ComputationRecord record;
  double loss_value;
  std::vector<std::vector<double>> new_keys;
  {
    RecordingScope scope(record);
    Tensor negatives = queue_.as_tensor(config_.proj_dim);
    std::vector<Tensor> losses;
    for (const Tensor& image : batch) {
      Tensor view_q = augment(image, config_.augmentation, rng_);
      Tensor view_k = augment(image, config_.augmentation, rng_);
      Tensor q = embed(student_, head_, view_q);
      Tensor k;
      {
        NoGradScope no_grad;
        k = embed(key_encoder_, key_head_, view_k);
      }
      losses.push_back(reshape(info_nce_loss(q, k, negatives, config_.tau_c), {1}));
      new_keys.emplace_back(k.data().begin(), k.data().end());
    }
    Tensor total = mean(concat(losses, 0));
    loss_value = total.value();
    record.backward(total);
  }
  optimizer_.step();
  momentum_update(key_encoder_, student_, config_.key_momentum);
  // Blend the key head with the same momentum as the key encoder.
  {
    auto kp = key_head_.parameters();
    auto sp = head_.parameters();
    for (std::size_t i = 0; i < kp.size(); ++i) {
      auto t = kp[i]->raw_data();
      auto s = sp[i]->data();
      for (std::size_t j = 0; j < t.size(); ++j) {
        t[j] = config_.key_momentum * t[j] + (1.0 - config_.key_momentum) * s[j];
      }
    }
  }
  for (auto& key : new_keys) queue_.push(std::move(key));
  return loss_value;
}

double SpatialTrainer::train_step() {
  std::vector<Tensor> batch;
  for (int i = 0; i < config_.batch; ++i) {
    const int cls = static_cast<int>(rng_.uniform_int(0, config_.texture_classes - 1));
    batch.push_back(synth_image(cls, rng_.next_u64(), config_.image_size, config_.image_size,
                                config_.texture_classes));
  }
  return train_step(batch);
}

}  // namespace vidcorr
