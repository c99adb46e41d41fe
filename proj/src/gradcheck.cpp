#include "vidcorr/gradcheck.hpp"

#include <array>
#include <cmath>

#include "vidcorr/correlation.hpp"
#include "vidcorr/data.hpp"
#include "vidcorr/encoder.hpp"
#include "vidcorr/rng.hpp"
#include "vidcorr/spatial.hpp"
#include "vidcorr/temporal.hpp"
#include "vidcorr/tensor.hpp"

namespace vidcorr {

namespace {

constexpr double kLossTol = 1e-4;
constexpr double kCompositeTol = 1e-3;
constexpr double kEps = 1e-5;

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor::from_data(std::move(shape), std::move(v));
}

GradCheckItem item(const std::string& name, const FiniteDifferenceReport& r, double tol) {
  return GradCheckItem{name, r.max_rel_err, tol, r.max_rel_err <= tol};
}

void check_single(std::vector<GradCheckItem>& out, const std::string& name, const Tensor& x,
                  const std::function<Tensor(const Tensor&)>& f, double tol = kLossTol) {
  out.push_back(item(name, finite_difference_check(f, x, kEps), tol));
}

void check_multi(std::vector<GradCheckItem>& out, const std::string& name,
                 std::span<Tensor> leaves, const std::function<Tensor()>& f,
                 double tol = kLossTol) {
  out.push_back(item(name, finite_difference_check_multi(f, leaves, kEps), tol));
}

void op_checks(std::vector<GradCheckItem>& out, Rng& rng) {
  {
    Tensor b = random_tensor({3, 4}, rng);
    Tensor w = random_tensor({2, 4}, rng);
    check_single(out, "op:matmul", random_tensor({2, 3}, rng),
                 [&](const Tensor& a) { return sum(mul(matmul(a, b), w)); });
  }
  {
    Tensor a = random_tensor({2, 3}, rng);
    Tensor w = random_tensor({2, 4}, rng);
    check_single(out, "op:matmul_nt", random_tensor({4, 3}, rng),
                 [&](const Tensor& b) { return sum(mul(matmul_nt(a, b), w)); });
  }
  {
    Tensor x = random_tensor({6, 6, 2}, rng).clone(true);
    Tensor w = random_tensor({3, 3, 2, 3}, rng).clone(true);
    Tensor b = random_tensor({3}, rng).clone(true);
    Tensor proj = random_tensor({3, 3, 3}, rng);
    std::array<Tensor, 3> leaves{x, w, b};
    check_multi(out, "op:conv2d", leaves,
                [&]() { return sum(mul(conv2d(x, w, b, 2, 1), proj)); });
  }
  {
    Tensor w = random_tensor({5, 7}, rng);
    check_single(out, "op:relu", random_tensor({5, 7}, rng),
                 [&](const Tensor& x) { return sum(mul(relu(x), w)); });
  }
  {
    Tensor w = random_tensor({4, 6}, rng);
    check_single(out, "op:softmax_lastdim", random_tensor({4, 6}, rng),
                 [&](const Tensor& x) { return sum(mul(softmax_lastdim(x), w)); });
  }
  {
    Tensor w = random_tensor({4, 5}, rng);
    check_single(out, "op:l2_normalize_lastdim", random_tensor({4, 5}, rng, 0.2, 1.0),
                 [&](const Tensor& x) { return sum(mul(l2_normalize_lastdim(x), w)); });
  }
  {
    Tensor w = random_tensor({3, 4}, rng);
    check_single(out, "op:exp", random_tensor({3, 4}, rng),
                 [&](const Tensor& x) { return sum(mul(exp(x), w)); });
  }
  {
    Tensor w = random_tensor({3, 4}, rng);
    check_single(out, "op:log", random_tensor({3, 4}, rng, 0.5, 1.5),
                 [&](const Tensor& x) { return sum(mul(log(x), w)); });
  }
  check_single(out, "op:sum", random_tensor({7}, rng),
               [&](const Tensor& x) { return sum(x); });
  check_single(out, "op:mean", random_tensor({3, 5}, rng),
               [&](const Tensor& x) { return mean(x); });
  {
    Tensor b = random_tensor({4, 4}, rng);
    Tensor w = random_tensor({4, 4}, rng);
    check_single(out, "op:l1_diff", random_tensor({4, 4}, rng),
                 [&](const Tensor& a) { return sum(mul(l1_diff(a, b), w)); });
    check_single(out, "op:sq_diff", random_tensor({4, 4}, rng),
                 [&](const Tensor& a) { return sum(mul(sq_diff(a, b), w)); });
    check_single(out, "op:add", random_tensor({4, 4}, rng),
                 [&](const Tensor& a) { return sum(mul(add(a, b), w)); });
    check_single(out, "op:sub", random_tensor({4, 4}, rng),
                 [&](const Tensor& a) { return sum(mul(sub(a, b), w)); });
    check_single(out, "op:mul", random_tensor({4, 4}, rng),
                 [&](const Tensor& a) { return sum(mul(mul(a, b), w)); });
    check_single(out, "op:add_scalar", random_tensor({4, 4}, rng),
                 [&](const Tensor& a) { return sum(mul(add_scalar(a, 0.7), w)); });
    check_single(out, "op:mul_scalar", random_tensor({4, 4}, rng),
                 [&](const Tensor& a) { return sum(mul(mul_scalar(a, -1.3), w)); });
  }
  {
    Tensor b = random_tensor({2, 3}, rng).clone(true);
    Tensor a = random_tensor({2, 2}, rng).clone(true);
    Tensor w = random_tensor({2, 5}, rng);
    std::array<Tensor, 2> leaves{a, b};
    check_multi(out, "op:concat", leaves, [&]() {
      const Tensor parts[] = {a, b};
      return sum(mul(concat(parts, 1), w));
    });
  }
  {
    Tensor w = random_tensor({2, 3}, rng);
    check_single(out, "op:slice", random_tensor({5, 3}, rng),
                 [&](const Tensor& x) { return sum(mul(slice(x, 0, 1, 2), w)); });
  }
  {
    Tensor w = random_tensor({6, 2}, rng);
    check_single(out, "op:reshape", random_tensor({3, 4}, rng),
                 [&](const Tensor& x) { return sum(mul(reshape(x, {6, 2}), w)); });
  }
  {
    // Fused window softmax and its weighted-sum counterpart.
    Tensor fr = random_tensor({5, 5, 3}, rng);
    Tensor w = random_tensor({25, 3, 3}, rng);
    check_single(out, "op:local_correlation", random_tensor({5, 5, 3}, rng),
                 [&](const Tensor& ft) {
                   return sum(mul(local_correlation(ft, fr, 3, 0.5).values, w));
                 });
    Tensor ft = random_tensor({5, 5, 3}, rng);
    Tensor img = random_tensor({5, 5, 2}, rng).clone(true);
    Tensor ftl = ft.clone(true);
    Tensor proj = random_tensor({5, 5, 2}, rng);
    std::array<Tensor, 2> leaves{ftl, img};
    check_multi(out, "op:apply_correlation", leaves, [&]() {
      LocalCorrelationMap c = local_correlation(ftl, fr, 3, 0.5);
      return sum(mul(apply_correlation(c, img), proj));
    });
  }
}

void loss_checks(std::vector<GradCheckItem>& out, Rng& rng) {
  // Contrastive loss, K = 8 negatives, d = 16.
  {
    const std::int64_t d = 16;
    Tensor q = l2_normalize_lastdim(random_tensor({d}, rng)).detach().clone(true);
    Tensor k = l2_normalize_lastdim(random_tensor({d}, rng)).detach().clone(true);
    std::vector<double> negs;
    for (int i = 0; i < 8; ++i) {
      Tensor n = l2_normalize_lastdim(random_tensor({d}, rng)).detach();
      negs.insert(negs.end(), n.data().begin(), n.data().end());
    }
    Tensor negatives = Tensor::from_data({8, d}, std::move(negs));
    std::array<Tensor, 2> leaves{q, k};
    check_multi(out, "loss:info_nce", leaves,
                [&]() { return info_nce_loss(q, k, negatives, 0.07); });
  }

  // Global correlation distillation against a fixed teacher map.
  {
    Tensor ft = random_tensor({2, 2, 4}, rng).clone(true);
    Tensor fr = random_tensor({2, 2, 4}, rng).clone(true);
    GlobalCorrelationMap teacher;
    {
      NoGradScope no_grad;
      teacher = global_correlation(l2_normalize_lastdim(random_tensor({2, 2, 4}, rng)),
                                   l2_normalize_lastdim(random_tensor({2, 2, 4}, rng)), 0.07);
    }
    std::array<Tensor, 2> leaves{ft, fr};
    check_multi(out, "loss:global_distillation", leaves, [&]() {
      GlobalCorrelationMap student = global_correlation(
          l2_normalize_lastdim(ft), l2_normalize_lastdim(fr), 0.07);
      return global_correlation_distillation(student, teacher);
    });
  }

  // Reconstruction through the local correlation map on 8x8 frames.
  {
    Tensor ft = random_tensor({8, 8, 4}, rng).clone(true);
    Tensor fr = random_tensor({8, 8, 4}, rng).clone(true);
    Tensor img_r = random_tensor({8, 8, 3}, rng, 0.0, 1.0).clone(true);
    Tensor img_t = random_tensor({8, 8, 3}, rng, 0.0, 1.0);
    std::array<Tensor, 3> leaves{ft, fr, img_r};
    check_multi(out, "loss:reconstruction", leaves, [&]() {
      LocalCorrelationMap c =
          local_correlation(l2_normalize_lastdim(ft), l2_normalize_lastdim(fr), 3, 0.07);
      return reconstruction_loss(reconstruct_frame(c, img_r), img_t);
    });
  }

  // Two-level pyramid reconstruction.
  {
    Tensor ft0 = random_tensor({8, 8, 4}, rng).clone(true);
    Tensor fr0 = random_tensor({8, 8, 4}, rng).clone(true);
    Tensor ft1 = random_tensor({4, 4, 4}, rng).clone(true);
    Tensor fr1 = random_tensor({4, 4, 4}, rng).clone(true);
    Tensor i0r = random_tensor({8, 8, 3}, rng, 0.0, 1.0);
    Tensor i0t = random_tensor({8, 8, 3}, rng, 0.0, 1.0);
    Tensor i1r = random_tensor({4, 4, 3}, rng, 0.0, 1.0);
    Tensor i1t = random_tensor({4, 4, 3}, rng, 0.0, 1.0);
    std::array<Tensor, 4> leaves{ft0, fr0, ft1, fr1};
    check_multi(out, "loss:pyramid_reconstruction", leaves, [&]() {
      std::vector<LocalCorrelationMap> maps;
      maps.push_back(local_correlation(l2_normalize_lastdim(ft0), l2_normalize_lastdim(fr0), 5,
                                       0.07, 0));
      maps.push_back(local_correlation(l2_normalize_lastdim(ft1), l2_normalize_lastdim(fr1), 3,
                                       0.07, 1));
      return pyramid_reconstruction_loss(maps, {i0r, i1r}, {i0t, i1t});
    });
  }

  // Entropy-selected local correlation distillation with a pinned pseudo label.
  {
    Tensor ft = random_tensor({4, 4, 4}, rng).clone(true);
    Tensor fr = random_tensor({4, 4, 4}, rng).clone(true);
    LocalCorrelationMap pseudo;
    {
      NoGradScope no_grad;
      LocalCorrelationMap fine =
          local_correlation(l2_normalize_lastdim(random_tensor({8, 8, 4}, rng)),
                            l2_normalize_lastdim(random_tensor({8, 8, 4}, rng)), 5, 0.07);
      pseudo = correlation_downsample(fine, 2);
    }
    std::vector<std::uint8_t> mask(16, 0);
    for (std::size_t i = 0; i < mask.size(); i += 2) mask[i] = 1;
    std::array<Tensor, 2> leaves{ft, fr};
    check_multi(out, "loss:local_distillation", leaves, [&]() {
      LocalCorrelationMap student =
          local_correlation(l2_normalize_lastdim(ft), l2_normalize_lastdim(fr), 3, 0.07, 1);
      return local_correlation_distillation(student, pseudo, mask);
    });
  }
}

void composite_check(std::vector<GradCheckItem>& out) {
  EncoderConfig enc_cfg;
  enc_cfg.stage_channels = {2, 2, 2};
  enc_cfg.stage_total_strides = {2, 4, 8};
  enc_cfg.init_seed = 33;
  Encoder student(enc_cfg);

  EncoderConfig teacher_cfg = enc_cfg;
  teacher_cfg.init_seed = 77;
  Encoder teacher_src(teacher_cfg);
  Encoder teacher = teacher_src.clone_detached();
  teacher.freeze();

  SynthConfig synth;
  synth.height = 16;
  synth.width = 16;
  synth.length = 4;
  synth.sprite_count = 1;
  synth.sprite_min_size = 5;
  synth.sprite_max_size = 7;
  synth.motion_amplitude = 1;
  std::vector<SynthClip> corpus{synth_clip(synth, 5)};

  TemporalTrainConfig cfg;
  cfg.window_sizes = {5, 3};
  cfg.weights.alpha = 1.0;
  cfg.weights.beta = 10.0;
  cfg.optimizer.total_steps = 1;
  TemporalTrainer trainer(student, &teacher, corpus, cfg);

  Tensor lab_t = lab_normalize(rgb_to_lab(corpus[0].frames[1]), cfg.lab);
  Tensor lab_r = lab_normalize(rgb_to_lab(corpus[0].frames[0]), cfg.lab);

  // Capture the detached branches once, then pin them: they are stop-gradient
  // targets, so the implemented gradient is the partial derivative with the
  // pseudo label and mask held fixed.
  std::vector<std::uint8_t> mask;
  LocalCorrelationMap pseudo;
  {
    TemporalTrainer::AssembleOptions opts;
    opts.dropout_channel = 1;
    opts.mask_out = &mask;
    opts.pseudo_out = &pseudo;
    Tensor total;
    trainer.assemble_losses(lab_t, lab_r, opts, &total);
  }

  auto params = student.parameters();
  std::vector<Tensor> leaves;
  for (Tensor* p : params) leaves.push_back(*p);
  auto f = [&]() {
    TemporalTrainer::AssembleOptions opts;
    opts.dropout_channel = 1;
    opts.fixed_mask = &mask;
    opts.fixed_pseudo = &pseudo;
    Tensor total;
    trainer.assemble_losses(lab_t, lab_r, opts, &total);
    return total;
  };
  out.push_back(item("loss:total_composite", finite_difference_check_multi(f, leaves, 1e-6),
                     kCompositeTol));
}

}  // namespace

std::vector<GradCheckItem> run_gradient_suite() {
  std::vector<GradCheckItem> out;
  Rng rng(4242);
  op_checks(out, rng);
  loss_checks(out, rng);
  composite_check(out);
  return out;
}

}  // namespace vidcorr
