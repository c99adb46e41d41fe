#include "vidcorr/correlation.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace vidcorr {

namespace {

void require_feature_pair(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rank() != 3 || b.rank() != 3) {
    throw ShapeError(std::string(op) + ": features must be (h,w,d), got " +
                     shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

}  // namespace

int LocalCorrelationMap::valid_count(std::int64_t query) const {
  const int rad = radius();
  int count = 0;
  for (int dy = -rad; dy <= rad; ++dy)
    for (int dx = -rad; dx <= rad; ++dx)
      if (cell_valid(query, dy, dx)) ++count;
  return count;
}

GlobalCorrelationMap global_correlation(const Tensor& f_target, const Tensor& f_reference,
                                        double tau) {
  require_feature_pair(f_target, f_reference, "global_correlation");
  if (!(tau > 0.0)) throw std::invalid_argument("global_correlation: tau must be positive");
  const std::int64_t h = f_target.shape()[0], w = f_target.shape()[1], d = f_target.shape()[2];
  const std::int64_t n = h * w;
  Tensor ft = reshape(f_target, {n, d});
  Tensor fr = reshape(f_reference, {n, d});
  Tensor logits = mul_scalar(matmul_nt(ft, fr), 1.0 / tau);
  GlobalCorrelationMap map;
  map.values = softmax_lastdim(logits);
  map.tau = tau;
  map.h = h;
  map.w = w;
  return map;
}

LocalCorrelationMap local_correlation(const Tensor& f_target, const Tensor& f_reference, int r,
                                      double tau, int level) {
  require_feature_pair(f_target, f_reference, "local_correlation");
  if (!(tau > 0.0)) throw std::invalid_argument("local_correlation: tau must be positive");
  if (r < 1 || r % 2 == 0) {
    throw std::invalid_argument("local_correlation: window size must be odd, got " +
                                std::to_string(r));
  }
  const std::int64_t h = f_target.shape()[0], w = f_target.shape()[1], d = f_target.shape()[2];
  const std::int64_t n = h * w;
  const int rad = (r - 1) / 2;
  const std::int64_t cells = static_cast<std::int64_t>(r) * r;

  std::vector<double> out(static_cast<std::size_t>(n * cells), 0.0);
  const auto td = f_target.data();
  const auto rd = f_reference.data();
  std::vector<double> logits(static_cast<std::size_t>(cells));
  for (std::int64_t q = 0; q < n; ++q) {
    const std::int64_t qy = q / w, qx = q % w;
    const double* tf = &td[q * d];
    double mx = -1e300;
    for (int dy = -rad; dy <= rad; ++dy) {
      for (int dx = -rad; dx <= rad; ++dx) {
        const std::int64_t ry = qy + dy, rx = qx + dx;
        const std::size_t cell = static_cast<std::size_t>((dy + rad) * r + (dx + rad));
        if (ry < 0 || ry >= h || rx < 0 || rx >= w) {
          logits[cell] = -1e300;  // excluded from the softmax
          continue;
        }
        const double* rf = &rd[(ry * w + rx) * d];
        double acc = 0.0;
        for (std::int64_t c = 0; c < d; ++c) acc += tf[c] * rf[c];
        logits[cell] = acc / tau;
        mx = std::max(mx, logits[cell]);
      }
    }
    double z = 0.0;
    double* orow = &out[static_cast<std::size_t>(q * cells)];
    for (std::int64_t j = 0; j < cells; ++j) {
      if (logits[static_cast<std::size_t>(j)] == -1e300) continue;
      orow[j] = std::exp(logits[static_cast<std::size_t>(j)] - mx);
      z += orow[j];
    }
    for (std::int64_t j = 0; j < cells; ++j) orow[j] /= z;
  }

  LocalCorrelationMap map;
  map.level = level;
  map.h = h;
  map.w = w;
  map.r = r;
  map.values = detail::make_op(
      "local_correlation", {f_target, f_reference}, {n, r, r}, std::move(out),
      [h, w, d, r, rad, cells, tau](const detail::BackwardCtx& ctx) {
        double* dt = ctx.grad_ptr(0);
        double* dr = ctx.grad_ptr(1);
        if (!dt && !dr) return;
        const auto td = ctx.in_data(0);
        const auto rd = ctx.in_data(1);
        const auto y = ctx.out_data;
        const auto g = ctx.out_grad;
        const std::int64_t n = h * w;
        for (std::int64_t q = 0; q < n; ++q) {
          const std::int64_t qy = q / w, qx = q % w;
          const double* yrow = &y[q * cells];
          const double* grow = &g[q * cells];
          // softmax backward on the valid cells of this row
          double s = 0.0;
          for (std::int64_t j = 0; j < cells; ++j) s += grow[j] * yrow[j];
          const double* tf = &td[q * d];
          for (int dy = -rad; dy <= rad; ++dy) {
            for (int dx = -rad; dx <= rad; ++dx) {
              const std::int64_t ry = qy + dy, rx = qx + dx;
              if (ry < 0 || ry >= h || rx < 0 || rx >= w) continue;
              const std::int64_t j = static_cast<std::int64_t>(dy + rad) * r + (dx + rad);
              const double ds = yrow[j] * (grow[j] - s) / tau;
              if (ds == 0.0) continue;
              const double* rf = &rd[(ry * w + rx) * d];
              if (dt) {
                double* dtf = &dt[q * d];
                for (std::int64_t c = 0; c < d; ++c) dtf[c] += ds * rf[c];
              }
              if (dr) {
                double* drf = &dr[(ry * w + rx) * d];
                for (std::int64_t c = 0; c < d; ++c) drf[c] += ds * tf[c];
              }
            }
          }
        }
      });
  return map;
}

int compatible_fine_window(int r_coarse, int stride_ratio) {
  return stride_ratio * (r_coarse - 1) + 1;
}

LocalCorrelationMap correlation_downsample(const LocalCorrelationMap& fine, int stride_ratio) {
  if (stride_ratio < 2) throw std::invalid_argument("correlation_downsample: stride ratio must be >= 2");
  if (fine.h % stride_ratio != 0 || fine.w % stride_ratio != 0) {
    throw ShapeError("correlation_downsample: grid " + std::to_string(fine.h) + "x" +
                     std::to_string(fine.w) + " not divisible by stride ratio " +
                     std::to_string(stride_ratio));
  }
  if ((fine.r - 1) % stride_ratio != 0 || ((fine.r - 1) / stride_ratio) % 2 != 0) {
    const int rc = (fine.r - 1) / stride_ratio + 1;
    throw ShapeError("correlation_downsample: fine window " + std::to_string(fine.r) +
                     " incompatible with stride ratio " + std::to_string(stride_ratio) +
                     "; required fine window is " +
                     std::to_string(compatible_fine_window(rc | 1, stride_ratio)) +
                     " (r_fine = s*(r_coarse-1)+1, r_coarse odd)");
  }
  const int rc = (fine.r - 1) / stride_ratio + 1;
  const int rad_c = (rc - 1) / 2;
  const int rad_f = (fine.r - 1) / 2;
  const std::int64_t hc = fine.h / stride_ratio, wc = fine.w / stride_ratio;
  const std::int64_t nc = hc * wc;
  const std::int64_t cells_c = static_cast<std::int64_t>(rc) * rc;
  const std::int64_t cells_f = static_cast<std::int64_t>(fine.r) * fine.r;

  // Partition fine displacements by nearest coarse displacement, ties away
  // from zero, so the zero-motion center maps to the center cell.
  std::vector<std::vector<int>> members(static_cast<std::size_t>(rc));
  for (int df = -rad_f; df <= rad_f; ++df) {
    const double ratio = static_cast<double>(df) / static_cast<double>(stride_ratio);
    const int dc = static_cast<int>(ratio >= 0 ? std::floor(ratio + 0.5) : std::ceil(ratio - 0.5));
    if (dc >= -rad_c && dc <= rad_c) {
      members[static_cast<std::size_t>(dc + rad_c)].push_back(df);
    }
  }

  const auto vals = fine.values.data();
  std::vector<double> out(static_cast<std::size_t>(nc * cells_c), 0.0);
  for (std::int64_t Q = 0; Q < nc; ++Q) {
    const std::int64_t Qy = Q / wc, Qx = Q % wc;
    const std::int64_t qy = Qy * stride_ratio, qx = Qx * stride_ratio;
    const std::int64_t qfine = qy * fine.w + qx;
    const double* frow = &vals[qfine * cells_f];
    double* orow = &out[static_cast<std::size_t>(Q * cells_c)];
    double row_sum = 0.0;
    for (int Dy = -rad_c; Dy <= rad_c; ++Dy) {
      for (int Dx = -rad_c; Dx <= rad_c; ++Dx) {
        if (Qy + Dy < 0 || Qy + Dy >= hc || Qx + Dx < 0 || Qx + Dx >= wc) continue;
        double acc = 0.0;
        int count = 0;
        for (int fy : members[static_cast<std::size_t>(Dy + rad_c)]) {
          const std::int64_t ry = qy + fy;
          if (ry < 0 || ry >= fine.h) continue;
          for (int fx : members[static_cast<std::size_t>(Dx + rad_c)]) {
            const std::int64_t rx = qx + fx;
            if (rx < 0 || rx >= fine.w) continue;
            acc += frow[(fy + rad_f) * fine.r + (fx + rad_f)];
            ++count;
          }
        }
        if (count > 0) {
          const double v = acc / static_cast<double>(count);
          orow[(Dy + rad_c) * rc + (Dx + rad_c)] = v;
          row_sum += v;
        }
      }
    }
    if (row_sum <= 0.0) {
      throw NumericFault("correlation_downsample: empty pooled row at query " + std::to_string(Q));
    }
    for (std::int64_t j = 0; j < cells_c; ++j) orow[j] /= row_sum;
  }

  LocalCorrelationMap coarse;
  coarse.level = fine.level + 1;
  coarse.h = hc;
  coarse.w = wc;
  coarse.r = rc;
  coarse.values = Tensor::from_data({nc, rc, rc}, std::move(out));
  return coarse;
}

EntropyMap entropy_map(const LocalCorrelationMap& c, EntropyConvention convention) {
  const std::int64_t n = c.h * c.w;
  const std::int64_t cells = static_cast<std::int64_t>(c.r) * c.r;
  const auto vals = c.values.data();
  const int rad = c.radius();
  EntropyMap out;
  out.convention = convention;
  out.values.assign(static_cast<std::size_t>(n), 0.0);
  for (std::int64_t q = 0; q < n; ++q) {
    const double* row = &vals[q * cells];
    double acc = 0.0;
    for (int dy = -rad; dy <= rad; ++dy) {
      for (int dx = -rad; dx <= rad; ++dx) {
        if (!c.cell_valid(q, dy, dx)) continue;
        const double p = std::max(row[(dy + rad) * c.r + (dx + rad)], 1e-12);
        if (convention == EntropyConvention::AsWritten) {
          acc += -std::log(p);
        } else {
          acc += -p * std::log(p);
        }
      }
    }
    out.values[static_cast<std::size_t>(q)] = acc;
  }
  return out;
}

std::vector<std::uint8_t> entropy_mask(const EntropyMap& h, const ThresholdSpec& threshold) {
  double t;
  if (threshold.kind == ThresholdSpec::Kind::Absolute) {
    t = threshold.value;
  } else {
    const double q = threshold.value;
    if (!(q > 0.0 && q < 1.0)) {
      throw std::invalid_argument("entropy_mask: quantile must lie in (0,1)");
    }
    std::vector<double> sorted(h.values);
    std::sort(sorted.begin(), sorted.end());
    const auto n = static_cast<std::int64_t>(sorted.size());
    std::int64_t idx = static_cast<std::int64_t>(std::ceil(q * static_cast<double>(n))) - 1;
    idx = std::clamp<std::int64_t>(idx, 0, n - 1);
    t = sorted[static_cast<std::size_t>(idx)];
  }
  std::vector<std::uint8_t> mask(h.values.size());
  for (std::size_t i = 0; i < h.values.size(); ++i) mask[i] = h.values[i] > t ? 1 : 0;
  return mask;
}

Tensor apply_correlation(const LocalCorrelationMap& c, const Tensor& image) {
  if (image.rank() != 3) {
    throw ShapeError("apply_correlation: image must be (h,w,C), got " + shape_str(image.shape()));
  }
  if (image.shape()[0] != c.h || image.shape()[1] != c.w) {
    throw ShapeError("apply_correlation: level mismatch, map is " + std::to_string(c.h) + "x" +
                     std::to_string(c.w) + ", image is " + shape_str(image.shape()));
  }
  const std::int64_t h = c.h, w = c.w, C = image.shape()[2];
  const std::int64_t n = h * w;
  const int r = c.r, rad = c.radius();
  const std::int64_t cells = static_cast<std::int64_t>(r) * r;

  const auto cv = c.values.data();
  const auto iv = image.data();
  std::vector<double> out(static_cast<std::size_t>(n * C), 0.0);
  for (std::int64_t q = 0; q < n; ++q) {
    const std::int64_t qy = q / w, qx = q % w;
    const double* crow = &cv[q * cells];
    double* orow = &out[static_cast<std::size_t>(q * C)];
    for (int dy = -rad; dy <= rad; ++dy) {
      const std::int64_t ry = qy + dy;
      if (ry < 0 || ry >= h) continue;
      for (int dx = -rad; dx <= rad; ++dx) {
        const std::int64_t rx = qx + dx;
        if (rx < 0 || rx >= w) continue;
        const double weight = crow[(dy + rad) * r + (dx + rad)];
        const double* px = &iv[(ry * w + rx) * C];
        for (std::int64_t ch = 0; ch < C; ++ch) orow[ch] += weight * px[ch];
      }
    }
  }
  return detail::make_op(
      "apply_correlation", {c.values, image}, {h, w, C}, std::move(out),
      [h, w, C, r, rad, cells](const detail::BackwardCtx& ctx) {
        double* dc = ctx.grad_ptr(0);
        double* di = ctx.grad_ptr(1);
        if (!dc && !di) return;
        const auto cv = ctx.in_data(0);
        const auto iv = ctx.in_data(1);
        const auto g = ctx.out_grad;
        const std::int64_t n = h * w;
        for (std::int64_t q = 0; q < n; ++q) {
          const std::int64_t qy = q / w, qx = q % w;
          const double* crow = &cv[q * cells];
          const double* grow = &g[q * C];
          for (int dy = -rad; dy <= rad; ++dy) {
            const std::int64_t ry = qy + dy;
            if (ry < 0 || ry >= h) continue;
            for (int dx = -rad; dx <= rad; ++dx) {
              const std::int64_t rx = qx + dx;
              if (rx < 0 || rx >= w) continue;
              const std::int64_t cell = static_cast<std::int64_t>(dy + rad) * r + (dx + rad);
              const double* px = &iv[(ry * w + rx) * C];
              if (dc) {
                double acc = 0.0;
                for (std::int64_t ch = 0; ch < C; ++ch) acc += grow[ch] * px[ch];
                dc[q * cells + cell] += acc;
              }
              if (di) {
                const double weight = crow[cell];
                double* dpx = &di[(ry * w + rx) * C];
                for (std::int64_t ch = 0; ch < C; ++ch) dpx[ch] += weight * grow[ch];
              }
            }
          }
        }
      });
}

}  // namespace vidcorr
