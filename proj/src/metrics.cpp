#include "vidcorr/metrics.hpp"

#include <cmath>

#include "vidcorr/errors.hpp"

namespace vidcorr {

namespace {

void require_same_dims(const IntGrid& a, const IntGrid& b, const char* op) {
  if (a.h != b.h || a.w != b.w) {
    throw ShapeError(std::string(op) + ": mask extents differ");
  }
}

std::vector<std::pair<std::int64_t, std::int64_t>> boundary_pixels(const IntGrid& mask) {
  std::vector<std::pair<std::int64_t, std::int64_t>> out;
  for (std::int64_t y = 0; y < mask.h; ++y) {
    for (std::int64_t x = 0; x < mask.w; ++x) {
      if (!mask.at(y, x)) continue;
      const bool edge = y == 0 || y == mask.h - 1 || x == 0 || x == mask.w - 1 ||
                        !mask.at(y - 1, x) || !mask.at(y + 1, x) || !mask.at(y, x - 1) ||
                        !mask.at(y, x + 1);
      if (edge) out.emplace_back(y, x);
    }
  }
  return out;
}

double matched_fraction(const std::vector<std::pair<std::int64_t, std::int64_t>>& from,
                        const std::vector<std::pair<std::int64_t, std::int64_t>>& to,
                        double tol) {
  if (from.empty()) return 1.0;
  const double tol_sq = tol * tol;
  std::size_t matched = 0;
  for (const auto& [fy, fx] : from) {
    for (const auto& [ty, tx] : to) {
      const double dy = static_cast<double>(fy - ty);
      const double dx = static_cast<double>(fx - tx);
      if (dy * dy + dx * dx <= tol_sq) {
        ++matched;
        break;
      }
    }
  }
  return static_cast<double>(matched) / static_cast<double>(from.size());
}

}  // namespace

double region_similarity(const IntGrid& pred, const IntGrid& gt) {
  require_same_dims(pred, gt, "region_similarity");
  std::int64_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < pred.v.size(); ++i) {
    const bool p = pred.v[i] != 0, g = gt.v[i] != 0;
    inter += (p && g) ? 1 : 0;
    uni += (p || g) ? 1 : 0;
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double contour_accuracy(const IntGrid& pred, const IntGrid& gt, double tolerance_px) {
  require_same_dims(pred, gt, "contour_accuracy");
  const auto pb = boundary_pixels(pred);
  const auto gb = boundary_pixels(gt);
  if (pb.empty() && gb.empty()) return 1.0;
  if (pb.empty() || gb.empty()) return 0.0;
  const double precision = matched_fraction(pb, gb, tolerance_px);
  const double recall = matched_fraction(gb, pb, tolerance_px);
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

double default_boundary_tolerance(std::int64_t h, std::int64_t w) {
  return std::ceil(0.008 * std::sqrt(static_cast<double>(h * h + w * w)));
}

double pck(const std::vector<Keypoint>& pred, const std::vector<Keypoint>& gt, double alpha,
           double reference_size) {
  if (pred.size() != gt.size()) throw ShapeError("pck: keypoint counts differ");
  if (!(reference_size > 0.0)) throw std::invalid_argument("pck: reference_size must be positive");
  if (pred.empty()) return 1.0;
  const double threshold = alpha * reference_size;
  std::size_t ok = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double dx = pred[i].x - gt[i].x;
    const double dy = pred[i].y - gt[i].y;
    if (std::sqrt(dx * dx + dy * dy) <= threshold) ++ok;
  }
  return static_cast<double>(ok) / static_cast<double>(pred.size());
}

SegScore score_sequence(const std::vector<IntGrid>& pred, const std::vector<IntGrid>& gt,
                        int num_labels, std::vector<FrameScore>* per_frame, int sequence_id) {
  if (pred.size() != gt.size() || pred.empty()) {
    throw ShapeError("score_sequence: prediction/ground-truth length mismatch");
  }
  const double tol = default_boundary_tolerance(gt[0].h, gt[0].w);
  double jsum = 0.0, fsum = 0.0;
  std::int64_t count = 0;
  for (std::size_t t = 1; t < pred.size(); ++t) {
    double jf = 0.0, ff = 0.0;
    int objs = 0;
    for (int k = 1; k < num_labels; ++k) {
      IntGrid pk = IntGrid::zeros(pred[t].h, pred[t].w);
      IntGrid gk = IntGrid::zeros(gt[t].h, gt[t].w);
      for (std::size_t i = 0; i < pk.v.size(); ++i) {
        pk.v[i] = pred[t].v[i] == k ? 1 : 0;
        gk.v[i] = gt[t].v[i] == k ? 1 : 0;
      }
      jf += region_similarity(pk, gk);
      ff += contour_accuracy(pk, gk, tol);
      ++objs;
    }
    if (objs == 0) continue;
    jf /= objs;
    ff /= objs;
    if (per_frame) {
      per_frame->push_back(FrameScore{sequence_id, static_cast<int>(t), jf, ff});
    }
    jsum += jf;
    fsum += ff;
    ++count;
  }
  SegScore s;
  if (count > 0) {
    s.j_mean = jsum / static_cast<double>(count);
    s.f_mean = fsum / static_cast<double>(count);
  } else {
    s.j_mean = 1.0;
    s.f_mean = 1.0;
  }
  s.jf_mean = 0.5 * (s.j_mean + s.f_mean);
  return s;
}

}  // namespace vidcorr
