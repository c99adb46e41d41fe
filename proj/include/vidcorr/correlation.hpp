#pragma once

#include <cstdint>
#include <vector>

#include "vidcorr/tensor.hpp"

namespace vidcorr {

// Softmax-normalized similarity of every target position against all
// reference positions. Rows sum to 1.
struct GlobalCorrelationMap {
  Tensor values;  // (h*w, h*w)
  double tau = 0.0;
  std::int64_t h = 0, w = 0;
};

// Softmax-normalized similarity over an r x r window centered on the
// co-located pixel. Cells falling outside the reference frame are excluded
// from the softmax and stored as exact zeros.
struct LocalCorrelationMap {
  Tensor values;  // (h*w, r, r)
  int level = 0;  // pyramid level index, fine = 0
  std::int64_t h = 0, w = 0;
  int r = 0;

  int radius() const { return (r - 1) / 2; }
  bool cell_valid(std::int64_t query, int dy, int dx) const {
    const std::int64_t qy = query / w, qx = query % w;
    const std::int64_t ry = qy + dy, rx = qx + dx;
    return ry >= 0 && ry < h && rx >= 0 && rx < w;
  }
  int valid_count(std::int64_t query) const;
};

enum class EntropyConvention { AsWritten, Shannon };

struct EntropyMap {
  std::vector<double> values;  // one per query
  EntropyConvention convention = EntropyConvention::AsWritten;
};

struct ThresholdSpec {
  enum class Kind { Absolute, Quantile } kind = Kind::Quantile;
  double value = 0.5;
  static ThresholdSpec absolute(double t) { return {Kind::Absolute, t}; }
  static ThresholdSpec quantile(double q) { return {Kind::Quantile, q}; }
};

// Features must be (h,w,d) with unit-norm channels.
GlobalCorrelationMap global_correlation(const Tensor& f_target, const Tensor& f_reference,
                                        double tau);
LocalCorrelationMap local_correlation(const Tensor& f_target, const Tensor& f_reference, int r,
                                      double tau, int level = 0);

// Pools a fine-level map onto the next-coarser grid: queries are subsampled on
// the stride-aligned grid, window displacements are pooled to the nearest
// coarse displacement, and rows are renormalized. The result carries no
// gradient (it is a pseudo label).
LocalCorrelationMap correlation_downsample(const LocalCorrelationMap& fine, int stride_ratio = 2);

// Required fine window size for a target coarse window under the centered
// convention: r_fine = s * (r_coarse - 1) + 1.
int compatible_fine_window(int r_coarse, int stride_ratio);

EntropyMap entropy_map(const LocalCorrelationMap& c, EntropyConvention convention);

// m_i = 1 iff H(i) is above the threshold (absolute value or per-frame
// quantile of this map's entropies).
std::vector<std::uint8_t> entropy_mask(const EntropyMap& h, const ThresholdSpec& threshold);

// Weighted sum of reference pixels under a local correlation map:
// out(i) = sum_j c[i,j] * image(j) over the valid window cells.
Tensor apply_correlation(const LocalCorrelationMap& c, const Tensor& image);

}  // namespace vidcorr
