#pragma once

#include <cstdint>
#include <vector>

#include "vidcorr/data.hpp"

namespace vidcorr {

// Region similarity J: intersection over union of binary masks; 1 when both
// are empty.
double region_similarity(const IntGrid& pred, const IntGrid& gt);

// Boundary F-measure: boundary pixels (4-connectivity, frame border counts as
// outside) matched within tolerance_px, F = 2PR/(P+R).
double contour_accuracy(const IntGrid& pred, const IntGrid& gt, double tolerance_px);

// DAVIS-style default tolerance: 0.8% of the image diagonal, rounded up.
double default_boundary_tolerance(std::int64_t h, std::int64_t w);

struct Keypoint {
  double x = 0.0;
  double y = 0.0;
};

// Fraction of keypoints with Euclidean error <= alpha * reference_size.
// Asymmetric in (pred, gt) by construction.
double pck(const std::vector<Keypoint>& pred, const std::vector<Keypoint>& gt, double alpha,
           double reference_size);

struct SegScore {
  double j_mean = 0.0;
  double f_mean = 0.0;
  double jf_mean = 0.0;
};

struct FrameScore {
  int sequence = 0;
  int frame = 0;
  double j = 0.0;
  double f = 0.0;
};

// Mean J/F over frames 1..T-1 and all object ids >= 1 of a sequence.
SegScore score_sequence(const std::vector<IntGrid>& pred, const std::vector<IntGrid>& gt,
                        int num_labels, std::vector<FrameScore>* per_frame = nullptr,
                        int sequence_id = 0);

}  // namespace vidcorr
