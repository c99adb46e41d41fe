#pragma once

#include <string>
#include <vector>

namespace vidcorr {

struct GradCheckItem {
  std::string name;
  double max_rel_err = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

// Finite-difference verification of every op's backward rule and of each loss
// (contrastive, global/local distillation, reconstruction, pyramid, and the
// full weighted objective through a tiny encoder). Losses in isolation check
// at 1e-4; the composite through the encoder at 1e-3.
std::vector<GradCheckItem> run_gradient_suite();

}  // namespace vidcorr
