#include "vidcorr/optim.hpp"

#include <cmath>

namespace vidcorr {

Adam::Adam(std::vector<Tensor*> params, const AdamConfig& config)
    : params_(std::move(params)), config_(config) {
  if (config_.cosine && config_.total_steps <= 0) {
    throw std::invalid_argument("adam: cosine schedule needs total_steps > 0");
  }
  for (Tensor* p : params_) {
    if (!p->requires_grad()) {
      throw std::invalid_argument("adam: parameter without gradient buffer");
    }
    m_.emplace_back(p->size(), 0.0);
    v_.emplace_back(p->size(), 0.0);
  }
}

double Adam::current_lr() const {
  if (!config_.cosine) return config_.lr;
  const double frac = std::min(1.0, static_cast<double>(t_) / static_cast<double>(config_.total_steps));
  return config_.lr * 0.5 * (1.0 + std::cos(M_PI * frac));
}

void Adam::step() {
  const double lr = current_lr();
  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = *params_[i];
    const auto g = p.grad();
    auto w = p.raw_data();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * g[j];
      v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      w[j] -= lr * mhat / (std::sqrt(vhat) + config_.eps);
    }
    p.zero_grad();
  }
}

}  // namespace vidcorr
