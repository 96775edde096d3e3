#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "patchnet/params.hpp"

namespace patchnet::nn {

// Adam with bias correction. Moment buffers are addressed by parameter name
// and mirror the parameter shapes.
class AdamState {
public:
  AdamState(double learning_rate = 1e-4, double beta1 = 0.9,
            double beta2 = 0.999, double epsilon = 1e-8)
      : alpha_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {}

  std::uint64_t steps() const { return t_; }

  void step(ParamStore& params) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (auto& [name, p] : params) {
      Moments& mo = moments_[name];
      if (mo.m.empty()) {
        mo.m.assign(p.size(), 0.0);
        mo.v.assign(p.size(), 0.0);
      }
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double g = p.grad[i];
        mo.m[i] = beta1_ * mo.m[i] + (1.0 - beta1_) * g;
        mo.v[i] = beta2_ * mo.v[i] + (1.0 - beta2_) * g * g;
        const double mhat = mo.m[i] / bc1;
        const double vhat = mo.v[i] / bc2;
        p.values[i] -= alpha_ * mhat / (std::sqrt(vhat) + eps_);
      }
    }
  }

private:
  struct Moments {
    std::vector<double> m, v;
  };
  double alpha_, beta1_, beta2_, eps_;
  std::uint64_t t_ = 0;
  std::map<std::string, Moments> moments_;
};

// Scales all gradients so their global L2 norm is at most max_norm.
// A non-positive max_norm disables clipping.
inline void clip_gradients(ParamStore& params, double max_norm) {
  if (max_norm <= 0.0) return;
  double sq = 0.0;
  for (const auto& [name, p] : params)
    for (double g : p.grad) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm <= max_norm || norm == 0.0) return;
  const double scale = max_norm / norm;
  for (auto& [name, p] : params)
    for (double& g : p.grad) g *= scale;
}

}  // namespace patchnet::nn
