#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "fgcn/tensor.hpp"

namespace fgcn {

struct SgdOptions {
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 0.0;
  double grad_clip = 0.0;  // global L2 norm; 0 disables
};

// Classical momentum: v <- momentum * v + g ; p <- p - lr * v.
//
// Every trainable parameter must have received a gradient since the last
// zero_grad(); otherwise the step is refused and the missing names listed.
template <typename T>
void sgd_momentum_step(ParamStore<T>& params, const SgdOptions& opt) {
  std::string missing;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    if (p.trainable && !p.has_grad) missing += (missing.empty() ? "" : ", ") + p.name;
  }
  if (!missing.empty()) throw Error("missing gradient for parameter(s): " + missing);

  T clip_scale = T(1);
  if (opt.grad_clip > 0) {
    T sq = 0;
    for (std::size_t i = 0; i < params.size(); ++i)
      if (params[i].trainable)
        for (const T& g : params[i].grad.data) sq += g * g;
    const T norm = std::sqrt(sq);
    if (norm > static_cast<T>(opt.grad_clip)) clip_scale = static_cast<T>(opt.grad_clip) / norm;
  }

  const T lr = static_cast<T>(opt.lr);
  const T mu = static_cast<T>(opt.momentum);
  const T wd = static_cast<T>(opt.weight_decay);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (!p.trainable) continue;
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const T g = clip_scale * p.grad.data[j] + wd * p.value.data[j];
      T& v = p.velocity.data[j];
      v = mu * v + g;
      p.value.data[j] -= lr * v;
    }
  }
}

// Step schedule: base_lr divided by `factor` at each drop epoch (1-based,
// the drop applies from that epoch onward).
struct StepSchedule {
  double base_lr = 0.1;
  std::vector<int> drop_epochs{40, 60};
  double factor = 10.0;

  double lr_at(int epoch) const {
    double lr = base_lr;
    for (int d : drop_epochs)
      if (epoch >= d) lr /= factor;
    return lr;
  }
};

}  // namespace fgcn
