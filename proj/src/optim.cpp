#include "tcb/optim.hpp"

#include <cmath>

#include "tcb/error.hpp"

namespace tcb {

Adam::Adam(std::vector<std::string> names, AdamConfig config) : names_(std::move(names)), config_(config) {
  if (!(config_.lr > 0) || !(config_.beta1 >= 0 && config_.beta1 < 1) || !(config_.beta2 >= 0 && config_.beta2 < 1) ||
      !(config_.eps > 0))
    throw ConfigError("invalid Adam configuration");
}

void Adam::step(ParamStore& store) {
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, t_);
  const double c2 = 1.0 - std::pow(config_.beta2, t_);
  for (const auto& name : names_) {
    Param& p = store.at(name);
    if (!p.trainable) continue;
    Moments& s = state_[name];
    if (s.m.empty()) {
      s.m.assign(p.value.size(), 0.0);
      s.v.assign(p.value.size(), 0.0);
    }
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      s.m[i] = config_.beta1 * s.m[i] + (1.0 - config_.beta1) * g;
      s.v[i] = config_.beta2 * s.v[i] + (1.0 - config_.beta2) * g * g;
      const double mhat = s.m[i] / c1;
      const double vhat = s.v[i] / c2;
      p.value[i] -= config_.lr * mhat / (std::sqrt(vhat) + config_.eps);
      if (!std::isfinite(p.value[i])) throw DivergenceError("non-finite value in parameter " + name);
    }
  }
}

void Adam::zero_grad(ParamStore& store) const {
  for (const auto& name : names_) store.at(name).grad.fill(0.0);
}

}  // namespace tcb
