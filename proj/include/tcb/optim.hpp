#pragma once

#include <map>
#include <string>
#include <vector>

#include "tcb/autograd.hpp"

namespace tcb {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adaptive-moment optimizer over a fixed subset of a ParamStore.
class Adam {
 public:
  Adam(std::vector<std::string> names, AdamConfig config);

  /// Apply one update from the accumulated gradients of the owned
  /// parameters. Frozen parameters are skipped. Throws DivergenceError if an
  /// update produces a non-finite value.
  void step(ParamStore& store);
  void zero_grad(ParamStore& store) const;
  int steps() const { return t_; }
  const std::vector<std::string>& names() const { return names_; }
  const AdamConfig& config() const { return config_; }

 private:
  struct Moments {
    std::vector<double> m, v;
  };
  std::vector<std::string> names_;
  AdamConfig config_;
  std::map<std::string, Moments> state_;
  int t_ = 0;
};

}  // namespace tcb
