#include "tcb/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tcb/rng.hpp"

namespace tcb {

GradCheckResult grad_check(const std::function<Var(Graph&, ParamStore&)>& loss, ParamStore& params,
                           const GradCheckOptions& options) {
  params.zero_grad();
  {
    Graph g;
    g.backward(loss(g, params));
  }
  GradCheckResult result;
  double max_diff = 0.0;
  Rng rng(options.seed, 0x67726164);
  for (auto& [name, p] : params) {
    if (!p.trainable) {
      for (double v : p.grad.values()) result.max_frozen_grad = std::max(result.max_frozen_grad, std::abs(v));
      continue;
    }
    std::vector<std::size_t> idx(p.value.size());
    std::iota(idx.begin(), idx.end(), 0);
    if (static_cast<int>(idx.size()) > options.max_entries_per_param) {
      for (std::size_t i = 0; i < static_cast<std::size_t>(options.max_entries_per_param); ++i)
        std::swap(idx[i], idx[i + static_cast<std::size_t>(rng.integer(0, static_cast<int>(idx.size() - i - 1)))]);
      idx.resize(options.max_entries_per_param);
    }
    for (std::size_t i : idx) {
      const double saved = p.value[i];
      p.value[i] = saved + options.eps;
      double up, down;
      {
        Graph g;
        up = loss(g, params).item();
      }
      p.value[i] = saved - options.eps;
      {
        Graph g;
        down = loss(g, params).item();
      }
      p.value[i] = saved;
      const double numeric = (up - down) / (2.0 * options.eps);
      max_diff = std::max(max_diff, std::abs(numeric - p.grad[i]));
      result.max_abs_numeric = std::max(result.max_abs_numeric, std::abs(numeric));
      ++result.entries_checked;
    }
  }
  result.max_rel_error = max_diff / std::max(result.max_abs_numeric, options.floor);
  return result;
}

}  // namespace tcb
