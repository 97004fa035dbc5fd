#pragma once

#include <cmath>
#include <functional>

#include "dagrnn/rng.hpp"
#include "dagrnn/tensor.hpp"

namespace dagrnn::testutil {

inline Tensor random_tensor(std::vector<size_t> shape, Rng& rng, double lo = -1.0,
                            double hi = 1.0) {
  Tensor t(std::move(shape));
  for (size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// Central finite differences of a scalar function w.r.t. one tensor, checked
// entry by entry against the analytic gradient. Returns the worst relative
// error, measured against the larger gradient magnitude seen in the tensor.
inline double fd_max_rel_err(Tensor& param, const Tensor& analytic,
                             const std::function<double()>& loss,
                             double step = 1e-6) {
  double scale = 0.0, max_diff = 0.0;
  std::vector<double> numeric(param.size());
  for (size_t i = 0; i < param.size(); ++i) {
    const double saved = param[i];
    param[i] = saved + step;
    const double up = loss();
    param[i] = saved - step;
    const double down = loss();
    param[i] = saved;
    numeric[i] = (up - down) / (2.0 * step);
    scale = std::max({scale, std::abs(numeric[i]), std::abs(analytic[i])});
  }
  for (size_t i = 0; i < param.size(); ++i) {
    max_diff = std::max(max_diff, std::abs(numeric[i] - analytic[i]));
  }
  return max_diff / std::max(scale, 1e-12);
}

}  // namespace dagrnn::testutil
