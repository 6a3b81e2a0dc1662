#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "mvad/backbone.hpp"
#include "mvad/errors.hpp"

namespace mvad::testing {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;  // "<layer>/<name>[index]"
  std::size_t checked = 0;
};

// Central differences over every element of `params`, compared with the
// matching element of `analytic`. Relative error is |a - n| / max(|a|, |n|, floor).
// At h = 1e-5 a central difference carries roundoff near eps * |loss| / h,
// about 1e-10 here, so gradients that vanish analytically (biases feeding
// batch norm) have no relative accuracy below `floor`.
inline GradCheckResult check_gradients(const std::vector<TensorRef>& params,
                                       const std::vector<TensorRef>& analytic,
                                       const std::function<double()>& loss, double h = 1e-5,
                                       double floor = 1e-5) {
  GradCheckResult out;
  require(params.size() == analytic.size(), ErrorKind::kDimensionError,
          "parameter and gradient lists differ in length");
  for (std::size_t t = 0; t < params.size(); ++t) {
    require(params[t].data.size() == analytic[t].data.size(), ErrorKind::kDimensionError,
            "gradient of " + params[t].layer + "/" + params[t].name + " has the wrong size");
    for (std::size_t i = 0; i < params[t].data.size(); ++i) {
      double& x = params[t].data[i];
      const double saved = x;
      x = saved + h;
      const double up = loss();
      x = saved - h;
      const double down = loss();
      x = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[t].data[i];
      const double scale = std::max({std::abs(a), std::abs(numeric), floor});
      const double rel = std::abs(a - numeric) / scale;
      ++out.checked;
      if (rel > out.max_rel_error) {
        out.max_rel_error = rel;
        out.worst = params[t].layer + "/" + params[t].name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return out;
}

}  // namespace mvad::testing
