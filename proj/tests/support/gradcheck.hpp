#pragma once

// Central finite-difference oracle for gradient checks. Test-only; it
// never calls any backward pass.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace meg::testing {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
};

inline double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / denom;
}

/// Compares `analytic[i]` against (L(x+h) - L(x-h)) / 2h for each coordinate.
inline GradCheckResult check_gradient(const std::vector<double*>& coords, const std::vector<double>& analytic,
                                      const std::function<double()>& loss, double h = 1e-4) {
  GradCheckResult r;
  for (std::size_t i = 0; i < coords.size(); ++i) {
    double& x = *coords[i];
    const double saved = x;
    x = saved + h;
    const double lp = loss();
    x = saved - h;
    const double lm = loss();
    x = saved;
    const double numeric = (lp - lm) / (2.0 * h);
    const double e = relative_error(analytic[i], numeric);
    if (e > r.max_rel_error) {
      r.max_rel_error = e;
      r.worst_index = i;
    }
  }
  return r;
}

}  // namespace meg::testing
