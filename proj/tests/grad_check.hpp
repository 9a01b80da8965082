#pragma once

// Central finite-difference helpers shared by the gradient tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "farfield/rng.hpp"

namespace farfield::testing {

struct GradCheckResult {
  double worst_rel = 0.0;
  std::size_t checked = 0;
};

/// Perturbs `count` random coordinates of `values` with step h = rel_step * max(|x|, 1)
/// and compares (f(x+h) - f(x-h)) / 2h against `analytic`.
inline GradCheckResult check_coordinates(std::span<double> values, std::span<const double> analytic,
                                         const std::function<double()>& loss, std::size_t count,
                                         Rng& rng, double rel_step = 1e-4) {
  GradCheckResult r;
  const std::size_t n = values.size();
  std::vector<std::size_t> idx;
  if (n <= count) {
    for (std::size_t i = 0; i < n; ++i) idx.push_back(i);
  } else {
    for (std::size_t i = 0; i < count; ++i) idx.push_back(rng.uniform_int(n));
  }
  for (std::size_t i : idx) {
    const double x = values[i];
    const double h = rel_step * std::max(std::abs(x), 1.0);
    values[i] = x + h;
    const double up = loss();
    values[i] = x - h;
    const double down = loss();
    values[i] = x;
    const double fd = (up - down) / (2 * h);
    const double a = analytic[i];
    const double denom = std::max({std::abs(fd), std::abs(a), 1e-7});
    r.worst_rel = std::max(r.worst_rel, std::abs(fd - a) / denom);
    ++r.checked;
  }
  return r;
}

}  // namespace farfield::testing
