#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "gcoco/tensor.hpp"

namespace gcoco {

struct GradCheckOptions {
  double step = 1e-3;
  // Coordinates sampled per tensor; tensors smaller than this are checked
  // exhaustively.
  int samples_per_tensor = 24;
  unsigned seed = 0;
};

struct GradCheckResult {
  double max_relative_error = 0;
  int coordinates_checked = 0;
};

// Compares tape gradients of f against central differences.
// error = |analytic - numeric| / max(|analytic|, |numeric|, 1e-8)
template <typename Scalar>
GradCheckResult grad_check(const std::function<Tensor<Scalar>()>& f, std::vector<Tensor<Scalar>> params,
                           const GradCheckOptions& options = {}) {
  for (auto& p : params) {
    p.set_requires_grad(true);
    p.zero_grad();
  }
  backward(f());

  std::mt19937 rng(options.seed);
  GradCheckResult result;
  for (auto& p : params) {
    std::vector<Index> coords(static_cast<size_t>(p.size()));
    for (Index i = 0; i < p.size(); ++i) coords[static_cast<size_t>(i)] = i;
    if (static_cast<int>(coords.size()) > options.samples_per_tensor) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(static_cast<size_t>(options.samples_per_tensor));
    }
    const Matrix<Scalar> analytic = p.grad();
    for (Index flat : coords) {
      Scalar& x = p.mutable_value().data()[flat];
      const Scalar saved = x;
      // Fourth-order central difference.
      auto at = [&](double offset) {
        NoGradGuard no_grad;
        x = saved + static_cast<Scalar>(offset);
        return static_cast<double>(f().item());
      };
      const double h = options.step;
      const double numeric = (at(-2 * h) - 8 * at(-h) + 8 * at(h) - at(2 * h)) / (12 * h);
      x = saved;
      const double a = static_cast<double>(analytic.data()[flat]);
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      result.max_relative_error = std::max(result.max_relative_error, std::abs(a - numeric) / denom);
      ++result.coordinates_checked;
    }
  }
  return result;
}

}  // namespace gcoco
