#pragma once

#include <cmath>
#include <map>
#include <string>

#include "gcoco/params.hpp"

namespace gcoco {

template <typename Scalar>
struct AdamState {
  long step_count = 0;
  Scalar learning_rate = Scalar(1e-4);
  Scalar beta1 = Scalar(0.9);
  Scalar beta2 = Scalar(0.999);
  Scalar epsilon = Scalar(1e-8);
  std::map<std::string, Matrix<Scalar>> first_moment;
  std::map<std::string, Matrix<Scalar>> second_moment;
};

// Rescales gradients so their global L2 norm is at most max_norm. Returns the
// norm before clipping.
template <typename Scalar>
double clip_grad_norm(ModelParams<Scalar>& params, double max_norm) {
  double sq = 0;
  for (const auto& [name, t] : params.tensors())
    if (t.has_grad()) sq += static_cast<double>(t.grad().squaredNorm());
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0) {
    const auto factor = static_cast<Scalar>(max_norm / norm);
    for (auto& [name, t] : params.tensors())
      if (t.has_grad()) t.node()->grad *= factor;
  }
  return norm;
}

// One bias-corrected Adam update, in place.
template <typename Scalar>
void adam_step(ModelParams<Scalar>& params, AdamState<Scalar>& state) {
  if (params.frozen()) throw ContractViolation("adam_step: parameter collection is frozen");
  for (const auto& [name, t] : params.tensors())
    if (!t.has_grad()) throw ContractViolation("adam_step: missing gradient for " + name);

  ++state.step_count;
  const auto step = static_cast<Scalar>(state.step_count);
  const Scalar bias1 = Scalar(1) - std::pow(state.beta1, step);
  const Scalar bias2 = Scalar(1) - std::pow(state.beta2, step);

  for (auto& [name, t] : params.tensors()) {
    auto& m = state.first_moment[name];
    auto& v = state.second_moment[name];
    if (m.size() == 0) {
      m = Matrix<Scalar>::Zero(t.rows(), t.cols());
      v = Matrix<Scalar>::Zero(t.rows(), t.cols());
    }
    if (m.rows() != t.rows() || m.cols() != t.cols())
      throw ContractViolation("adam_step: moment shape differs for " + name);
    const auto& g = t.grad();
    m = state.beta1 * m + (Scalar(1) - state.beta1) * g;
    v = state.beta2 * v + (Scalar(1) - state.beta2) * g.cwiseAbs2();
    t.mutable_value().array() -=
        state.learning_rate * (m.array() / bias1) / ((v.array() / bias2).sqrt() + state.epsilon);
  }
}

}  // namespace gcoco
