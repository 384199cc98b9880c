#pragma once

// Primitive differentiable operations over Tensor. Every op here has a
// hand-written backward and is covered by the finite-difference checks in
// tests/test_ops.cpp.

#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "gcoco/tensor.hpp"

namespace gcoco {

namespace detail {

template <typename Scalar>
void accumulate(Node<Scalar>& target, const auto& contribution) {
  if (!target.requires_grad) return;
  target.ensure_grad();
  target.grad += contribution;
}

inline std::string shape_str(Index r, Index c) { return "[" + std::to_string(r) + "," + std::to_string(c) + "]"; }

template <typename Scalar>
void require_same_shape(const Tensor<Scalar>& a, const Tensor<Scalar>& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ContractViolation(std::string(op) + ": shape mismatch " + shape_str(a.rows(), a.cols()) + " vs " +
                            shape_str(b.rows(), b.cols()));
}

}  // namespace detail

// [m,k] x [k,n] -> [m,n]
template <typename Scalar>
Tensor<Scalar> matmul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.cols() != b.rows())
    throw ContractViolation("matmul: inner dimensions differ " + detail::shape_str(a.rows(), a.cols()) + " x " +
                            detail::shape_str(b.rows(), b.cols()));
  Matrix<Scalar> out(a.rows(), b.cols());
  out.noalias() = a.value() * b.value();
  return Tensor<Scalar>::from_op(std::move(out), {a, b}, [](detail::Node<Scalar>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      pa.ensure_grad();
      pa.grad.noalias() += self.grad * pb.value.transpose();
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      pb.grad.noalias() += pa.value.transpose() * self.grad;
    }
  });
}

// [m,k] x [n,k]^T -> [m,n]
template <typename Scalar>
Tensor<Scalar> matmul_nt(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.cols() != b.cols())
    throw ContractViolation("matmul_nt: inner dimensions differ " + detail::shape_str(a.rows(), a.cols()) + " x " +
                            detail::shape_str(b.rows(), b.cols()) + "^T");
  Matrix<Scalar> out(a.rows(), b.rows());
  out.noalias() = a.value() * b.value().transpose();
  return Tensor<Scalar>::from_op(std::move(out), {a, b}, [](detail::Node<Scalar>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      pa.ensure_grad();
      pa.grad.noalias() += self.grad * pb.value;
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      pb.grad.noalias() += self.grad.transpose() * pa.value;
    }
  });
}

template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::require_same_shape(a, b, "add");
  return Tensor<Scalar>::from_op(a.value() + b.value(), {a, b}, [](detail::Node<Scalar>& self) {
    detail::accumulate(*self.parents[0], self.grad);
    detail::accumulate(*self.parents[1], self.grad);
  });
}

template <typename Scalar>
Tensor<Scalar> sub(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::require_same_shape(a, b, "sub");
  return Tensor<Scalar>::from_op(a.value() - b.value(), {a, b}, [](detail::Node<Scalar>& self) {
    detail::accumulate(*self.parents[0], self.grad);
    detail::accumulate(*self.parents[1], -self.grad);
  });
}

// Elementwise product.
template <typename Scalar>
Tensor<Scalar> mul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::require_same_shape(a, b, "mul");
  return Tensor<Scalar>::from_op(a.value().cwiseProduct(b.value()), {a, b}, [](detail::Node<Scalar>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    detail::accumulate(pa, self.grad.cwiseProduct(pb.value));
    detail::accumulate(pb, self.grad.cwiseProduct(pa.value));
  });
}

template <typename Scalar>
Tensor<Scalar> scale(const Tensor<Scalar>& a, Scalar factor) {
  return Tensor<Scalar>::from_op(a.value() * factor, {a}, [factor](detail::Node<Scalar>& self) {
    detail::accumulate(*self.parents[0], self.grad * factor);
  });
}

template <typename Scalar>
Tensor<Scalar> operator+(const Tensor<Scalar>& a, const Tensor<Scalar>& b) { return add(a, b); }
template <typename Scalar>
Tensor<Scalar> operator-(const Tensor<Scalar>& a, const Tensor<Scalar>& b) { return sub(a, b); }

// Adds a [1,n] row to every row of a [m,n] tensor.
template <typename Scalar>
Tensor<Scalar> add_row(const Tensor<Scalar>& a, const Tensor<Scalar>& row) {
  if (row.rows() != 1 || row.cols() != a.cols())
    throw ContractViolation("add_row: expected [1," + std::to_string(a.cols()) + "] row, got " +
                            detail::shape_str(row.rows(), row.cols()));
  Matrix<Scalar> out = a.value().rowwise() + row.value().row(0);
  return Tensor<Scalar>::from_op(std::move(out), {a, row}, [](detail::Node<Scalar>& self) {
    detail::accumulate(*self.parents[0], self.grad);
    detail::accumulate(*self.parents[1], self.grad.colwise().sum());
  });
}

// Adds a constant (non-differentiable) matrix, e.g. an attention mask.
template <typename Scalar>
Tensor<Scalar> add_constant(const Tensor<Scalar>& a, const Matrix<Scalar>& c) {
  if (a.rows() != c.rows() || a.cols() != c.cols())
    throw ContractViolation("add_constant: shape mismatch");
  return Tensor<Scalar>::from_op(a.value() + c, {a}, [](detail::Node<Scalar>& self) {
    detail::accumulate(*self.parents[0], self.grad);
  });
}

template <typename Scalar>
Tensor<Scalar> softmax_rows(const Tensor<Scalar>& a) {
  Matrix<Scalar> out(a.rows(), a.cols());
  for (Index r = 0; r < a.rows(); ++r) {
    const Scalar m = a.value().row(r).maxCoeff();
    out.row(r) = (a.value().row(r).array() - m).exp();
    out.row(r) /= out.row(r).sum();
  }
  return Tensor<Scalar>::from_op(std::move(out), {a}, [](detail::Node<Scalar>& self) {
    auto& pa = *self.parents[0];
    if (!pa.requires_grad) return;
    pa.ensure_grad();
    const auto& y = self.value;
    for (Index r = 0; r < y.rows(); ++r) {
      const Scalar dot = self.grad.row(r).dot(y.row(r));
      pa.grad.row(r).array() += y.row(r).array() * (self.grad.row(r).array() - dot);
    }
  });
}

template <typename Scalar>
Tensor<Scalar> log_softmax_rows(const Tensor<Scalar>& a) {
  Matrix<Scalar> out(a.rows(), a.cols());
  for (Index r = 0; r < a.rows(); ++r) {
    const Scalar m = a.value().row(r).maxCoeff();
    const Scalar lse = m + std::log((a.value().row(r).array() - m).exp().sum());
    out.row(r) = a.value().row(r).array() - lse;
  }
  return Tensor<Scalar>::from_op(std::move(out), {a}, [](detail::Node<Scalar>& self) {
    auto& pa = *self.parents[0];
    if (!pa.requires_grad) return;
    pa.ensure_grad();
    for (Index r = 0; r < self.value.rows(); ++r) {
      const Scalar total = self.grad.row(r).sum();
      pa.grad.row(r).array() += self.grad.row(r).array() - self.value.row(r).array().exp() * total;
    }
  });
}

// Per-row normalization with learned [1,n] gain and bias.
template <typename Scalar>
Tensor<Scalar> layer_norm(const Tensor<Scalar>& x, const Tensor<Scalar>& gamma, const Tensor<Scalar>& beta,
                          Scalar eps = Scalar(1e-5)) {
  const Index n = x.cols();
  if (gamma.rows() != 1 || gamma.cols() != n || beta.rows() != 1 || beta.cols() != n)
    throw ContractViolation("layer_norm: gain/bias must be [1," + std::to_string(n) + "]");
  Matrix<Scalar> xhat(x.rows(), n);
  std::vector<Scalar> inv_std(static_cast<size_t>(x.rows()));
  for (Index r = 0; r < x.rows(); ++r) {
    const Scalar mean = x.value().row(r).mean();
    const Scalar var = (x.value().row(r).array() - mean).square().mean();
    inv_std[static_cast<size_t>(r)] = Scalar(1) / std::sqrt(var + eps);
    xhat.row(r) = (x.value().row(r).array() - mean) * inv_std[static_cast<size_t>(r)];
  }
  Matrix<Scalar> out = (xhat.array().rowwise() * gamma.value().row(0).array()).rowwise() + beta.value().row(0).array();
  return Tensor<Scalar>::from_op(
      std::move(out), {x, gamma, beta},
      [xhat = std::move(xhat), inv_std = std::move(inv_std)](detail::Node<Scalar>& self) {
        auto& px = *self.parents[0];
        auto& pg = *self.parents[1];
        auto& pb = *self.parents[2];
        detail::accumulate(pg, self.grad.cwiseProduct(xhat).colwise().sum());
        detail::accumulate(pb, self.grad.colwise().sum());
        if (!px.requires_grad) return;
        px.ensure_grad();
        const Index n = xhat.cols();
        for (Index r = 0; r < xhat.rows(); ++r) {
          const auto dxhat = (self.grad.row(r).array() * pg.value.row(0).array()).eval();
          const Scalar mean_d = dxhat.mean();
          const Scalar mean_dx = (dxhat * xhat.row(r).array()).sum() / Scalar(n);
          px.grad.row(r).array() +=
              inv_std[static_cast<size_t>(r)] * (dxhat - mean_d - xhat.row(r).array() * mean_dx);
        }
      });
}

// Exact (erf-based) GELU.
template <typename Scalar>
Tensor<Scalar> gelu(const Tensor<Scalar>& a) {
  const Scalar inv_sqrt2 = Scalar(0.70710678118654752440);
  Matrix<Scalar> out = a.value().unaryExpr([inv_sqrt2](Scalar v) {
    return Scalar(0.5) * v * (Scalar(1) + std::erf(v * inv_sqrt2));
  });
  return Tensor<Scalar>::from_op(std::move(out), {a}, [inv_sqrt2](detail::Node<Scalar>& self) {
    auto& pa = *self.parents[0];
    if (!pa.requires_grad) return;
    pa.ensure_grad();
    const Scalar inv_sqrt_2pi = Scalar(0.39894228040143267794);
    Matrix<Scalar> d = pa.value.unaryExpr([&](Scalar v) {
      return Scalar(0.5) * (Scalar(1) + std::erf(v * inv_sqrt2)) + v * inv_sqrt_2pi * std::exp(Scalar(-0.5) * v * v);
    });
    pa.grad += self.grad.cwiseProduct(d);
  });
}

// Gathers rows of a [V,d] table.
template <typename Scalar>
Tensor<Scalar> embedding(const Tensor<Scalar>& table, std::span<const int> ids) {
  if (ids.empty()) throw ContractViolation("embedding: empty id sequence");
  Matrix<Scalar> out(static_cast<Index>(ids.size()), table.cols());
  for (size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= table.rows())
      throw ContractViolation("embedding: id " + std::to_string(ids[i]) + " outside table of " +
                              std::to_string(table.rows()) + " rows");
    out.row(static_cast<Index>(i)) = table.value().row(ids[i]);
  }
  return Tensor<Scalar>::from_op(std::move(out), {table},
                                 [ids = std::vector<int>(ids.begin(), ids.end())](detail::Node<Scalar>& self) {
                                   auto& pt = *self.parents[0];
                                   if (!pt.requires_grad) return;
                                   pt.ensure_grad();
                                   for (size_t i = 0; i < ids.size(); ++i)
                                     pt.grad.row(ids[i]) += self.grad.row(static_cast<Index>(i));
                                 });
}

// Stacks tensors along the sequence (row) axis.
template <typename Scalar>
Tensor<Scalar> concat_rows(const std::vector<Tensor<Scalar>>& parts) {
  if (parts.empty()) throw ContractViolation("concat_rows: nothing to concatenate");
  Index rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != parts.front().cols()) throw ContractViolation("concat_rows: column counts differ");
    rows += p.rows();
  }
  Matrix<Scalar> out(rows, parts.front().cols());
  Index at = 0;
  for (const auto& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  return Tensor<Scalar>::from_op(std::move(out), parts, [](detail::Node<Scalar>& self) {
    Index at = 0;
    for (auto& p : self.parents) {
      const Index r = p->value.rows();
      detail::accumulate(*p, self.grad.middleRows(at, r));
      at += r;
    }
  });
}

template <typename Scalar>
Tensor<Scalar> slice_rows(const Tensor<Scalar>& a, Index begin, Index count) {
  if (begin < 0 || count <= 0 || begin + count > a.rows())
    throw ContractViolation("slice_rows: range [" + std::to_string(begin) + "," + std::to_string(begin + count) +
                            ") outside " + std::to_string(a.rows()) + " rows");
  return Tensor<Scalar>::from_op(a.value().middleRows(begin, count), {a}, [begin, count](detail::Node<Scalar>& self) {
    auto& pa = *self.parents[0];
    if (!pa.requires_grad) return;
    pa.ensure_grad();
    pa.grad.middleRows(begin, count) += self.grad;
  });
}

template <typename Scalar>
Tensor<Scalar> concat_cols(const std::vector<Tensor<Scalar>>& parts) {
  if (parts.empty()) throw ContractViolation("concat_cols: nothing to concatenate");
  Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != parts.front().rows()) throw ContractViolation("concat_cols: row counts differ");
    cols += p.cols();
  }
  Matrix<Scalar> out(parts.front().rows(), cols);
  Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  return Tensor<Scalar>::from_op(std::move(out), parts, [](detail::Node<Scalar>& self) {
    Index at = 0;
    for (auto& p : self.parents) {
      const Index c = p->value.cols();
      detail::accumulate(*p, self.grad.middleCols(at, c));
      at += c;
    }
  });
}

template <typename Scalar>
Tensor<Scalar> slice_cols(const Tensor<Scalar>& a, Index begin, Index count) {
  if (begin < 0 || count <= 0 || begin + count > a.cols())
    throw ContractViolation("slice_cols: range outside tensor");
  return Tensor<Scalar>::from_op(a.value().middleCols(begin, count), {a}, [begin, count](detail::Node<Scalar>& self) {
    auto& pa = *self.parents[0];
    if (!pa.requires_grad) return;
    pa.ensure_grad();
    pa.grad.middleCols(begin, count) += self.grad;
  });
}

template <typename Scalar>
Tensor<Scalar> sum(const Tensor<Scalar>& a) {
  return Tensor<Scalar>::from_op(Matrix<Scalar>::Constant(1, 1, a.value().sum()), {a}, [](detail::Node<Scalar>& self) {
    auto& pa = *self.parents[0];
    if (!pa.requires_grad) return;
    pa.ensure_grad();
    pa.grad.array() += self.grad(0, 0);
  });
}

template <typename Scalar>
Tensor<Scalar> mean(const Tensor<Scalar>& a) {
  return scale(sum(a), Scalar(1) / static_cast<Scalar>(a.size()));
}

// Averages a list of scalar tensors.
template <typename Scalar>
Tensor<Scalar> mean_of(const std::vector<Tensor<Scalar>>& scalars) {
  if (scalars.empty()) throw ContractViolation("mean_of: empty list");
  return scale(sum(concat_rows(scalars)), Scalar(1) / static_cast<Scalar>(scalars.size()));
}

}  // namespace gcoco
