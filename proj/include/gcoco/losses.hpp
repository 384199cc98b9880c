#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "gcoco/ops.hpp"

namespace gcoco {

// Per-position log-probabilities over the vocabulary. Rows whose mask entry
// is false are ignored by every loss.
template <typename Scalar>
struct Distribution {
  Tensor<Scalar> logprobs;  // [seq_len, vocab]
  std::vector<bool> mask;   // true = position counted

  Index length() const { return logprobs.rows(); }
  Index vocab_size() const { return logprobs.cols(); }
  Index active_positions() const {
    Index n = 0;
    for (bool m : mask) n += m ? 1 : 0;
    return n;
  }
  Distribution detach() const { return {logprobs.detach(), mask}; }
};

enum class KlDirection {
  kAsPaper,   // KL(student || teacher), student first
  kReversed,  // KL(teacher || student)
};

namespace detail {

template <typename Scalar>
void check_logprobs(const Matrix<Scalar>& m, const std::vector<bool>& mask, const char* what) {
  for (Index r = 0; r < m.rows(); ++r) {
    if (!mask[static_cast<size_t>(r)]) continue;
    for (Index c = 0; c < m.cols(); ++c) {
      const Scalar v = m(r, c);
      // -inf is a legitimate log(0); NaN and +inf are not.
      if (std::isnan(v) || v == std::numeric_limits<Scalar>::infinity())
        throw NumericError(std::string(what) + ": non-finite log-probability at row " + std::to_string(r) +
                           ", column " + std::to_string(c));
    }
  }
}

// exp(a) * (a - b) with the 0 * ln 0 = 0 convention.
template <typename Scalar>
Scalar kl_term(Scalar a, Scalar b) {
  if (a == -std::numeric_limits<Scalar>::infinity()) return Scalar(0);
  return std::exp(a) * (a - b);
}

}  // namespace detail

// Mean over unmasked positions of sum_v exp(p_v) (p_v - q_v). Gradients flow
// into whichever argument is on the tape; in training only p is.
template <typename Scalar>
Tensor<Scalar> kl_divergence(const Distribution<Scalar>& p, const Distribution<Scalar>& q) {
  if (p.logprobs.rows() != q.logprobs.rows() || p.logprobs.cols() != q.logprobs.cols())
    throw ContractViolation("kl_divergence: shape mismatch " + detail::shape_str(p.length(), p.vocab_size()) +
                            " vs " + detail::shape_str(q.length(), q.vocab_size()));
  if (p.mask != q.mask) throw ContractViolation("kl_divergence: mask mismatch");
  if (p.mask.size() != static_cast<size_t>(p.length()))
    throw ContractViolation("kl_divergence: mask length differs from sequence length");
  const Index active = p.active_positions();
  if (active == 0) throw ContractViolation("kl_divergence: empty mask");
  detail::check_logprobs(p.logprobs.value(), p.mask, "kl_divergence(p)");
  detail::check_logprobs(q.logprobs.value(), q.mask, "kl_divergence(q)");

  const auto& pv = p.logprobs.value();
  const auto& qv = q.logprobs.value();
  Scalar total = 0;
  for (Index r = 0; r < pv.rows(); ++r) {
    if (!p.mask[static_cast<size_t>(r)]) continue;
    for (Index c = 0; c < pv.cols(); ++c) total += detail::kl_term(pv(r, c), qv(r, c));
  }
  if (!std::isfinite(total)) throw NumericError("kl_divergence: divergence is not finite");
  const Scalar inv = Scalar(1) / static_cast<Scalar>(active);

  return Tensor<Scalar>::from_op(
      Matrix<Scalar>::Constant(1, 1, total * inv), {p.logprobs, q.logprobs},
      [mask = p.mask, inv](detail::Node<Scalar>& self) {
        auto& pp = *self.parents[0];
        auto& pq = *self.parents[1];
        const Scalar g = self.grad(0, 0) * inv;
        const Scalar neg_inf = -std::numeric_limits<Scalar>::infinity();
        if (pp.requires_grad) pp.ensure_grad();
        if (pq.requires_grad) pq.ensure_grad();
        for (Index r = 0; r < pp.value.rows(); ++r) {
          if (!mask[static_cast<size_t>(r)]) continue;
          for (Index c = 0; c < pp.value.cols(); ++c) {
            const Scalar a = pp.value(r, c);
            const Scalar b = pq.value(r, c);
            if (a == neg_inf) continue;
            const Scalar pa = std::exp(a);
            if (pp.requires_grad) pp.grad(r, c) += g * pa * (a - b + Scalar(1));
            if (pq.requires_grad) pq.grad(r, c) -= g * pa;
          }
        }
      });
}

// Applies the configured argument order. The student distribution is the
// one carrying gradients.
template <typename Scalar>
Tensor<Scalar> distillation_loss(const Distribution<Scalar>& student, const Distribution<Scalar>& teacher,
                                 KlDirection direction) {
  return direction == KlDirection::kAsPaper ? kl_divergence(student, teacher) : kl_divergence(teacher, student);
}

// Mean negative log-likelihood of targets under softmax(logits) over the
// unmasked positions. Gradient w.r.t. logits is (softmax - onehot) / count.
template <typename Scalar>
Tensor<Scalar> cross_entropy(const Tensor<Scalar>& logits, std::span<const int> targets, const std::vector<bool>& mask) {
  if (static_cast<Index>(targets.size()) != logits.rows() || mask.size() != targets.size())
    throw ContractViolation("cross_entropy: targets/mask length must equal logits rows");
  Index active = 0;
  for (size_t i = 0; i < targets.size(); ++i) {
    if (!mask[i]) continue;
    if (targets[i] < 0 || targets[i] >= logits.cols())
      throw ContractViolation("cross_entropy: target id " + std::to_string(targets[i]) + " outside vocabulary of " +
                              std::to_string(logits.cols()));
    ++active;
  }
  if (active == 0) throw ContractViolation("empty mask");

  Matrix<Scalar> probs(logits.rows(), logits.cols());
  Scalar total = 0;
  for (Index r = 0; r < logits.rows(); ++r) {
    const auto row = logits.value().row(r);
    const Scalar m = row.maxCoeff();
    const Scalar lse = m + std::log((row.array() - m).exp().sum());
    probs.row(r) = (row.array() - lse).exp();
    if (mask[static_cast<size_t>(r)]) total += lse - row(targets[static_cast<size_t>(r)]);
  }
  if (!std::isfinite(total)) throw NumericError("cross_entropy: loss is not finite");
  const Scalar inv = Scalar(1) / static_cast<Scalar>(active);
  return Tensor<Scalar>::from_op(
      Matrix<Scalar>::Constant(1, 1, total * inv), {logits},
      [probs = std::move(probs), ids = std::vector<int>(targets.begin(), targets.end()), mask, inv](
          detail::Node<Scalar>& self) {
        auto& pl = *self.parents[0];
        if (!pl.requires_grad) return;
        pl.ensure_grad();
        const Scalar g = self.grad(0, 0) * inv;
        for (Index r = 0; r < probs.rows(); ++r) {
          if (!mask[static_cast<size_t>(r)]) continue;
          pl.grad.row(r) += g * probs.row(r);
          pl.grad(r, ids[static_cast<size_t>(r)]) -= g;
        }
      });
}

}  // namespace gcoco
