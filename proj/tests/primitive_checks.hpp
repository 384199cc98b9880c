#pragma once

// Gradient checks for every differentiable primitive, shared by the unit
// tests and the acceptance binary. Each check reduces the primitive's output
// to a scalar through a fixed random weighting so every output coordinate
// contributes to the gradient.

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "gcoco/grad_check.hpp"
#include "gcoco/losses.hpp"
#include "gcoco/ops.hpp"

namespace gcoco::testing {

using PrimitiveCheck = std::function<double(unsigned seed)>;

inline Matrix<double> random_matrix(Index r, Index c, std::mt19937& rng, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  Matrix<double> m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

inline Tensor<double> random_leaf(Index r, Index c, std::mt19937& rng, double scale = 1.0) {
  return Tensor<double>(random_matrix(r, c, rng, scale), true);
}

inline Index random_dim(std::mt19937& rng, Index lo = 1, Index hi = 5) {
  return std::uniform_int_distribution<Index>(lo, hi)(rng);
}

// sum(out .* w) for a fixed random w.
inline Tensor<double> weighted_sum(const Tensor<double>& out, const Matrix<double>& w) {
  return sum(mul(out, Tensor<double>(w)));
}

inline double check(const std::function<Tensor<double>()>& f, std::vector<Tensor<double>> params, unsigned seed) {
  GradCheckOptions opts;
  opts.seed = seed;
  return grad_check<double>(f, std::move(params), opts).max_relative_error;
}

inline std::vector<std::pair<std::string, PrimitiveCheck>> primitive_checks() {
  std::vector<std::pair<std::string, PrimitiveCheck>> out;

  out.emplace_back("matmul", [](unsigned seed) {
    std::mt19937 rng(seed);
    const Index n = random_dim(rng), k = random_dim(rng), m = random_dim(rng);
    auto a = random_leaf(n, k, rng), b = random_leaf(k, m, rng);
    const auto w = random_matrix(n, m, rng);
    return check([=] { return weighted_sum(matmul(a, b), w); }, {a, b}, seed);
  });
  out.emplace_back("matmul_nt", [](unsigned seed) {
    std::mt19937 rng(seed);
    const Index n = random_dim(rng), k = random_dim(rng), m = random_dim(rng);
    auto a = random_leaf(n, k, rng), b = random_leaf(m, k, rng);
    const auto w = random_matrix(n, m, rng);
    return check([=] { return weighted_sum(matmul_nt(a, b), w); }, {a, b}, seed);
  });
  out.emplace_back("add", [](unsigned seed) {
    std::mt19937 rng(seed);
    const Index n = random_dim(rng), m = random_dim(rng);
    auto a = random_leaf(n, m, rng), b = random_leaf(n, m, rng);
    const auto w = random_matrix(n, m, rng);
    return check([=] { return weighted_sum(add(a, b), w); }, {a, b}, seed);
  });
  out.emplace_back("sub", [](unsigned seed) {
    std::mt19937 rng(seed);
    const Index n = random_dim(rng), m = random_dim(rng);
    auto a = random_leaf(n, m, rng), b = random_leaf(n, m, rng);
    const auto w = random_matrix(n, m, rng);
    return check([=] { return weighted_sum(sub(a, b), w); }, {a, b}, seed);
  });
  out.emplace_back("mul", [](unsigned seed) {
    std::mt19937 rng(seed);
    const Index n = random_dim(rng), m = random_dim(rng);
    auto a = random_leaf(n, m, rng), b = random_leaf(n, m, rng);
    const auto w = random_matrix(n, m, rng);
    return check([=] { return weighted_sum(mul(a, b), w); }, {a, b}, seed);
  });
  out.emplace_back("scale", [](unsigned seed) {
    std::mt19937 rng(seed);
    const Index n = random_dim(rng), m = random_dim(rng);
    auto a = random_leaf(n, m, rng);
    const double s = std::normal_distribution<double>(0.0, 2.0)(rng);
    const auto w = random_matrix(n, m, rng);
    return check([=] { return weighted_sum(scale(a, s), w); }, {a}, seed);
  });
  out.emplace_back("add_row", [](unsigned seed) {
    std::mt19937 rng(seed);
    const Index n = random_dim(rng), m = random_dim(rng);
    auto a = random_leaf(n, m, rng), r = random_leaf(1, m, rng);
    const auto w = random_matrix(n, m, rng);
    return check([=] { return weighted_sum(add_row(a, r), w); }, {a, r}, seed);
  });
  out.emplace_back("add_constant", [](unsigned seed) {
    std::mt19937 rng(seed);
    const Index n = random_dim(rng), m = random_dim(rng);
    auto a = random_leaf(n, m, rng);
    const auto c = random_matrix(n, m, rng);
    const auto w = random_matrix(n, m, rng);
    return check([=] { return weighted_sum(add_constant(a, c), w); }, {a}, seed);
  });
  out.emplace_back("softmax_rows", [](unsigned seed) {
    std::mt19937 rng(seed);
    const Index n = random_dim(rng), m = random_dim(rng, 2, 6);
    auto a = random_leaf(n, m, rng, 2.0);
    const auto w = random_matrix(n, m, rng);
    return check([=] { return weighted_sum(softmax_rows(a), w); }, {a}, seed);
  });
  out.emplace_back("log_softmax_rows", [](unsigned seed) {
    std::mt19937 rng(seed);
    const Index n = random_dim(rng), m = random_dim(rng, 2, 6);
    auto a = random_leaf(n, m, rng, 2.0);
    const auto w = random_matrix(n, m, rng);
    return check([=] { return weighted_sum(log_softmax_rows(a), w); }, {a}, seed);
  });
  out.emplace_back("layer_norm", [](unsigned seed) {
    std::mt19937 rng(seed);
    const Index n = random_dim(rng), m = random_dim(rng, 2, 8);
    auto x = random_leaf(n, m, rng), g = random_leaf(1, m, rng), b = random_leaf(1, m, rng);
    const auto w = random_matrix(n, m, rng);
    return check([=] { return weighted_sum(layer_norm(x, g, b), w); }, {x, g, b}, seed);
  });
  out.emplace_back("gelu", [](unsigned seed) {
    std::mt19937 rng(seed);
    const Index n = random_dim(rng), m = random_dim(rng);
    auto a = random_leaf(n, m, rng, 2.0);
    const auto w = random_matrix(n, m, rng);
    return check([=] { return weighted_sum(gelu(a), w); }, {a}, seed);
  });
  out.emplace_back("embedding", [](unsigned seed) {
    std::mt19937 rng(seed);
    const Index vocab = random_dim(rng, 2, 6), d = random_dim(rng);
    auto table = random_leaf(vocab, d, rng);
    std::vector<int> ids(static_cast<size_t>(random_dim(rng, 1, 8)));
    for (auto& id : ids) id = std::uniform_int_distribution<int>(0, static_cast<int>(vocab) - 1)(rng);
    const auto w = random_matrix(static_cast<Index>(ids.size()), d, rng);
    return check([=] { return weighted_sum(embedding(table, ids), w); }, {table}, seed);
  });
  out.emplace_back("concat_rows", [](unsigned seed) {
    std::mt19937 rng(seed);
    const Index n1 = random_dim(rng), n2 = random_dim(rng), m = random_dim(rng);
    auto a = random_leaf(n1, m, rng), b = random_leaf(n2, m, rng);
    const auto w = random_matrix(n1 + n2 + n1, m, rng);
    return check([=] { return weighted_sum(concat_rows(std::vector<Tensor<double>>{a, b, a}), w); }, {a, b}, seed);
  });
  out.emplace_back("slice_rows", [](unsigned seed) {
    std::mt19937 rng(seed);
    const Index n = random_dim(rng, 2, 6), m = random_dim(rng);
    const Index begin = std::uniform_int_distribution<Index>(0, n - 1)(rng);
    const Index count = std::uniform_int_distribution<Index>(1, n - begin)(rng);
    auto a = random_leaf(n, m, rng);
    const auto w = random_matrix(count, m, rng);
    return check([=] { return weighted_sum(slice_rows(a, begin, count), w); }, {a}, seed);
  });
  out.emplace_back("concat_cols", [](unsigned seed) {
    std::mt19937 rng(seed);
    const Index n = random_dim(rng), m1 = random_dim(rng), m2 = random_dim(rng);
    auto a = random_leaf(n, m1, rng), b = random_leaf(n, m2, rng);
    const auto w = random_matrix(n, m1 + m2, rng);
    return check([=] { return weighted_sum(concat_cols(std::vector<Tensor<double>>{a, b}), w); }, {a, b}, seed);
  });
  out.emplace_back("slice_cols", [](unsigned seed) {
    std::mt19937 rng(seed);
    const Index n = random_dim(rng), m = random_dim(rng, 2, 6);
    const Index begin = std::uniform_int_distribution<Index>(0, m - 1)(rng);
    const Index count = std::uniform_int_distribution<Index>(1, m - begin)(rng);
    auto a = random_leaf(n, m, rng);
    const auto w = random_matrix(n, count, rng);
    return check([=] { return weighted_sum(slice_cols(a, begin, count), w); }, {a}, seed);
  });
  out.emplace_back("sum", [](unsigned seed) {
    std::mt19937 rng(seed);
    auto a = random_leaf(random_dim(rng), random_dim(rng), rng);
    return check([=] { return mul(sum(a), sum(a)); }, {a}, seed);
  });
  out.emplace_back("mean", [](unsigned seed) {
    std::mt19937 rng(seed);
    auto a = random_leaf(random_dim(rng), random_dim(rng), rng);
    return check([=] { return mul(mean(a), mean(a)); }, {a}, seed);
  });
  out.emplace_back("mean_of", [](unsigned seed) {
    std::mt19937 rng(seed);
    auto a = random_leaf(1, 1, rng), b = random_leaf(1, 1, rng), c = random_leaf(1, 1, rng);
    return check([=] { return mean_of(std::vector<Tensor<double>>{mul(a, b), c, mul(c, c)}); }, {a, b, c}, seed);
  });
  out.emplace_back("kl_divergence", [](unsigned seed) {
    std::mt19937 rng(seed);
    const Index n = random_dim(rng, 2, 5), m = random_dim(rng, 2, 6);
    auto pl = random_leaf(n, m, rng), ql = random_leaf(n, m, rng);
    std::vector<bool> mask(static_cast<size_t>(n), true);
    mask.back() = false;
    return check(
        [=] {
          return kl_divergence(Distribution<double>{log_softmax_rows(pl), mask},
                               Distribution<double>{log_softmax_rows(ql), mask});
        },
        {pl, ql}, seed);
  });
  out.emplace_back("cross_entropy", [](unsigned seed) {
    std::mt19937 rng(seed);
    const Index n = random_dim(rng, 2, 5), m = random_dim(rng, 2, 6);
    auto logits = random_leaf(n, m, rng);
    std::vector<int> targets(static_cast<size_t>(n));
    for (auto& t : targets) t = std::uniform_int_distribution<int>(0, static_cast<int>(m) - 1)(rng);
    std::vector<bool> mask(static_cast<size_t>(n), true);
    mask.front() = false;
    return check([=] { return cross_entropy(logits, targets, mask); }, {logits}, seed);
  });
  return out;
}

}  // namespace gcoco::testing
