#pragma once

// Encoder-decoder transformer: pre-norm blocks, GELU feed-forward, learned
// absolute positions, output projection tied to the token embedding.

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "gcoco/losses.hpp"
#include "gcoco/params.hpp"
#include "gcoco/tokenizer.hpp"

namespace gcoco {

struct ModelConfig {
  int d_model = 64;
  int n_heads = 4;
  int n_enc_layers = 2;
  int n_dec_layers = 2;
  int d_ff = 256;
  int vocab_size = Vocab::size();
  int max_seq_len = 512;
  int n_gist = 10;  // per pool

  void validate() const {
    if (d_model <= 0 || n_heads <= 0 || d_model % n_heads != 0)
      throw ContractViolation("d_model must be a positive multiple of n_heads");
    if (n_enc_layers < 1 || n_dec_layers < 1 || d_ff < 1 || vocab_size < 4 || max_seq_len < 1)
      throw ContractViolation("model dimensions must be positive");
    if (n_gist < 1 || n_gist > Vocab::kMaxGist)
      throw ContractViolation("n_gist must be in [1, " + std::to_string(Vocab::kMaxGist) + "]");
  }
  bool operator==(const ModelConfig&) const = default;
};

namespace detail {

template <typename Scalar>
Tensor<Scalar> random_leaf(Index rows, Index cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix<Scalar> m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(dist(rng));
  return Tensor<Scalar>(std::move(m), true);
}

template <typename Scalar>
void add_norm(ModelParams<Scalar>& p, const std::string& name, int d) {
  p.add(name + ".g", Tensor<Scalar>(Matrix<Scalar>::Ones(1, d), true));
  p.add(name + ".b", Tensor<Scalar>::zeros(1, d, true));
}

template <typename Scalar>
void add_attention(ModelParams<Scalar>& p, const std::string& name, int d, std::mt19937_64& rng) {
  const double s = 1.0 / std::sqrt(static_cast<double>(d));
  for (const char* w : {".wq", ".wk", ".wv", ".wo"}) p.add(name + w, random_leaf<Scalar>(d, d, s, rng));
}

template <typename Scalar>
void add_ffn(ModelParams<Scalar>& p, const std::string& name, int d, int d_ff, std::mt19937_64& rng) {
  p.add(name + ".w1", random_leaf<Scalar>(d, d_ff, 1.0 / std::sqrt(static_cast<double>(d)), rng));
  p.add(name + ".b1", Tensor<Scalar>::zeros(1, d_ff, true));
  p.add(name + ".w2", random_leaf<Scalar>(d_ff, d, 1.0 / std::sqrt(static_cast<double>(d_ff)), rng));
  p.add(name + ".b2", Tensor<Scalar>::zeros(1, d, true));
}

template <typename Scalar>
Tensor<Scalar> norm(const ModelParams<Scalar>& p, const std::string& name, const Tensor<Scalar>& x) {
  return layer_norm(x, p.at(name + ".g"), p.at(name + ".b"));
}

template <typename Scalar>
Tensor<Scalar> feed_forward(const ModelParams<Scalar>& p, const std::string& name, const Tensor<Scalar>& x) {
  auto h = gelu(add_row(matmul(x, p.at(name + ".w1")), p.at(name + ".b1")));
  return add_row(matmul(h, p.at(name + ".w2")), p.at(name + ".b2"));
}

// Multi-head attention of `queries` over `memory`; `mask` (optional) is added
// to the raw scores of every head.
template <typename Scalar>
Tensor<Scalar> attention(const ModelParams<Scalar>& p, const std::string& name, int n_heads,
                         const Tensor<Scalar>& queries, const Tensor<Scalar>& memory, const Matrix<Scalar>* mask) {
  const auto q = matmul(queries, p.at(name + ".wq"));
  const auto k = matmul(memory, p.at(name + ".wk"));
  const auto v = matmul(memory, p.at(name + ".wv"));
  const Index head_dim = q.cols() / n_heads;
  const Scalar inv_sqrt = Scalar(1) / std::sqrt(static_cast<Scalar>(head_dim));
  std::vector<Tensor<Scalar>> heads;
  heads.reserve(static_cast<size_t>(n_heads));
  for (int h = 0; h < n_heads; ++h) {
    auto scores = scale(matmul_nt(slice_cols(q, h * head_dim, head_dim), slice_cols(k, h * head_dim, head_dim)), inv_sqrt);
    if (mask) scores = add_constant(scores, *mask);
    heads.push_back(matmul(softmax_rows(scores), slice_cols(v, h * head_dim, head_dim)));
  }
  return matmul(n_heads == 1 ? heads.front() : concat_cols(heads), p.at(name + ".wo"));
}

template <typename Scalar>
Matrix<Scalar> causal_mask(Index n) {
  Matrix<Scalar> m = Matrix<Scalar>::Zero(n, n);
  for (Index r = 0; r < n; ++r)
    for (Index c = r + 1; c < n; ++c) m(r, c) = -std::numeric_limits<Scalar>::infinity();
  return m;
}

inline std::string layer_name(const char* stack, int i) { return std::string(stack) + ".L" + std::to_string(i); }

inline void check_length(Index length, int max_seq_len, const char* what) {
  if (length > max_seq_len)
    throw ContractViolation(std::string(what) + ": sequence needs " + std::to_string(length) +
                            " positions but max_seq_len is " + std::to_string(max_seq_len));
}

}  // namespace detail

// Fresh randomly initialized teacher (encoder + decoder).
template <typename Scalar>
ModelParams<Scalar> init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  ModelParams<Scalar> p(Role::kTeacher);
  const int d = cfg.d_model;
  p.add("embed.token", detail::random_leaf<Scalar>(cfg.vocab_size, d, 0.1, rng));
  p.add("embed.out_bias", Tensor<Scalar>::zeros(1, cfg.vocab_size, true));
  p.add("enc.pos", detail::random_leaf<Scalar>(cfg.max_seq_len, d, 0.1, rng));
  p.add("dec.pos", detail::random_leaf<Scalar>(cfg.max_seq_len, d, 0.1, rng));
  for (int i = 0; i < cfg.n_enc_layers; ++i) {
    const auto l = detail::layer_name("enc", i);
    detail::add_norm(p, l + ".attn_norm", d);
    detail::add_attention(p, l + ".attn", d, rng);
    detail::add_norm(p, l + ".ffn_norm", d);
    detail::add_ffn(p, l + ".ffn", d, cfg.d_ff, rng);
  }
  detail::add_norm(p, "enc.final_norm", d);
  for (int i = 0; i < cfg.n_dec_layers; ++i) {
    const auto l = detail::layer_name("dec", i);
    detail::add_norm(p, l + ".self_norm", d);
    detail::add_attention(p, l + ".self", d, rng);
    detail::add_norm(p, l + ".cross_norm", d);
    detail::add_attention(p, l + ".cross", d, rng);
    detail::add_norm(p, l + ".ffn_norm", d);
    detail::add_ffn(p, l + ".ffn", d, cfg.d_ff, rng);
  }
  detail::add_norm(p, "dec.final_norm", d);
  return p;
}

// Names that make up an encoder (the compressor's parameter set).
inline bool is_encoder_param(const std::string& name) {
  return name == "embed.token" || name.rfind("enc.", 0) == 0;
}

// Runs the encoder stack over an already embedded sequence (positions are
// added here).
template <typename Scalar>
Tensor<Scalar> encode_embedded(const ModelParams<Scalar>& p, const ModelConfig& cfg, const Tensor<Scalar>& embedded) {
  detail::check_length(embedded.rows(), cfg.max_seq_len, "encode");
  auto x = add(embedded, slice_rows(p.at("enc.pos"), 0, embedded.rows()));
  for (int i = 0; i < cfg.n_enc_layers; ++i) {
    const auto l = detail::layer_name("enc", i);
    const auto h = detail::norm(p, l + ".attn_norm", x);
    x = add(x, detail::attention(p, l + ".attn", cfg.n_heads, h, h, static_cast<const Matrix<Scalar>*>(nullptr)));
    x = add(x, detail::feed_forward(p, l + ".ffn", detail::norm(p, l + ".ffn_norm", x)));
  }
  return detail::norm(p, "enc.final_norm", x);
}

// Final-layer hidden states, one row per token.
template <typename Scalar>
Tensor<Scalar> encode(const ModelParams<Scalar>& p, const ModelConfig& cfg, std::span<const int> ids) {
  if (ids.empty()) throw ContractViolation("encode: empty token sequence");
  detail::check_length(static_cast<Index>(ids.size()), cfg.max_seq_len, "encode");
  return encode_embedded(p, cfg, embedding(p.at("embed.token"), ids));
}

// Decoder logits for explicit decoder input ids (already shifted).
template <typename Scalar>
Tensor<Scalar> decoder_logits(const ModelParams<Scalar>& p, const ModelConfig& cfg, const Tensor<Scalar>& memory,
                              std::span<const int> decoder_inputs) {
  if (!memory.defined() || memory.rows() == 0) throw ContractViolation("decode: empty memory");
  if (memory.cols() != cfg.d_model) throw ContractViolation("decode: memory width differs from d_model");
  const auto n = static_cast<Index>(decoder_inputs.size());
  detail::check_length(n, cfg.max_seq_len, "decode");
  const Matrix<Scalar> mask = detail::causal_mask<Scalar>(n);
  auto x = add(embedding(p.at("embed.token"), decoder_inputs), slice_rows(p.at("dec.pos"), 0, n));
  for (int i = 0; i < cfg.n_dec_layers; ++i) {
    const auto l = detail::layer_name("dec", i);
    const auto h = detail::norm(p, l + ".self_norm", x);
    x = add(x, detail::attention(p, l + ".self", cfg.n_heads, h, h, &mask));
    x = add(x, detail::attention(p, l + ".cross", cfg.n_heads, detail::norm(p, l + ".cross_norm", x), memory,
                                 static_cast<const Matrix<Scalar>*>(nullptr)));
    x = add(x, detail::feed_forward(p, l + ".ffn", detail::norm(p, l + ".ffn_norm", x)));
  }
  return add_row(matmul_nt(detail::norm(p, "dec.final_norm", x), p.at("embed.token")), p.at("embed.out_bias"));
}

// Teacher-forced inputs: PAD as begin-of-sequence, then targets[0..n-2].
inline TokenIds shift_right(std::span<const int> targets) {
  TokenIds in;
  in.reserve(targets.size());
  in.push_back(Vocab::kPad);
  for (size_t i = 0; i + 1 < targets.size(); ++i) in.push_back(targets[i]);
  return in;
}

inline std::vector<bool> target_mask(std::span<const int> targets) {
  std::vector<bool> mask;
  mask.reserve(targets.size());
  for (int t : targets) mask.push_back(t != Vocab::kPad);
  return mask;
}

template <typename Scalar>
Tensor<Scalar> decode_teacher_forced_logits(const ModelParams<Scalar>& p, const ModelConfig& cfg,
                                            const Tensor<Scalar>& memory, std::span<const int> targets) {
  if (targets.empty()) throw ContractViolation("decode: empty target sequence");
  const TokenIds inputs = shift_right(targets);
  return decoder_logits(p, cfg, memory, inputs);
}

template <typename Scalar>
Distribution<Scalar> decode_logprobs(const ModelParams<Scalar>& p, const ModelConfig& cfg,
                                     const Tensor<Scalar>& memory, std::span<const int> targets) {
  return {log_softmax_rows(decode_teacher_forced_logits(p, cfg, memory, targets)), target_mask(targets)};
}

// Greedy argmax decoding; ties go to the lowest id. The EOS token is not
// part of the result.
template <typename Scalar>
TokenIds generate_greedy(const ModelParams<Scalar>& p, const ModelConfig& cfg, const Tensor<Scalar>& memory,
                         int max_len) {
  if (max_len < 1) throw ContractViolation("generate_greedy: max_len must be at least 1");
  NoGradGuard no_grad;
  TokenIds inputs{Vocab::kPad};
  TokenIds out;
  while (static_cast<int>(out.size()) < max_len) {
    const auto logits = decoder_logits(p, cfg, memory, inputs);
    const auto last = logits.value().row(logits.rows() - 1);
    Index best = 0;
    for (Index c = 1; c < last.cols(); ++c)
      if (last(c) > last(best)) best = c;
    if (best == Vocab::kEos) break;
    out.push_back(static_cast<int>(best));
    inputs.push_back(static_cast<int>(best));
  }
  return out;
}

// Q(y* | c, x): the frozen teacher conditioned on the raw prompt. `prompt_and_input`
// is the token concatenation c;x. Result is off the tape.
template <typename Scalar>
Distribution<Scalar> teacher_distribution(const ModelParams<Scalar>& teacher, const ModelConfig& cfg,
                                          std::span<const int> prompt_and_input, std::span<const int> targets) {
  if (!teacher.frozen()) throw ContractViolation("teacher_distribution: teacher must be frozen");
  NoGradGuard no_grad;
  const auto memory = encode(teacher, cfg, prompt_and_input);
  return decode_logprobs(teacher, cfg, memory, targets).detach();
}

}  // namespace gcoco
