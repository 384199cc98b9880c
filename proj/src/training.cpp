#include "gcoco/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace gcoco {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void shuffle_indices(std::vector<size_t>& idx, std::mt19937_64& rng) {
  for (size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[static_cast<size_t>(rng() % i)]);
}

void require_finite(double loss, const char* phase, int epoch, size_t step) {
  if (!std::isfinite(loss))
    throw NumericError(std::string(phase) + ": non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                       std::to_string(step));
}

Tensor<float> example_ce(const ModelParams<float>& teacher, const ModelConfig& cfg, const Example& ex, int k) {
  const Vocab vocab;
  const TokenIds targets = vocab.encode(ex.target);
  const TokenIds full = full_prompt_tokens(ex, vocab, k, cfg.max_seq_len);
  const auto memory = encode(teacher, cfg, full);
  const auto logits = decode_teacher_forced_logits(teacher, cfg, memory, targets);
  return cross_entropy(logits, targets, target_mask(targets));
}

}  // namespace

double teacher_loss(const ModelParams<float>& teacher, const ModelConfig& cfg, const std::vector<Example>& examples,
                    int k_passages) {
  if (examples.empty()) return std::numeric_limits<double>::quiet_NaN();
  NoGradGuard no_grad;
  double total = 0;
  for (const auto& ex : examples) total += example_ce(teacher, cfg, ex, k_passages).item();
  return total / static_cast<double>(examples.size());
}

ModelParams<float> pretrain_teacher(const ModelConfig& cfg, const TrainConfig& config,
                                    const std::vector<Example>& train, const std::vector<Example>& dev,
                                    TrainLog* log, const EpochCallback& on_epoch) {
  config.validate();
  auto teacher = init_params<float>(cfg, config.seed);
  TrainLog local;
  TrainLog& out = log ? *log : local;
  const int dev_k = config.k_passages_pretrain_max;
  out.initial_dev_loss = teacher_loss(teacher, cfg, dev, dev_k);
  if (config.epochs == 0 || train.empty()) return teacher;

  AdamState<float> state;
  state.learning_rate = static_cast<float>(config.learning_rate);
  std::mt19937_64 rng(config.seed ^ 0x5eedULL);
  std::vector<size_t> order(train.size());
  std::iota(order.begin(), order.end(), size_t{0});

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = Clock::now();
    shuffle_indices(order, rng);
    double epoch_total = 0;
    size_t steps = 0;
    for (size_t b = 0; b < order.size(); b += static_cast<size_t>(config.batch_size)) {
      const size_t end = std::min(order.size(), b + static_cast<size_t>(config.batch_size));
      teacher.zero_grad();
      std::vector<Tensor<float>> losses;
      for (size_t i = b; i < end; ++i) {
        const int k = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(config.k_passages_pretrain_max));
        losses.push_back(example_ce(teacher, cfg, train[order[i]], k));
      }
      const auto loss = mean_of(losses);
      const double value = loss.item();
      require_finite(value, "pretrain_teacher", epoch, steps);
      backward(loss);
      if (config.clip_norm > 0) clip_grad_norm(teacher, config.clip_norm);
      adam_step(teacher, state);
      out.step_losses.push_back(value);
      epoch_total += value;
      ++steps;
    }
    EpochRecord rec{epoch, epoch_total / static_cast<double>(std::max<size_t>(steps, 1)),
                    teacher_loss(teacher, cfg, dev, dev_k), seconds_since(start)};
    out.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return teacher;
}

ModelParams<float> trainable_view(const CompressorModel& model) {
  ModelParams<float> view(Role::kCompressor);
  for (const auto& [name, t] : model.compressor.tensors()) view.add(name, t);
  for (const auto& [name, t] : model.pools.named()) view.add(name, t);
  return view;
}

CompressorModel train_compressor(const ModelConfig& cfg, const TrainConfig& config, const ModelParams<float>& teacher,
                                 CompressorModel model, const std::vector<Example>& examples, TrainLog* log,
                                 const EpochCallback& on_epoch) {
  config.validate();
  if (!teacher.frozen()) throw ContractViolation("train_compressor: teacher must be frozen");
  TrainLog local;
  TrainLog& out = log ? *log : local;
  out.teacher_checksum_before = checksum(teacher);
  out.max_teacher_grad_mass = 0;
  // Tensors are shared handles; train on private copies so the caller's
  // starting point stays intact.
  model.compressor = model.compressor.deep_copy();
  model.pools = model.pools.deep_copy();

  const Vocab vocab;
  const int k = config.k_passages_train;

  // Teacher-side quantities are constant across training: Q and the
  // encoded input are computed once per example.
  struct Cached {
    TokenIds targets;
    Distribution<float> q;
    Tensor<float> encoded_input;
  };
  std::vector<Cached> cache;
  cache.reserve(examples.size());
  {
    NoGradGuard no_grad;
    for (const auto& ex : examples) {
      Cached c;
      c.targets = vocab.encode(ex.target);
      c.q = teacher_distribution(teacher, cfg, full_prompt_tokens(ex, vocab, k, cfg.max_seq_len), c.targets);
      c.encoded_input = encode(teacher, cfg, vocab.encode(ex.input));
      cache.push_back(std::move(c));
    }
  }

  auto trainable = trainable_view(model);
  AdamState<float> state;
  state.learning_rate = static_cast<float>(config.learning_rate);
  std::mt19937_64 rng(config.seed ^ 0xc0c0ULL);
  std::vector<size_t> order(examples.size());
  std::iota(order.begin(), order.end(), size_t{0});

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = Clock::now();
    shuffle_indices(order, rng);
    double epoch_total = 0;
    size_t steps = 0;
    for (size_t b = 0; b < order.size(); b += static_cast<size_t>(config.batch_size)) {
      const size_t end = std::min(order.size(), b + static_cast<size_t>(config.batch_size));
      trainable.zero_grad();
      std::vector<Tensor<float>> losses;
      for (size_t i = b; i < end; ++i) {
        const Example& ex = examples[order[i]];
        const Cached& c = cache[order[i]];
        const auto input = assemble_compressor_input(ex, model.pools, model.compressor, vocab, cfg, k);
        const auto states = compress(model.compressor, cfg, input);
        const auto memory = config.train_memory_includes_x
                                ? concat_rows(std::vector<Tensor<float>>{states.h, c.encoded_input})
                                : states.h;
        const auto p = decode_logprobs(teacher, cfg, memory, c.targets);
        losses.push_back(distillation_loss(p, c.q, config.kl_direction));
      }
      const auto loss = mean_of(losses);
      const double value = loss.item();
      require_finite(value, "train_compressor", epoch, steps);
      backward(loss);
      out.max_teacher_grad_mass = std::max(out.max_teacher_grad_mass, gradient_mass(teacher));
      if (config.clip_norm > 0) clip_grad_norm(trainable, config.clip_norm);
      adam_step(trainable, state);
      out.step_losses.push_back(value);
      epoch_total += value;
      ++steps;
    }
    EpochRecord rec{epoch, epoch_total / static_cast<double>(std::max<size_t>(steps, 1)),
                    std::numeric_limits<double>::quiet_NaN(), seconds_since(start)};
    out.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  out.teacher_checksum_after = checksum(teacher);
  if (out.teacher_checksum_after != out.teacher_checksum_before)
    throw ContractViolation("train_compressor: teacher parameters changed during training");
  return model;
}

}  // namespace gcoco
