#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "gcoco/adam.hpp"
#include "gcoco/data.hpp"
#include "gcoco/gist.hpp"
#include "gcoco/model.hpp"

namespace gcoco {

struct TrainConfig {
  double learning_rate = 1e-4;
  int epochs = 8;
  int batch_size = 1;
  std::uint64_t seed = 0;
  int k_passages_train = 1;
  // Teacher pretraining draws a passage depth uniformly from
  // [1, k_passages_pretrain_max] per example.
  int k_passages_pretrain_max = 5;
  KlDirection kl_direction = KlDirection::kAsPaper;
  bool train_memory_includes_x = true;
  double clip_norm = 0.0;  // <= 0 disables clipping

  void validate() const {
    if (!(learning_rate > 0)) throw ContractViolation("learning_rate must be positive");
    if (epochs < 0) throw ContractViolation("epochs must be non-negative");
    if (batch_size < 1) throw ContractViolation("batch_size must be at least 1");
    if (k_passages_train < 1 || k_passages_pretrain_max < 1)
      throw ContractViolation("passage depths must be at least 1");
  }
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0;
  double dev_loss = 0;  // pretraining only; NaN when no dev set
  double seconds = 0;
};

struct TrainLog {
  std::vector<double> step_losses;
  std::vector<EpochRecord> epochs;
  double initial_dev_loss = 0;
  // Compressor training only.
  double max_teacher_grad_mass = 0;
  std::uint64_t teacher_checksum_before = 0;
  std::uint64_t teacher_checksum_after = 0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Mean cross-entropy of the full-prompt teacher over examples.
double teacher_loss(const ModelParams<float>& teacher, const ModelConfig& cfg, const std::vector<Example>& examples,
                    int k_passages);

// Cross-entropy training of the full-prompt teacher from a fresh
// initialization seeded with config.seed. The result is not frozen.
ModelParams<float> pretrain_teacher(const ModelConfig& cfg, const TrainConfig& config,
                                    const std::vector<Example>& train, const std::vector<Example>& dev,
                                    TrainLog* log = nullptr, const EpochCallback& on_epoch = {});

struct CompressorModel {
  ModelParams<float> compressor;
  GistPools<float> pools;
};

// KL distillation of the compressor against the frozen teacher. P uses the
// teacher's decoder over the gist-conditioned memory; only compressor and
// gist pools are updated.
CompressorModel train_compressor(const ModelConfig& cfg, const TrainConfig& config, const ModelParams<float>& teacher,
                                 CompressorModel model, const std::vector<Example>& examples,
                                 TrainLog* log = nullptr, const EpochCallback& on_epoch = {});

// Compressor and gist pools as one named, trainable collection.
ModelParams<float> trainable_view(const CompressorModel& model);

// Single-example distillation loss (KL between gist-conditioned P and the
// raw-prompt teacher Q). Exposed for gradient checks.
template <typename Scalar>
Tensor<Scalar> distillation_example_loss(const ModelParams<Scalar>& teacher, const ModelParams<Scalar>& compressor,
                                         const GistPools<Scalar>& pools, const ModelConfig& cfg, const Example& ex,
                                         int k_passages, KlDirection direction, bool memory_includes_x) {
  const Vocab vocab;
  const TokenIds targets = vocab.encode(ex.target);
  const TokenIds full = full_prompt_tokens(ex, vocab, k_passages, cfg.max_seq_len);
  const auto q = teacher_distribution(teacher, cfg, full, targets);
  const auto input = assemble_compressor_input(ex, pools, compressor, vocab, cfg, k_passages);
  const auto states = compress(compressor, cfg, input);
  const TokenIds x = vocab.encode(ex.input);
  const auto memory = build_decoder_memory(states, teacher, cfg, x, memory_includes_x);
  const auto p = decode_logprobs(teacher, cfg, memory, targets);
  return distillation_loss(p, q, direction);
}

}  // namespace gcoco
