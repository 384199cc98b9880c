#pragma once

// Gist compression: learned gist embeddings are prepended to the prompt and
// input, run through a trainable copy of the teacher encoder, and the hidden
// states at the gist positions replace the raw prompt in the decoder memory.

#include <string>
#include <utility>
#include <vector>

#include "gcoco/data.hpp"
#include "gcoco/model.hpp"

namespace gcoco {

// disentangled: separate instruction and passage pools of N rows each.
// unified: one shared pool of 2N rows used for every prompt type.
enum class GistMode { kDisentangled, kUnified };

enum class GistLayout {
  kInstructionOnly,          // N rows
  kPassageThenInstruction,   // 2N rows, passage block first
  kUnified,                  // 2N rows from the shared pool
};

const char* gist_layout_name(GistLayout layout);

template <typename Scalar>
struct GistPools {
  GistMode mode = GistMode::kDisentangled;
  Tensor<Scalar> g_instruction;  // [N, d] (unified: the shared [2N, d] pool)
  Tensor<Scalar> g_passage;      // [N, d]; undefined when unified

  int n_gist() const {
    return mode == GistMode::kUnified ? static_cast<int>(g_instruction.rows() / 2)
                                      : static_cast<int>(g_instruction.rows());
  }

  // Trainable view for the optimizer and checkpoints.
  std::vector<std::pair<std::string, Tensor<Scalar>>> named() const {
    if (mode == GistMode::kUnified) return {{"gist.unified", g_instruction}};
    return {{"gist.instruction", g_instruction}, {"gist.passage", g_passage}};
  }

  GistPools deep_copy() const {
    GistPools out;
    out.mode = mode;
    out.g_instruction = g_instruction.clone(g_instruction.requires_grad());
    if (g_passage.defined()) out.g_passage = g_passage.clone(g_passage.requires_grad());
    return out;
  }
};

template <typename Scalar>
struct GistStates {
  Tensor<Scalar> h;  // [N or 2N, d]
  GistLayout layout = GistLayout::kInstructionOnly;
};

struct Segment {
  std::string name;
  Index length = 0;
};

template <typename Scalar>
struct CompressorInput {
  Tensor<Scalar> embedded;  // full sequence fed to the compression encoder
  std::vector<std::pair<Index, Index>> gist_ranges;  // half-open row ranges
  GistLayout layout = GistLayout::kInstructionOnly;
  std::vector<Segment> segments;
  int passages_used = 0;
};

// Prompt segments c in assembly order: passages (rank order, at most
// k_passages) then the instruction. Instruction tasks contribute only the
// instruction.
std::vector<TokenIds> prompt_segments(const Example& ex, const Vocab& vocab, int k_passages);

// Raw prompt token count |c|.
Index prompt_length(const Example& ex, const Vocab& vocab, int k_passages);

// c;x for the full-prompt teacher. Passages are dropped last-rank-first if the
// sequence would not fit in max_seq_len.
TokenIds full_prompt_tokens(const Example& ex, const Vocab& vocab, int k_passages, int max_seq_len);

// Compressor parameters are a deep copy of the teacher encoder; gist rows are
// copied from the embeddings of the reserved placeholder ids.
template <typename Scalar>
std::pair<ModelParams<Scalar>, GistPools<Scalar>> init_compressor(const ModelParams<Scalar>& teacher,
                                                                   const ModelConfig& cfg,
                                                                   GistMode mode = GistMode::kDisentangled) {
  cfg.validate();
  ModelParams<Scalar> compressor(Role::kCompressor);
  for (const auto& [name, t] : teacher.tensors())
    if (is_encoder_param(name)) compressor.add(name, t.clone(true));

  const auto& table = teacher.at("embed.token").value();
  const int n = cfg.n_gist;
  GistPools<Scalar> pools;
  pools.mode = mode;
  if (mode == GistMode::kUnified) {
    Matrix<Scalar> rows(2 * n, table.cols());
    for (int i = 0; i < n; ++i) {
      rows.row(i) = table.row(Vocab::instruction_gist_id(i));
      rows.row(n + i) = table.row(Vocab::passage_gist_id(i));
    }
    pools.g_instruction = Tensor<Scalar>(std::move(rows), true);
  } else {
    Matrix<Scalar> gi(n, table.cols());
    Matrix<Scalar> gp(n, table.cols());
    for (int i = 0; i < n; ++i) {
      gi.row(i) = table.row(Vocab::instruction_gist_id(i));
      gp.row(i) = table.row(Vocab::passage_gist_id(i));
    }
    pools.g_instruction = Tensor<Scalar>(std::move(gi), true);
    pools.g_passage = Tensor<Scalar>(std::move(gp), true);
  }
  return {std::move(compressor), std::move(pools)};
}

// Embedded compressor input.
//   instruction: [g^i] ; instruction ; x
//   rag:         [g^p] ; [g^i] ; passages... ; instruction ; x
//   unified:     [g]   ; prompt ; x
template <typename Scalar>
CompressorInput<Scalar> assemble_compressor_input(const Example& ex, const GistPools<Scalar>& pools,
                                                  const ModelParams<Scalar>& compressor, const Vocab& vocab,
                                                  const ModelConfig& cfg, int k_passages) {
  CompressorInput<Scalar> out;
  std::vector<Tensor<Scalar>> parts;
  Index gist_rows = 0;
  if (pools.mode == GistMode::kUnified) {
    out.layout = GistLayout::kUnified;
    parts.push_back(pools.g_instruction);
    out.gist_ranges.emplace_back(0, pools.g_instruction.rows());
    out.segments.push_back({"gist", pools.g_instruction.rows()});
    gist_rows = pools.g_instruction.rows();
  } else if (ex.task_type == TaskType::kRag) {
    out.layout = GistLayout::kPassageThenInstruction;
    const Index n = pools.g_passage.rows();
    parts.push_back(pools.g_passage);
    parts.push_back(pools.g_instruction);
    out.gist_ranges.emplace_back(0, n);
    out.gist_ranges.emplace_back(n, n + pools.g_instruction.rows());
    out.segments.push_back({"passage_gist", n});
    out.segments.push_back({"instruction_gist", pools.g_instruction.rows()});
    gist_rows = n + pools.g_instruction.rows();
  } else {
    out.layout = GistLayout::kInstructionOnly;
    parts.push_back(pools.g_instruction);
    out.gist_ranges.emplace_back(0, pools.g_instruction.rows());
    out.segments.push_back({"instruction_gist", pools.g_instruction.rows()});
    gist_rows = pools.g_instruction.rows();
  }

  auto segments = prompt_segments(ex, vocab, k_passages);
  int passages = ex.task_type == TaskType::kRag ? static_cast<int>(segments.size()) - 1 : 0;
  const TokenIds x = vocab.encode(ex.input);
  auto total = [&] {
    Index n = gist_rows + static_cast<Index>(x.size());
    for (const auto& s : segments) n += static_cast<Index>(s.size());
    return n;
  };
  while (total() > cfg.max_seq_len && passages > 0) {
    segments.erase(segments.begin() + (passages - 1));
    --passages;
  }
  if (total() > cfg.max_seq_len) {
    std::string detail = "compressor input needs " + std::to_string(total()) + " positions but max_seq_len is " +
                         std::to_string(cfg.max_seq_len) + " (gist " + std::to_string(gist_rows) +
                         ", instruction " + std::to_string(segments.back().size()) + ", input " +
                         std::to_string(x.size()) + ")";
    throw ContractViolation(detail);
  }

  TokenIds text;
  for (int i = 0; i < static_cast<int>(segments.size()); ++i) {
    const bool is_passage = i < passages;
    out.segments.push_back({is_passage ? "passage" + std::to_string(i) : "instruction",
                            static_cast<Index>(segments[static_cast<size_t>(i)].size())});
    text.insert(text.end(), segments[static_cast<size_t>(i)].begin(), segments[static_cast<size_t>(i)].end());
  }
  out.segments.push_back({"input", static_cast<Index>(x.size())});
  text.insert(text.end(), x.begin(), x.end());
  out.passages_used = passages;
  parts.push_back(embedding(compressor.at("embed.token"), text));
  out.embedded = concat_rows(parts);
  return out;
}

// Runs the compression encoder and keeps only the gist rows.
template <typename Scalar>
GistStates<Scalar> compress(const ModelParams<Scalar>& compressor, const ModelConfig& cfg,
                            const CompressorInput<Scalar>& input) {
  const auto hidden = encode_embedded(compressor, cfg, input.embedded);
  std::vector<Tensor<Scalar>> blocks;
  for (const auto& [begin, end] : input.gist_ranges) blocks.push_back(slice_rows(hidden, begin, end - begin));
  return {blocks.size() == 1 ? blocks.front() : concat_rows(blocks), input.layout};
}

// Decoder memory h^c ; Encoder_teacher(x). With include_input = false the
// memory is h^c alone.
template <typename Scalar>
Tensor<Scalar> build_decoder_memory(const GistStates<Scalar>& states, const ModelParams<Scalar>& teacher,
                                    const ModelConfig& cfg, std::span<const int> input_ids,
                                    bool include_input = true) {
  if (!include_input) return states.h;
  detail::check_length(states.h.rows() + static_cast<Index>(input_ids.size()), cfg.max_seq_len, "decoder memory");
  Tensor<Scalar> encoded_input;
  {
    NoGradGuard no_grad;
    encoded_input = encode(teacher, cfg, input_ids);
  }
  return concat_rows(std::vector<Tensor<Scalar>>{states.h, encoded_input});
}

}  // namespace gcoco
