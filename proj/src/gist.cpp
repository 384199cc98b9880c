#include "gcoco/gist.hpp"

namespace gcoco {

const char* gist_layout_name(GistLayout layout) {
  switch (layout) {
    case GistLayout::kInstructionOnly:
      return "instruction_only";
    case GistLayout::kPassageThenInstruction:
      return "passage_then_instruction";
    case GistLayout::kUnified:
      return "unified";
  }
  return "unknown";
}

std::vector<TokenIds> prompt_segments(const Example& ex, const Vocab& vocab, int k_passages) {
  std::vector<TokenIds> out;
  if (ex.task_type == TaskType::kRag) {
    const size_t n = std::min(ex.passages.size(), static_cast<size_t>(std::max(k_passages, 0)));
    for (size_t i = 0; i < n; ++i) out.push_back(vocab.encode(ex.passages[i]));
  }
  out.push_back(vocab.encode(ex.instruction));
  return out;
}

Index prompt_length(const Example& ex, const Vocab& vocab, int k_passages) {
  Index n = 0;
  for (const auto& s : prompt_segments(ex, vocab, k_passages)) n += static_cast<Index>(s.size());
  return n;
}

TokenIds full_prompt_tokens(const Example& ex, const Vocab& vocab, int k_passages, int max_seq_len) {
  auto segments = prompt_segments(ex, vocab, k_passages);
  const TokenIds x = vocab.encode(ex.input);
  int passages = ex.task_type == TaskType::kRag ? static_cast<int>(segments.size()) - 1 : 0;
  auto total = [&] {
    size_t n = x.size();
    for (const auto& s : segments) n += s.size();
    return n;
  };
  while (total() > static_cast<size_t>(max_seq_len) && passages > 0) {
    segments.erase(segments.begin() + (passages - 1));
    --passages;
  }
  if (total() > static_cast<size_t>(max_seq_len))
    throw ContractViolation("full prompt needs " + std::to_string(total()) + " positions but max_seq_len is " +
                            std::to_string(max_seq_len));
  TokenIds out;
  for (const auto& s : segments) out.insert(out.end(), s.begin(), s.end());
  out.insert(out.end(), x.begin(), x.end());
  return out;
}

}  // namespace gcoco
