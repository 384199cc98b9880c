#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace gcoco {

// Lowercases and collapses whitespace runs to single spaces (trimmed).
std::string normalize_answer(std::string_view text);

// 1 iff the normalized gold answer occurs inside the normalized generation.
int substring_accuracy(std::string_view generated, std::string_view gold);

std::vector<std::string> whitespace_tokens(std::string_view text);

size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b);

// ROUGE-L F1 over whitespace tokens; 0 when either side is empty.
double rouge_l(std::string_view candidate, std::string_view reference);

// 1 - verbalized / prompt, clamped to [0, 1].
double compression_ratio(long prompt_tokens, long verbalized_tokens);

}  // namespace gcoco
