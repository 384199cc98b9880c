#include "gcoco/metrics.hpp"

#include <algorithm>
#include <cctype>

#include "gcoco/error.hpp"

namespace gcoco {

std::string normalize_answer(std::string_view text) {
  std::string out;
  bool pending_space = false;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out += ' ';
    pending_space = false;
    out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

int substring_accuracy(std::string_view generated, std::string_view gold) {
  const std::string g = normalize_answer(gold);
  return normalize_answer(generated).find(g) != std::string::npos ? 1 : 0;
}

std::vector<std::string> whitespace_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!current.empty()) out.push_back(std::move(current));
      current.clear();
    } else {
      current += c;
    }
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<size_t> prev(b.size() + 1, 0);
  std::vector<size_t> cur(b.size() + 1, 0);
  for (size_t i = 1; i <= a.size(); ++i) {
    for (size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l(std::string_view candidate, std::string_view reference) {
  const auto cand = whitespace_tokens(candidate);
  const auto ref = whitespace_tokens(reference);
  if (cand.empty() || ref.empty()) return 0.0;
  const auto lcs = static_cast<double>(lcs_length(cand, ref));
  if (lcs == 0) return 0.0;
  const double p = lcs / static_cast<double>(cand.size());
  const double r = lcs / static_cast<double>(ref.size());
  return 2 * p * r / (p + r);
}

double compression_ratio(long prompt_tokens, long verbalized_tokens) {
  if (prompt_tokens <= 0) throw ContractViolation("compression_ratio: prompt must have at least one token");
  const double ratio = 1.0 - static_cast<double>(verbalized_tokens) / static_cast<double>(prompt_tokens);
  return std::clamp(ratio, 0.0, 1.0);
}

}  // namespace gcoco
