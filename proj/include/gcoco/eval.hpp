#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gcoco/gist.hpp"
#include "gcoco/metrics.hpp"
#include "gcoco/training.hpp"

namespace gcoco {

struct VerbalizedPrompt {
  TokenIds tokens;
  std::string text;
  GistLayout source_layout = GistLayout::kInstructionOnly;
};

// Greedy decode of the gist states alone (no encoded input in memory).
VerbalizedPrompt verbalize(const ModelParams<float>& teacher, const ModelConfig& cfg,
                           const GistStates<float>& states, int max_len);

enum class Condition { kNoPrompt, kGist, kFullPrompt };

const char* condition_name(Condition c);
Condition parse_condition(const std::string& s);

struct ExampleResult {
  std::string id;
  TaskType task_type = TaskType::kRag;
  std::string generated;
  double score = 0;  // substring accuracy (rag) or ROUGE-L (instruction)
  std::optional<std::string> verbalized;
  long prompt_tokens = 0;
  long verbalized_tokens = 0;
};

struct ConditionReport {
  Condition condition = Condition::kNoPrompt;
  double accuracy = 0;        // mean substring accuracy over rag examples
  double rouge_l = 0;         // mean ROUGE-L over instruction examples
  double score = 0;           // mean per-example score over all examples
  std::optional<double> mean_compression_ratio;
  int n = 0;
  int n_rag = 0;
  int n_instruction = 0;
  std::vector<ExampleResult> examples;
};

struct EvalOptions {
  int k_passages = 5;
  int max_generate = 16;
  bool verbalize = false;
  int verbalize_max_len = 16;
};

struct EvalReport {
  std::string run_id;
  std::string config_json;  // stamped configuration, serialized
  std::vector<ConditionReport> per_condition;

  const ConditionReport& at(Condition c) const;
};

// Decoder memory for one example under a condition.
Tensor<float> condition_memory(Condition condition, const Example& ex, const ModelParams<float>& teacher,
                               const ModelConfig& cfg, const CompressorModel* compressor, int k_passages);

EvalReport run_eval(const ModelParams<float>& teacher, const ModelConfig& cfg, const CompressorModel* compressor,
                    const std::vector<Example>& examples, const std::vector<Condition>& conditions,
                    const EvalOptions& options = {});

// JSON: {run_id, config, per_condition:[{name, accuracy, rouge_l, mean_compression_ratio, n}]}
std::string report_json(const EvalReport& report);
// CSV: condition,task,metric,value
std::string report_csv(const EvalReport& report);
void write_report(const EvalReport& report, const std::filesystem::path& json_path,
                  const std::filesystem::path& csv_path);

}  // namespace gcoco
