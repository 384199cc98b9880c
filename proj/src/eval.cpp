#include "gcoco/eval.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace gcoco {

namespace {

std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

VerbalizedPrompt verbalize(const ModelParams<float>& teacher, const ModelConfig& cfg, const GistStates<float>& states,
                           int max_len) {
  const Vocab vocab;
  VerbalizedPrompt out;
  out.tokens = generate_greedy(teacher, cfg, states.h, max_len);
  out.text = vocab.decode(out.tokens);
  out.source_layout = states.layout;
  return out;
}

const char* condition_name(Condition c) {
  switch (c) {
    case Condition::kNoPrompt:
      return "no_prompt";
    case Condition::kGist:
      return "gist";
    case Condition::kFullPrompt:
      return "full_prompt";
  }
  return "unknown";
}

Condition parse_condition(const std::string& s) {
  if (s == "no_prompt") return Condition::kNoPrompt;
  if (s == "gist") return Condition::kGist;
  if (s == "full_prompt") return Condition::kFullPrompt;
  throw ContractViolation("unknown condition '" + s + "' (expected no_prompt, gist or full_prompt)");
}

const ConditionReport& EvalReport::at(Condition c) const {
  for (const auto& r : per_condition)
    if (r.condition == c) return r;
  throw ContractViolation(std::string("report has no condition ") + condition_name(c));
}

Tensor<float> condition_memory(Condition condition, const Example& ex, const ModelParams<float>& teacher,
                               const ModelConfig& cfg, const CompressorModel* compressor, int k_passages) {
  const Vocab vocab;
  NoGradGuard no_grad;
  switch (condition) {
    case Condition::kNoPrompt:
      return encode(teacher, cfg, vocab.encode(ex.input));
    case Condition::kFullPrompt:
      return encode(teacher, cfg, full_prompt_tokens(ex, vocab, k_passages, cfg.max_seq_len));
    case Condition::kGist: {
      if (!compressor) throw ContractViolation("gist condition requires a compressor checkpoint");
      const auto input = assemble_compressor_input(ex, compressor->pools, compressor->compressor, vocab, cfg, k_passages);
      const auto states = compress(compressor->compressor, cfg, input);
      return build_decoder_memory(states, teacher, cfg, vocab.encode(ex.input));
    }
  }
  throw ContractViolation("unknown condition");
}

EvalReport run_eval(const ModelParams<float>& teacher, const ModelConfig& cfg, const CompressorModel* compressor,
                    const std::vector<Example>& examples, const std::vector<Condition>& conditions,
                    const EvalOptions& options) {
  if (examples.empty()) throw ContractViolation("run_eval: no examples");
  if (conditions.empty()) throw ContractViolation("run_eval: no conditions");
  const Vocab vocab;
  NoGradGuard no_grad;
  EvalReport report;
  for (Condition condition : conditions) {
    if (condition == Condition::kGist && !compressor)
      throw ContractViolation("run_eval: gist condition requires a compressor checkpoint");
    ConditionReport rep;
    rep.condition = condition;
    double acc_total = 0;
    double rouge_total = 0;
    double score_total = 0;
    double ratio_total = 0;
    int ratio_n = 0;
    for (const auto& ex : examples) {
      ExampleResult res;
      res.id = ex.id;
      res.task_type = ex.task_type;
      Tensor<float> memory;
      std::optional<GistStates<float>> states;
      if (condition == Condition::kGist) {
        const auto input =
            assemble_compressor_input(ex, compressor->pools, compressor->compressor, vocab, cfg, options.k_passages);
        states = compress(compressor->compressor, cfg, input);
        memory = build_decoder_memory(*states, teacher, cfg, vocab.encode(ex.input));
      } else {
        memory = condition_memory(condition, ex, teacher, cfg, compressor, options.k_passages);
      }
      res.generated = vocab.decode(generate_greedy(teacher, cfg, memory, options.max_generate));
      if (ex.task_type == TaskType::kRag) {
        res.score = substring_accuracy(res.generated, ex.target);
        acc_total += res.score;
        ++rep.n_rag;
      } else {
        res.score = rouge_l(res.generated, ex.target);
        rouge_total += res.score;
        ++rep.n_instruction;
      }
      score_total += res.score;
      res.prompt_tokens = static_cast<long>(prompt_length(ex, vocab, options.k_passages));
      if (states && options.verbalize) {
        const auto v = verbalize(teacher, cfg, *states, options.verbalize_max_len);
        res.verbalized = v.text;
        res.verbalized_tokens = static_cast<long>(v.tokens.size());
        ratio_total += compression_ratio(res.prompt_tokens, res.verbalized_tokens);
        ++ratio_n;
      }
      rep.examples.push_back(std::move(res));
    }
    rep.n = static_cast<int>(examples.size());
    rep.accuracy = rep.n_rag ? acc_total / rep.n_rag : 0.0;
    rep.rouge_l = rep.n_instruction ? rouge_total / rep.n_instruction : 0.0;
    rep.score = score_total / rep.n;
    if (ratio_n) rep.mean_compression_ratio = ratio_total / ratio_n;
    report.per_condition.push_back(std::move(rep));
  }
  return report;
}

std::string report_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["run_id"] = report.run_id;
  j["config"] = report.config_json.empty() ? nlohmann::ordered_json::object()
                                           : nlohmann::ordered_json::parse(report.config_json);
  j["per_condition"] = nlohmann::ordered_json::array();
  for (const auto& r : report.per_condition) {
    nlohmann::ordered_json c;
    c["name"] = condition_name(r.condition);
    c["accuracy"] = r.accuracy;
    c["rouge_l"] = r.rouge_l;
    c["score"] = r.score;
    c["mean_compression_ratio"] = r.mean_compression_ratio ? nlohmann::ordered_json(*r.mean_compression_ratio)
                                                           : nlohmann::ordered_json(nullptr);
    c["n"] = r.n;
    c["n_rag"] = r.n_rag;
    c["n_instruction"] = r.n_instruction;
    j["per_condition"].push_back(c);
  }
  return j.dump(2) + "\n";
}

std::string report_csv(const EvalReport& report) {
  std::ostringstream out;
  out << "condition,task,metric,value\n";
  for (const auto& r : report.per_condition) {
    const char* name = condition_name(r.condition);
    if (r.n_rag) out << name << ",rag,accuracy," << fixed(r.accuracy) << "\n";
    if (r.n_instruction) out << name << ",instruction,rouge_l," << fixed(r.rouge_l) << "\n";
    out << name << ",all,score," << fixed(r.score) << "\n";
    if (r.mean_compression_ratio) out << name << ",all,compression_ratio," << fixed(*r.mean_compression_ratio) << "\n";
  }
  return out.str();
}

void write_report(const EvalReport& report, const std::filesystem::path& json_path,
                  const std::filesystem::path& csv_path) {
  std::ofstream json(json_path, std::ios::binary);
  std::ofstream csv(csv_path, std::ios::binary);
  if (!json || !csv) throw Error("cannot write report files " + json_path.string() + ", " + csv_path.string());
  json << report_json(report);
  csv << report_csv(report);
}

}  // namespace gcoco
