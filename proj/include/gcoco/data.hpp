#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace gcoco {

enum class TaskType { kInstruction, kRag };

const char* task_type_name(TaskType t);
TaskType parse_task_type(const std::string& s);

struct Example {
  std::string id;
  std::string instruction;
  std::vector<std::string> passages;  // retrieval rank order
  std::string input;
  std::string target;
  TaskType task_type = TaskType::kInstruction;

  bool operator==(const Example&) const = default;
};

struct Document {
  std::string doc_id;
  std::string text;
  bool operator==(const Document&) const = default;
};

// Document collection with cached TF-IDF statistics.
class Corpus {
 public:
  Corpus() = default;
  explicit Corpus(std::vector<Document> documents);

  const std::vector<Document>& documents() const { return documents_; }
  size_t size() const { return documents_.size(); }
  const Document& find(const std::string& doc_id) const;
  // Number of documents containing `term` at least once.
  int document_frequency(const std::string& term) const;

  // Top-k documents by TF-IDF cosine similarity to `query`; ties go to the
  // lower doc_id. k larger than the corpus returns every document.
  std::vector<std::string> retrieve_topk(const std::string& query, int k) const;

 private:
  using SparseVector = std::vector<std::pair<int, double>>;  // (term id, weight), sorted by term id

  std::vector<Document> documents_;
  std::map<std::string, size_t> by_id_;
  std::map<std::string, int> term_ids_;
  std::vector<int> df_;
  std::vector<SparseVector> doc_vectors_;
};

// Lowercased alphanumeric runs.
std::vector<std::string> tokenize_terms(const std::string& text);

struct PassageQaSet {
  Corpus corpus;
  std::vector<Example> examples;
};

inline constexpr const char* kRagInstruction = "Answer the question with the value given in the passages.";

// Each example plants "key K has value V." in exactly one gold document;
// n_distractors extra facts about other keys are added to the corpus.
// Returned examples carry no passages; see attach_passages.
PassageQaSet generate_passage_qa(std::uint64_t seed, int n_examples, int n_distractors);

// Templated text transformations with verbose paraphrased instructions.
enum class InstructionTask { kReverse, kUppercase, kLastWord, kSwapWords };
std::string apply_instruction_task(InstructionTask task, const std::string& input);
std::vector<Example> generate_instruction_tasks(std::uint64_t seed, int n_examples);

// Fills each rag example's passages with the top-k retrieved documents for
// its input question.
void attach_passages(const Corpus& corpus, std::vector<Example>& examples, int k);

// Keeps at most k passages per example (top of the rank order).
std::vector<Example> truncate_passages(std::vector<Example> examples, int k);

std::vector<Example> load_jsonl(const std::filesystem::path& path);
void save_jsonl(const std::vector<Example>& examples, const std::filesystem::path& path);

std::vector<Document> load_corpus_jsonl(const std::filesystem::path& path);
void save_corpus_jsonl(const std::vector<Document>& documents, const std::filesystem::path& path);

}  // namespace gcoco
