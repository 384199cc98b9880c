#include "gcoco/data.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"

#include "gcoco/error.hpp"

namespace gcoco {

namespace {

using Rng = std::mt19937_64;

// Uniform integer in [0, n); avoids distribution objects whose output is
// implementation-defined.
int uniform_index(Rng& rng, int n) { return static_cast<int>(rng() % static_cast<std::uint64_t>(n)); }

std::string random_letters(Rng& rng, int length) {
  std::string s;
  for (int i = 0; i < length; ++i) s += static_cast<char>('a' + uniform_index(rng, 26));
  return s;
}

std::string fact_text(const std::string& key, const std::string& value) {
  return "key " + key + " has value " + value + ".";
}

constexpr std::array<const char*, 40> kWords = {
    "cat",  "dog",  "sun",  "moon", "tree", "rock", "fish", "bird", "lamp", "door",
    "milk", "rain", "snow", "wind", "fire", "leaf", "ship", "road", "gold", "salt",
    "bell", "coin", "desk", "frog", "hat",  "ink",  "jam",  "kite", "lake", "nest",
    "owl",  "pen",  "quiz", "ring", "sock", "tent", "vase", "wolf", "yarn", "zinc"};

struct TaskTemplate {
  InstructionTask task;
  std::array<const char*, 3> paraphrases;
};

const std::array<TaskTemplate, 4>& task_templates() {
  static const std::array<TaskTemplate, 4> templates = {{
      {InstructionTask::kReverse,
       {"Read the text given as input and write it out again backwards, character by character, from the last "
        "to the first.",
        "Your task is to take the input string and produce its mirror image, so that the final character of it "
        "comes first.",
        "Please reverse the order of every character in the input, including spaces, and output the reversed "
        "text only."}},
      {InstructionTask::kUppercase,
       {"Rewrite the input text so that every lowercase letter becomes a capital letter, leaving spaces exactly "
        "where they are.",
        "Convert all of the letters in the given input into uppercase form and return the converted text "
        "without other changes.",
        "Take the input and shout it: output the very same words, but with each letter turned into its upper "
        "case version."}},
      {InstructionTask::kLastWord,
       {"Look at the words in the input and respond with only the final word, ignoring every word that comes "
        "before it.",
        "Find the last word of the input text and repeat that single word back as your complete answer, "
        "nothing else.",
        "Out of all the words written in the input, copy just the one at the very end and output it on its "
        "own."}},
      {InstructionTask::kSwapWords,
       {"The input contains exactly two words; write them back in the opposite order, with the second word "
        "placed first.",
        "Exchange the positions of the two words in the input so that the first word ends up last and the last "
        "word first.",
        "Swap the two words you are given: output the second word, then a single space, then the first word "
        "of the input."}},
  }};
  return templates;
}

const std::string& require_string(const nlohmann::json& record, const char* field, size_t line) {
  if (!record.contains(field))
    throw ParseError("line " + std::to_string(line) + ": missing field " + field);
  const auto& v = record.at(field);
  if (!v.is_string())
    throw ParseError("line " + std::to_string(line) + ": field " + field + " must be a string");
  return v.get_ref<const std::string&>();
}

}  // namespace

const char* task_type_name(TaskType t) { return t == TaskType::kRag ? "rag" : "instruction"; }

TaskType parse_task_type(const std::string& s) {
  if (s == "rag") return TaskType::kRag;
  if (s == "instruction") return TaskType::kInstruction;
  throw ParseError("unknown task_type '" + s + "'");
}

std::vector<std::string> tokenize_terms(const std::string& text) {
  std::vector<std::string> terms;
  std::string current;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      current += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    } else if (!current.empty()) {
      terms.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) terms.push_back(std::move(current));
  return terms;
}

Corpus::Corpus(std::vector<Document> documents) : documents_(std::move(documents)) {
  for (size_t i = 0; i < documents_.size(); ++i)
    if (!by_id_.emplace(documents_[i].doc_id, i).second)
      throw ContractViolation("duplicate doc_id " + documents_[i].doc_id);

  std::vector<std::vector<std::pair<int, int>>> counts;
  for (const auto& d : documents_) {
    std::map<int, int> tf;
    for (const auto& term : tokenize_terms(d.text)) {
      auto [it, inserted] = term_ids_.emplace(term, static_cast<int>(term_ids_.size()));
      if (inserted) df_.push_back(0);
      ++tf[it->second];
    }
    for (const auto& [term, n] : tf) ++df_[static_cast<size_t>(term)];
    counts.emplace_back(tf.begin(), tf.end());
  }
  for (const auto& tf : counts) {
    SparseVector v;
    double norm = 0;
    for (const auto& [term, n] : tf) {
      const double idf = std::log((1.0 + static_cast<double>(documents_.size())) / (1.0 + df_[static_cast<size_t>(term)])) + 1.0;
      v.emplace_back(term, n * idf);
      norm += (n * idf) * (n * idf);
    }
    norm = std::sqrt(norm);
    if (norm > 0)
      for (auto& e : v) e.second /= norm;
    doc_vectors_.push_back(std::move(v));
  }
}

const Document& Corpus::find(const std::string& doc_id) const {
  auto it = by_id_.find(doc_id);
  if (it == by_id_.end()) throw ContractViolation("no document with id " + doc_id);
  return documents_[it->second];
}

int Corpus::document_frequency(const std::string& term) const {
  auto it = term_ids_.find(term);
  return it == term_ids_.end() ? 0 : df_[static_cast<size_t>(it->second)];
}

std::vector<std::string> Corpus::retrieve_topk(const std::string& query, int k) const {
  if (documents_.empty()) throw ContractViolation("retrieve_topk: empty corpus");
  if (k < 1) throw ContractViolation("retrieve_topk: k must be at least 1");

  std::map<int, int> tf;
  for (const auto& term : tokenize_terms(query)) {
    auto it = term_ids_.find(term);
    if (it != term_ids_.end()) ++tf[it->second];
  }
  SparseVector q;
  double norm = 0;
  for (const auto& [term, n] : tf) {
    const double idf = std::log((1.0 + static_cast<double>(documents_.size())) / (1.0 + df_[static_cast<size_t>(term)])) + 1.0;
    q.emplace_back(term, n * idf);
    norm += (n * idf) * (n * idf);
  }
  norm = std::sqrt(norm);

  std::vector<std::pair<double, size_t>> scored;
  scored.reserve(documents_.size());
  for (size_t d = 0; d < documents_.size(); ++d) {
    double dot = 0;
    const auto& dv = doc_vectors_[d];
    size_t i = 0;
    size_t j = 0;
    while (i < q.size() && j < dv.size()) {
      if (q[i].first == dv[j].first) dot += q[i++].second * dv[j++].second;
      else if (q[i].first < dv[j].first) ++i;
      else ++j;
    }
    scored.emplace_back(norm > 0 ? dot / norm : 0.0, d);
  }
  std::sort(scored.begin(), scored.end(), [this](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return documents_[a.second].doc_id < documents_[b.second].doc_id;
  });
  const size_t n = std::min(static_cast<size_t>(k), scored.size());
  std::vector<std::string> out;
  out.reserve(n);
  for (size_t i = 0; i < n; ++i) out.push_back(documents_[scored[i].second].doc_id);
  return out;
}

PassageQaSet generate_passage_qa(std::uint64_t seed, int n_examples, int n_distractors) {
  if (n_examples < 1) throw ContractViolation("generate_passage_qa: n_examples must be at least 1");
  if (n_distractors < 0) throw ContractViolation("generate_passage_qa: n_distractors must be non-negative");
  Rng rng(seed);
  const int total = n_examples + n_distractors;

  std::vector<std::string> texts;
  std::vector<std::string> keys;
  std::vector<std::string> values;
  std::set<std::string> used_keys;
  while (static_cast<int>(texts.size()) < total) {
    const std::string key = random_letters(rng, 4);
    const std::string value = random_letters(rng, 3);
    if (used_keys.count(key)) continue;
    const std::string text = fact_text(key, value);
    // The value must identify exactly one document: it may not occur in any
    // other document, in this document's own skeleton, and no earlier value
    // may occur in this document.
    if (fact_text(key, "").find(value) != std::string::npos) continue;
    bool clash = false;
    for (size_t i = 0; i < texts.size() && !clash; ++i)
      clash = texts[i].find(value) != std::string::npos || text.find(values[i]) != std::string::npos;
    if (clash) continue;
    used_keys.insert(key);
    texts.push_back(text);
    keys.push_back(key);
    values.push_back(value);
  }

  // Gold and distractor documents are interleaved by a seeded shuffle so doc
  // ids carry no label information.
  std::vector<int> order(static_cast<size_t>(total));
  for (int i = 0; i < total; ++i) order[static_cast<size_t>(i)] = i;
  for (int i = total - 1; i > 0; --i) std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(uniform_index(rng, i + 1))]);

  std::vector<Document> docs(static_cast<size_t>(total));
  const int width = std::max<int>(5, static_cast<int>(std::to_string(total).size()));
  for (int slot = 0; slot < total; ++slot) {
    std::string id = std::to_string(slot);
    id = "d" + std::string(static_cast<size_t>(width) - id.size(), '0') + id;
    docs[static_cast<size_t>(slot)] = {id, texts[static_cast<size_t>(order[static_cast<size_t>(slot)])]};
  }

  PassageQaSet out;
  out.corpus = Corpus(std::move(docs));
  for (int i = 0; i < n_examples; ++i) {
    Example ex;
    ex.id = "qa-" + std::to_string(seed) + "-" + std::to_string(i);
    ex.instruction = kRagInstruction;
    ex.input = "what is the value of " + keys[static_cast<size_t>(i)] + "?";
    ex.target = values[static_cast<size_t>(i)];
    ex.task_type = TaskType::kRag;
    out.examples.push_back(std::move(ex));
  }
  return out;
}

std::string apply_instruction_task(InstructionTask task, const std::string& input) {
  switch (task) {
    case InstructionTask::kReverse:
      return std::string(input.rbegin(), input.rend());
    case InstructionTask::kUppercase: {
      std::string s = input;
      for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
      return s;
    }
    case InstructionTask::kLastWord: {
      std::istringstream in(input);
      std::string word;
      std::string last;
      while (in >> word) last = word;
      return last;
    }
    case InstructionTask::kSwapWords: {
      std::istringstream in(input);
      std::string a;
      std::string b;
      in >> a >> b;
      return b.empty() ? a : b + " " + a;
    }
  }
  return {};
}

std::vector<Example> generate_instruction_tasks(std::uint64_t seed, int n_examples) {
  if (n_examples < 1) throw ContractViolation("generate_instruction_tasks: n_examples must be at least 1");
  Rng rng(seed);
  const auto& templates = task_templates();
  std::vector<Example> out;
  out.reserve(static_cast<size_t>(n_examples));
  for (int i = 0; i < n_examples; ++i) {
    const auto& tmpl = templates[static_cast<size_t>(uniform_index(rng, static_cast<int>(templates.size())))];
    const char* instruction = tmpl.paraphrases[static_cast<size_t>(uniform_index(rng, 3))];
    const std::string first = kWords[static_cast<size_t>(uniform_index(rng, kWords.size()))];
    std::string second = kWords[static_cast<size_t>(uniform_index(rng, kWords.size()))];
    while (second == first) second = kWords[static_cast<size_t>(uniform_index(rng, kWords.size()))];
    Example ex;
    ex.id = "inst-" + std::to_string(seed) + "-" + std::to_string(i);
    ex.instruction = instruction;
    ex.input = first + " " + second;
    ex.target = apply_instruction_task(tmpl.task, ex.input);
    ex.task_type = TaskType::kInstruction;
    out.push_back(std::move(ex));
  }
  return out;
}

void attach_passages(const Corpus& corpus, std::vector<Example>& examples, int k) {
  for (auto& ex : examples) {
    if (ex.task_type != TaskType::kRag) continue;
    ex.passages.clear();
    for (const auto& id : corpus.retrieve_topk(ex.input, k)) ex.passages.push_back(corpus.find(id).text);
  }
}

std::vector<Example> truncate_passages(std::vector<Example> examples, int k) {
  if (k < 1) throw ContractViolation("passage depth must be at least 1");
  for (auto& ex : examples)
    if (ex.passages.size() > static_cast<size_t>(k)) ex.passages.resize(static_cast<size_t>(k));
  return examples;
}

std::vector<Example> load_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  std::vector<Example> out;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError("line " + std::to_string(line_no) + ": invalid JSON (" + e.what() + ")");
    }
    if (!record.is_object()) throw ParseError("line " + std::to_string(line_no) + ": record must be an object");
    Example ex;
    ex.id = require_string(record, "id", line_no);
    ex.instruction = require_string(record, "instruction", line_no);
    if (!record.contains("passages")) throw ParseError("line " + std::to_string(line_no) + ": missing field passages");
    const auto& passages = record.at("passages");
    if (!passages.is_array())
      throw ParseError("line " + std::to_string(line_no) + ": field passages must be an array of strings");
    for (const auto& p : passages) {
      if (!p.is_string())
        throw ParseError("line " + std::to_string(line_no) + ": field passages must be an array of strings");
      ex.passages.push_back(p.get<std::string>());
    }
    ex.input = require_string(record, "input", line_no);
    ex.target = require_string(record, "target", line_no);
    try {
      ex.task_type = parse_task_type(require_string(record, "task_type", line_no));
    } catch (const ParseError& e) {
      if (std::string(e.what()).rfind("line ", 0) == 0) throw;
      throw ParseError("line " + std::to_string(line_no) + ": field task_type: " + e.what());
    }
    out.push_back(std::move(ex));
  }
  return out;
}

void save_jsonl(const std::vector<Example>& examples, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write " + path.string());
  for (const auto& ex : examples) {
    nlohmann::ordered_json record;
    record["id"] = ex.id;
    record["instruction"] = ex.instruction;
    record["passages"] = ex.passages;
    record["input"] = ex.input;
    record["target"] = ex.target;
    record["task_type"] = task_type_name(ex.task_type);
    out << record.dump() << '\n';
  }
}

std::vector<Document> load_corpus_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  std::vector<Document> out;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError("line " + std::to_string(line_no) + ": invalid JSON (" + e.what() + ")");
    }
    out.push_back({require_string(record, "doc_id", line_no), require_string(record, "text", line_no)});
  }
  return out;
}

void save_corpus_jsonl(const std::vector<Document>& documents, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write " + path.string());
  for (const auto& d : documents) {
    nlohmann::ordered_json record;
    record["doc_id"] = d.doc_id;
    record["text"] = d.text;
    out << record.dump() << '\n';
  }
}

}  // namespace gcoco
