#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <set>

#include "gcoco/data.hpp"
#include "gcoco/error.hpp"
#include "gcoco/tokenizer.hpp"

using namespace gcoco;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("gcoco_test_" + name);
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("vocab layout") {
  const Vocab v;
  CHECK(Vocab::kPad == 0);
  CHECK(Vocab::kEos == 1);
  CHECK(Vocab::kUnk == 2);
  CHECK(Vocab::instruction_gist_id(0) == 3);
  CHECK(Vocab::passage_gist_id(Vocab::kMaxGist - 1) == Vocab::kFirstChar - 1);
  CHECK(Vocab::size() == Vocab::kFirstChar + 95);
  std::set<int> ids;
  for (char c = ' '; c <= '~'; ++c) ids.insert(v.id_of(c));
  CHECK(ids.size() == 95);
  CHECK(*ids.begin() == Vocab::kFirstChar);
  CHECK(*ids.rbegin() == Vocab::size() - 1);
}

TEST_CASE("encode and decode examples") {
  const Vocab v;
  CHECK(v.encode("ab") == TokenIds{v.id_of('a'), v.id_of('b'), Vocab::kEos});
  CHECK(v.decode(v.encode("hello")) == "hello");
  CHECK(v.encode("\xE2\x88\x85") == TokenIds{Vocab::kUnk, Vocab::kEos});
  CHECK(v.encode_raw("ab").size() == 2);
  CHECK(v.decode({Vocab::kPad, v.id_of('x'), Vocab::instruction_gist_id(4), Vocab::kEos}) == "x");
  const std::string printable = " !\"#$%&'()*+,-./0123456789:;<=>?@ABCDEFGHIJKLMNOPQRSTUVWXYZ[\\]^_`abcdefghijklmnopqrstuvwxyz{|}~";
  CHECK(v.decode(v.encode(printable)) == printable);
  CHECK(v.encode("\t").front() == Vocab::kUnk);
}

TEST_CASE("generate_passage_qa is deterministic and plants each value once") {
  const auto a = generate_passage_qa(7, 120, 30);
  const auto b = generate_passage_qa(7, 120, 30);
  CHECK(a.examples == b.examples);
  CHECK(a.corpus.documents() == b.corpus.documents());
  CHECK(generate_passage_qa(8, 120, 30).examples != a.examples);
  CHECK(a.corpus.size() == 150);
  for (const auto& ex : a.examples) {
    CHECK(ex.task_type == TaskType::kRag);
    CHECK(ex.input.rfind("what is the value of ", 0) == 0);
    int containing = 0;
    for (const auto& d : a.corpus.documents()) containing += d.text.find(ex.target) != std::string::npos;
    CHECK(containing == 1);
  }
  CHECK(generate_passage_qa(3, 40, 0).corpus.size() == 40);
  CHECK_THROWS_AS(generate_passage_qa(3, 0, 0), ContractViolation);
}

TEST_CASE("generate_instruction_tasks rules") {
  CHECK(apply_instruction_task(InstructionTask::kReverse, "abc") == "cba");
  CHECK(apply_instruction_task(InstructionTask::kUppercase, "hi") == "HI");
  CHECK(apply_instruction_task(InstructionTask::kLastWord, "red fox") == "fox");
  CHECK(apply_instruction_task(InstructionTask::kSwapWords, "red fox") == "fox red");
  const auto a = generate_instruction_tasks(5, 200);
  CHECK(a == generate_instruction_tasks(5, 200));
  std::set<std::string> instructions;
  for (const auto& ex : a) {
    CHECK(ex.task_type == TaskType::kInstruction);
    CHECK(ex.instruction.size() >= 8 * 10);
    instructions.insert(ex.instruction);
    bool matches_a_rule = false;
    for (auto t : {InstructionTask::kReverse, InstructionTask::kUppercase, InstructionTask::kLastWord,
                   InstructionTask::kSwapWords})
      matches_a_rule = matches_a_rule || apply_instruction_task(t, ex.input) == ex.target;
    CHECK(matches_a_rule);
  }
  CHECK(instructions.size() == 12);
}

TEST_CASE("retrieve_topk examples") {
  const Corpus corpus({{"d0", "the cat sat on the mat"},
                       {"d1", "a dog ran in the park"},
                       {"d2", "birds sing in the morning"},
                       {"d3", "a dog ran in the park"}});
  CHECK(corpus.retrieve_topk("birds sing in the morning", 1) == std::vector<std::string>{"d2"});
  CHECK(corpus.retrieve_topk("cat", 9).size() == 4);
  const auto tied = corpus.retrieve_topk("dog park", 2);
  CHECK(tied == std::vector<std::string>{"d1", "d3"});
  CHECK(corpus.document_frequency("the") == 4);
  CHECK(corpus.document_frequency("dog") == 2);
  CHECK_THROWS_AS(corpus.retrieve_topk("cat", 0), ContractViolation);
  CHECK_THROWS_AS(Corpus().retrieve_topk("cat", 1), ContractViolation);
  CHECK_THROWS_AS(Corpus({{"x", "a"}, {"x", "b"}}), ContractViolation);
}

TEST_CASE("retriever recall with 50 distractors") {
  auto qa = generate_passage_qa(11, 300, 50);
  int hits = 0;
  for (const auto& ex : qa.examples) {
    for (const auto& id : qa.corpus.retrieve_topk(ex.input, 5))
      if (qa.corpus.find(id).text.find(ex.target) != std::string::npos) {
        ++hits;
        break;
      }
  }
  CHECK(hits >= 0.95 * 300);
}

TEST_CASE("attach_passages and truncate_passages") {
  auto qa = generate_passage_qa(2, 10, 5);
  attach_passages(qa.corpus, qa.examples, 5);
  for (const auto& ex : qa.examples) CHECK(ex.passages.size() == 5);
  const auto one = truncate_passages(qa.examples, 1);
  for (size_t i = 0; i < one.size(); ++i) {
    REQUIRE(one[i].passages.size() == 1);
    CHECK(one[i].passages[0] == qa.examples[i].passages[0]);
  }
}

TEST_CASE("jsonl roundtrip and errors") {
  auto qa = generate_passage_qa(4, 50, 10);
  attach_passages(qa.corpus, qa.examples, 3);
  auto examples = qa.examples;
  const auto inst = generate_instruction_tasks(4, 50);
  examples.insert(examples.end(), inst.begin(), inst.end());
  const auto path = temp_path("roundtrip.jsonl");
  save_jsonl(examples, path);
  CHECK(load_jsonl(path) == examples);

  const auto corpus_path = temp_path("corpus.jsonl");
  save_corpus_jsonl(qa.corpus.documents(), corpus_path);
  CHECK(load_corpus_jsonl(corpus_path) == qa.corpus.documents());

  const auto empty = temp_path("empty.jsonl");
  std::ofstream(empty).close();
  CHECK(load_jsonl(empty).empty());

  const auto bad = temp_path("bad.jsonl");
  {
    const std::string text = read_file(path);
    std::ofstream out(bad);
    size_t at = 0;
    for (int line = 1; line < 7; ++line) {
      const size_t end = text.find('\n', at);
      out << text.substr(at, end - at + 1);
      at = end + 1;
    }
    out << R"({"id":"x","instruction":"i","passages":[],"input":"q","task_type":"rag"})" << "\n";
  }
  CHECK_THROWS_WITH_AS(load_jsonl(bad), "line 7: missing field target", ParseError);

  {
    std::ofstream out(bad);
    out << R"({"id":"x","instruction":"i","passages":[],"input":"q","target":"t","task_type":"poem"})" << "\n";
  }
  CHECK_THROWS_AS(load_jsonl(bad), ParseError);
  {
    std::ofstream out(bad);
    out << "{not json\n";
  }
  CHECK_THROWS_AS(load_jsonl(bad), ParseError);
  CHECK_THROWS_AS(load_jsonl(temp_path("does_not_exist.jsonl")), Error);
}
