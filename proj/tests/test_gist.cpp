#include "doctest.h"

#include "gcoco/grad_check.hpp"
#include "gcoco/gist.hpp"
#include "gcoco/training.hpp"

using namespace gcoco;

namespace {

ModelConfig small_config(int n_gist = 10) {
  ModelConfig cfg;
  cfg.d_model = 16;
  cfg.n_heads = 2;
  cfg.n_enc_layers = 1;
  cfg.n_dec_layers = 1;
  cfg.d_ff = 32;
  cfg.max_seq_len = 256;
  cfg.n_gist = n_gist;
  return cfg;
}

Example instruction_example(const std::string& instruction, const std::string& input) {
  Example ex;
  ex.id = "i";
  ex.instruction = instruction;
  ex.input = input;
  ex.target = "out";
  ex.task_type = TaskType::kInstruction;
  return ex;
}

Example rag_example() {
  Example ex;
  ex.id = "r";
  ex.instruction = kRagInstruction;
  ex.passages = {"key abcd has value xyz.", "key efgh has value uvw.", "key ijkl has value rst."};
  ex.input = "what is the value of abcd?";
  ex.target = "xyz";
  ex.task_type = TaskType::kRag;
  return ex;
}

}  // namespace

TEST_CASE("init_compressor copies the teacher encoder and placeholder embeddings") {
  const auto cfg = small_config();
  auto teacher = init_params<float>(cfg, 1);
  teacher.set_frozen(true);
  const auto before = checksum(teacher);
  auto [compressor, pools] = init_compressor(teacher, cfg);
  const Vocab v;
  const auto ids = v.encode("some input text");
  CHECK(encode(compressor, cfg, ids).value() == encode(teacher, cfg, ids).value());
  CHECK(pools.g_instruction.shape() == std::vector<Index>{10, 16});
  CHECK(pools.g_passage.shape() == std::vector<Index>{10, 16});
  const auto& table = teacher.at("embed.token").value();
  for (int i = 0; i < 10; ++i) {
    CHECK(pools.g_instruction.value().row(i) == table.row(Vocab::instruction_gist_id(i)));
    CHECK(pools.g_passage.value().row(i) == table.row(Vocab::passage_gist_id(i)));
  }
  for (const auto& name : compressor.names()) CHECK(is_encoder_param(name));
  CHECK(compressor.role() == Role::kCompressor);
  compressor.at("enc.L0.attn.wq").mutable_value().setConstant(3.0f);
  pools.g_instruction.mutable_value().setZero();
  CHECK(checksum(teacher) == before);

  auto [uc, unified] = init_compressor(teacher, cfg, GistMode::kUnified);
  CHECK(unified.g_instruction.rows() == 20);
  CHECK(unified.n_gist() == 10);
  CHECK(unified.g_instruction.value().row(10) == table.row(Vocab::passage_gist_id(0)));
}

TEST_CASE("assemble_compressor_input layout arithmetic") {
  const auto cfg = small_config();
  const auto teacher = init_params<float>(cfg, 2);
  auto [compressor, pools] = init_compressor(teacher, cfg);
  const Vocab v;

  const auto inst = instruction_example(std::string(29, 'a'), "abcd");
  CHECK(prompt_length(inst, v, 5) == 30);
  const auto in1 = assemble_compressor_input(inst, pools, compressor, v, cfg, 5);
  CHECK(in1.embedded.rows() == 45);
  CHECK(in1.gist_ranges == std::vector<std::pair<Index, Index>>{{0, 10}});
  CHECK(in1.layout == GistLayout::kInstructionOnly);
  CHECK(in1.embedded.value().topRows(10) == pools.g_instruction.value());

  const auto in2 = assemble_compressor_input(rag_example(), pools, compressor, v, cfg, 5);
  CHECK(in2.gist_ranges == std::vector<std::pair<Index, Index>>{{0, 10}, {10, 20}});
  CHECK(in2.layout == GistLayout::kPassageThenInstruction);
  CHECK(in2.passages_used == 3);
  CHECK(in2.embedded.value().topRows(10) == pools.g_passage.value());
  CHECK(in2.embedded.value().middleRows(10, 10) == pools.g_instruction.value());

  const auto empty_x = assemble_compressor_input(instruction_example("do it", ""), pools, compressor, v, cfg, 5);
  CHECK(empty_x.segments.back().name == "input");
  CHECK(empty_x.segments.back().length == 1);
}

TEST_CASE("assemble_compressor_input truncates passages last-rank-first then reports segment lengths") {
  auto cfg = small_config();
  const Vocab v;
  const auto ex = rag_example();
  // Room for the gist rows, the two top-ranked passages, instruction and input.
  cfg.max_seq_len = static_cast<int>(20 + v.encode(ex.passages[0]).size() + v.encode(ex.passages[1]).size() +
                                     v.encode(ex.instruction).size() + v.encode(ex.input).size());
  const auto teacher = init_params<float>(cfg, 3);
  auto [compressor, pools] = init_compressor(teacher, cfg);
  const auto in = assemble_compressor_input(ex, pools, compressor, v, cfg, 5);
  CHECK(in.passages_used == 2);
  CHECK(in.embedded.rows() == cfg.max_seq_len);

  cfg.max_seq_len = 30;
  const auto small_teacher = init_params<float>(cfg, 3);
  auto [c2, p2] = init_compressor(small_teacher, cfg);
  CHECK_THROWS_WITH_AS(assemble_compressor_input(instruction_example(std::string(40, 'z'), "abc"), p2, c2, v, cfg, 5),
                       "compressor input needs 55 positions but max_seq_len is 30 (gist 10, instruction 41, input 4)",
                       ContractViolation);
}

TEST_CASE("compress slices gist rows and attends over the prompt") {
  const auto cfg = small_config();
  const auto teacher = init_params<float>(cfg, 4);
  auto [compressor, pools] = init_compressor(teacher, cfg);
  const Vocab v;
  const auto inst = instruction_example("reverse it", "ab");
  CHECK(compress(compressor, cfg, assemble_compressor_input(inst, pools, compressor, v, cfg, 5)).h.rows() == 10);

  auto ex = rag_example();
  const auto input = assemble_compressor_input(ex, pools, compressor, v, cfg, 5);
  const auto states = compress(compressor, cfg, input);
  CHECK(states.h.rows() == 20);
  CHECK(states.layout == GistLayout::kPassageThenInstruction);
  const auto hidden = encode_embedded(compressor, cfg, input.embedded).value();
  CHECK(states.h.value() == hidden.topRows(20));

  ex.passages[1][4] = 'q';
  const auto changed = compress(compressor, cfg, assemble_compressor_input(ex, pools, compressor, v, cfg, 5));
  CHECK(changed.h.value() != states.h.value());
}

TEST_CASE("build_decoder_memory layout and compression-rate invariant") {
  const auto cfg = small_config();
  const auto teacher = init_params<float>(cfg, 5);
  auto [compressor, pools] = init_compressor(teacher, cfg);
  const Vocab v;
  const auto inst = instruction_example("a fairly long instruction about what to do with the input", "abcde");
  const auto states = compress(compressor, cfg, assemble_compressor_input(inst, pools, compressor, v, cfg, 5));
  const auto memory = build_decoder_memory(states, teacher, cfg, v.encode("abcde"));
  CHECK(memory.rows() == 16);
  CHECK(memory.value().topRows(10) == states.h.value());
  CHECK(memory.value().bottomRows(6) == encode(teacher, cfg, v.encode("abcde")).value());

  const auto other = build_decoder_memory(states, teacher, cfg, v.encode("vwxyz"));
  CHECK(other.value().topRows(10) == memory.value().topRows(10));
  CHECK(other.value().bottomRows(6) != memory.value().bottomRows(6));
  CHECK(build_decoder_memory(states, teacher, cfg, v.encode("abcde"), false).rows() == 10);

  for (int n : {1, 5, 10}) {
    auto c = small_config(n);
    auto [cp, pp] = init_compressor(teacher, c);
    const auto ex = rag_example();
    const auto s = compress(cp, c, assemble_compressor_input(ex, pp, cp, v, c, 5));
    const auto x = v.encode(ex.input);
    const auto mem = build_decoder_memory(s, teacher, c, x);
    CHECK(mem.rows() == 2 * n + static_cast<Index>(x.size()));
    CHECK(prompt_length(ex, v, 5) > 2 * n);
    CHECK(mem.rows() < prompt_length(ex, v, 5) + static_cast<Index>(x.size()));
  }
}

TEST_CASE("distillation gradients reach pools and compressor but never the teacher") {
  const auto cfg = small_config(2);
  auto teacher = init_params<float>(cfg, 6);
  teacher.set_frozen(true);
  auto [compressor, pools] = init_compressor(teacher, cfg);
  const auto before = checksum(teacher);

  backward(distillation_example_loss(teacher, compressor, pools, cfg, rag_example(), 5, KlDirection::kAsPaper, true));
  CHECK(pools.g_instruction.has_grad());
  CHECK(pools.g_passage.has_grad());
  CHECK(pools.g_passage.grad().norm() > 0);
  CHECK(pools.g_instruction.grad().norm() > 0);
  for (const auto& [name, t] : compressor.tensors()) {
    INFO(name);
    CHECK(t.has_grad());
  }
  for (const auto& [name, t] : teacher.tensors()) CHECK_FALSE(t.has_grad());
  CHECK(gradient_mass(teacher) == 0.0);
  CHECK(checksum(teacher) == before);

  compressor.zero_grad();
  pools.g_instruction.zero_grad();
  pools.g_passage.zero_grad();
  backward(distillation_example_loss(teacher, compressor, pools, cfg, instruction_example("swap the words", "ab cd"), 5,
                                     KlDirection::kAsPaper, true));
  CHECK(pools.g_passage.grad().norm() == 0);
  CHECK(pools.g_instruction.grad().norm() > 0);
}

TEST_CASE("composed distillation loss on a 2-example batch passes grad_check") {
  auto cfg = small_config(2);
  cfg.d_model = 8;
  cfg.d_ff = 16;
  auto teacher = init_params<double>(cfg, 7);
  teacher.set_frozen(true);
  auto [compressor, pools] = init_compressor(teacher, cfg);
  auto rag = rag_example();
  rag.passages.resize(1);
  const auto inst = instruction_example("swap", "ab cd");
  auto loss = [&] {
    return mean_of(std::vector<Tensor<double>>{
        distillation_example_loss(teacher, compressor, pools, cfg, rag, 1, KlDirection::kAsPaper, true),
        distillation_example_loss(teacher, compressor, pools, cfg, inst, 1, KlDirection::kAsPaper, true)});
  };
  std::vector<Tensor<double>> params{pools.g_instruction, pools.g_passage};
  for (const auto& kv : compressor.tensors()) params.push_back(kv.second);
  GradCheckOptions opts;
  opts.samples_per_tensor = 6;
  const auto result = grad_check<double>(loss, params, opts);
  CHECK(result.max_relative_error < 1e-4);
}
