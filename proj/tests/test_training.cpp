#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "gcoco/checkpoint.hpp"
#include "gcoco/training.hpp"

using namespace gcoco;

namespace {

ModelConfig small_config() {
  ModelConfig cfg;
  cfg.d_model = 16;
  cfg.n_heads = 2;
  cfg.n_enc_layers = 1;
  cfg.n_dec_layers = 1;
  cfg.d_ff = 32;
  cfg.max_seq_len = 256;
  cfg.n_gist = 2;
  return cfg;
}

std::vector<Example> passage_suite(std::uint64_t seed, int n) {
  auto qa = generate_passage_qa(seed, n, 10);
  attach_passages(qa.corpus, qa.examples, 3);
  return qa.examples;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("gcoco_test_" + name);
}

std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream(p, std::ios::binary) << bytes;
}

}  // namespace

TEST_CASE("pretrain_teacher lowers dev loss and is deterministic") {
  const auto cfg = small_config();
  const auto data = passage_suite(1, 48);
  const std::vector<Example> train(data.begin(), data.begin() + 40);
  const std::vector<Example> dev(data.begin() + 40, data.end());
  TrainConfig tc;
  tc.learning_rate = 3e-3;
  tc.epochs = 2;
  tc.batch_size = 4;
  tc.seed = 5;
  TrainLog log;
  int callbacks = 0;
  const auto teacher = pretrain_teacher(cfg, tc, train, dev, &log, [&](const EpochRecord&) { ++callbacks; });
  CHECK(callbacks == 2);
  REQUIRE(log.epochs.size() == 2);
  CHECK(log.epochs.back().dev_loss < log.initial_dev_loss);
  CHECK(log.step_losses.size() == 20);
  CHECK_FALSE(teacher.frozen());

  TrainLog again;
  CHECK(checksum(pretrain_teacher(cfg, tc, train, dev, &again)) == checksum(teacher));
  CHECK(again.step_losses == log.step_losses);

  tc.epochs = 0;
  CHECK(checksum(pretrain_teacher(cfg, tc, train, dev)) == checksum(init_params<float>(cfg, tc.seed)));

  tc.learning_rate = 0;
  CHECK_THROWS_AS(pretrain_teacher(cfg, tc, train, dev), ContractViolation);
}

TEST_CASE("train_compressor keeps the teacher frozen and lowers the KL") {
  const auto cfg = small_config();
  const auto data = passage_suite(2, 40);
  TrainConfig tc;
  tc.learning_rate = 3e-3;
  tc.epochs = 2;
  tc.batch_size = 4;
  tc.seed = 1;
  auto teacher = pretrain_teacher(cfg, tc, data, {});
  auto [compressor, pools] = init_compressor(teacher, cfg);
  CHECK_THROWS_AS(train_compressor(cfg, tc, teacher, CompressorModel{compressor, pools}, data), ContractViolation);

  teacher.set_frozen(true);
  const auto before = checksum(teacher);
  tc.epochs = 3;
  TrainLog log;
  const auto trained = train_compressor(cfg, tc, teacher, CompressorModel{compressor, pools}, data, &log);
  CHECK(checksum(teacher) == before);
  CHECK(log.teacher_checksum_before == log.teacher_checksum_after);
  CHECK(log.max_teacher_grad_mass == 0.0);
  for (double l : log.step_losses) CHECK(l >= -1e-6);
  const size_t per_epoch = log.step_losses.size() / 3;
  double last_epoch = 0;
  for (size_t i = log.step_losses.size() - per_epoch; i < log.step_losses.size(); ++i) last_epoch += log.step_losses[i];
  CHECK(last_epoch / static_cast<double>(per_epoch) < log.step_losses.front());
  CHECK(checksum(trainable_view(trained)) != checksum(trainable_view(CompressorModel{compressor, pools})));

  TrainLog again;
  auto [c2, p2] = init_compressor(teacher, cfg);
  const auto retrained = train_compressor(cfg, tc, teacher, CompressorModel{c2, p2}, data, &again);
  CHECK(again.step_losses == log.step_losses);
  CHECK(checksum(trainable_view(retrained)) == checksum(trainable_view(trained)));
}

TEST_CASE("train_compressor handles N larger than a one-token prompt") {
  auto cfg = small_config();
  cfg.n_gist = 4;
  auto teacher = init_params<float>(cfg, 3);
  teacher.set_frozen(true);
  Example ex;
  ex.id = "tiny";
  ex.instruction = "";
  ex.input = "ab";
  ex.target = "ba";
  ex.task_type = TaskType::kInstruction;
  auto [compressor, pools] = init_compressor(teacher, cfg);
  TrainConfig tc;
  tc.epochs = 1;
  TrainLog log;
  CHECK_NOTHROW(train_compressor(cfg, tc, teacher, CompressorModel{compressor, pools}, {ex, ex}, &log));
  CHECK(log.step_losses.size() == 2);
}

TEST_CASE("checkpoint roundtrip is bit-exact") {
  const auto cfg = small_config();
  auto teacher = init_params<float>(cfg, 4);
  teacher.set_frozen(true);
  const auto path = temp_path("teacher.ckpt");
  save_checkpoint(teacher, nullptr, cfg, path);
  const auto loaded = load_checkpoint(path);
  CHECK(loaded.config == cfg);
  CHECK(loaded.params.frozen());
  CHECK(loaded.params.role() == Role::kTeacher);
  CHECK_FALSE(loaded.pools.has_value());
  CHECK(checksum(loaded.params) == checksum(teacher));
  CHECK(loaded.params.names() == teacher.names());
  for (const auto& [name, t] : teacher.tensors()) CHECK(loaded.params.at(name).value() == t.value());
  const auto again = temp_path("teacher2.ckpt");
  save_checkpoint(loaded.params, nullptr, loaded.config, again);
  CHECK(read_bytes(again) == read_bytes(path));
  CHECK(read_bytes(path).rfind(std::string("GCOCO1\0", 7), 0) == 0);

  for (auto mode : {GistMode::kDisentangled, GistMode::kUnified}) {
    auto [compressor, pools] = init_compressor(teacher, cfg, mode);
    const auto cpath = temp_path("compressor.ckpt");
    save_checkpoint(compressor, &pools, cfg, cpath);
    const auto c = load_checkpoint_as(cpath, Role::kCompressor);
    CHECK(c.params.role() == Role::kCompressor);
    REQUIRE(c.pools.has_value());
    CHECK(c.pools->mode == mode);
    CHECK(c.pools->g_instruction.value() == pools.g_instruction.value());
    if (mode == GistMode::kDisentangled) CHECK(c.pools->g_passage.value() == pools.g_passage.value());
    CHECK(checksum(c.params) == checksum(compressor));
  }
}

TEST_CASE("checkpoint error kinds") {
  const auto cfg = small_config();
  const auto teacher = init_params<float>(cfg, 5);
  const auto path = temp_path("errors.ckpt");
  save_checkpoint(teacher, nullptr, cfg, path);
  const std::string bytes = read_bytes(path);
  const auto bad = temp_path("bad.ckpt");

  auto kind_of = [&](const std::string& content) {
    write_bytes(bad, content);
    try {
      load_checkpoint(bad);
    } catch (const CheckpointError& e) {
      return e.kind();
    }
    FAIL("no error raised");
    return CheckpointError::Kind::kIo;
  };

  std::string corrupted = bytes;
  corrupted[0] = 'X';
  CHECK(kind_of(corrupted) == CheckpointError::Kind::kBadMagic);
  CHECK_THROWS_WITH(load_checkpoint(bad), "bad magic");
  CHECK(kind_of(bytes.substr(0, bytes.size() - 10)) == CheckpointError::Kind::kTruncated);
  CHECK(kind_of(bytes.substr(0, 12)) == CheckpointError::Kind::kTruncated);
  std::string versioned = bytes;
  const auto at = versioned.find("\"version\":1");
  REQUIRE(at != std::string::npos);
  versioned[at + 10] = '9';
  CHECK(kind_of(versioned) == CheckpointError::Kind::kVersionMismatch);
  CHECK_THROWS_AS(load_checkpoint(temp_path("missing.ckpt")), CheckpointError);
}

TEST_CASE("teacher checkpoints load as compressors but not the reverse") {
  const auto cfg = small_config();
  const auto teacher = init_params<float>(cfg, 6);
  const auto tpath = temp_path("as_teacher.ckpt");
  save_checkpoint(teacher, nullptr, cfg, tpath);
  const auto as_compressor = load_checkpoint_as(tpath, Role::kCompressor);
  CHECK(as_compressor.params.names() == expected_parameter_names(cfg, Role::kCompressor));

  auto [compressor, pools] = init_compressor(teacher, cfg);
  const auto cpath = temp_path("as_compressor.ckpt");
  save_checkpoint(compressor, &pools, cfg, cpath);
  try {
    load_checkpoint_as(cpath, Role::kTeacher);
    FAIL("expected missing names");
  } catch (const CheckpointError& e) {
    CHECK(e.kind() == CheckpointError::Kind::kMissingNames);
    const std::string msg = e.what();
    CHECK(msg.rfind("missing parameters: ", 0) == 0);
    CHECK(msg.find("dec.pos") != std::string::npos);
    CHECK(msg.find("embed.out_bias") != std::string::npos);
    CHECK(msg.find("enc.pos") == std::string::npos);
  }
}
