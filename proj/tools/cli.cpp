#include "cli.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gcoco/checkpoint.hpp"
#include "gcoco/data.hpp"
#include "gcoco/eval.hpp"
#include "gcoco/training.hpp"
#include "json.hpp"

namespace gcoco::cli {

namespace {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string config;
  std::uint64_t seed = 0;
  std::string out = ".";

  // gen-data
  int n_train = 1500;
  int n_eval = 500;
  int n_distractors = 50;
  int n_instruction_train = 0;
  int n_instruction_eval = 0;
  int retrieve_depth = 5;

  // model shape (pretrain)
  int d_model = 64;
  int n_heads = 4;
  int enc_layers = 2;
  int dec_layers = 2;
  int d_ff = 256;
  int max_seq_len = 512;

  // training
  std::string data;
  std::string dev;
  std::string teacher;
  std::string checkpoint;
  std::string eval_data;
  int epochs = 8;
  double lr = 1e-4;
  int batch_size = 1;
  int gist_count = 10;
  bool unified_gists = false;
  int k_passages_train = 1;
  int k_passages_pretrain_max = 5;
  std::string kl_direction = "as_paper";
  bool train_memory_includes_x = true;
  double clip_norm = 0;

  // eval / verbalize / sweep
  int k_passages = 5;
  std::vector<std::string> conditions{"no_prompt", "gist", "full_prompt"};
  std::vector<std::string> sweep_conditions{"gist"};
  int max_generate = 16;
  bool verbalize = false;
  int max_len = 16;
  std::vector<int> gist_counts{1, 5, 10};
};

// One subcommand plus a record of its options, used for the config stamp
// and for applying JSON config files.
class Command {
 public:
  Command(CLI::App& app, const std::string& name, const std::string& description)
      : name_(name), app_(app.add_subcommand(name, description)) {}

  template <typename T>
  void option(const std::string& flag, T& var, const std::string& description) {
    auto* opt = app_->add_option("--" + flag, var, description);
    if constexpr (requires { var.push_back(var.front()); }) opt->delimiter(',');
    record(flag, opt, var);
  }

  void flag(const std::string& flag, bool& var, const std::string& description) {
    record(flag, app_->add_flag("--" + flag, var, description), var);
  }

  const std::string& name() const { return name_; }
  CLI::App* app() const { return app_; }

  // Flags given on the command line win over config values.
  void apply_config(const Json& config) {
    if (!config.is_object()) throw UsageError("config file must hold a JSON object");
    for (const auto& [key, value] : config.items()) {
      if (key == "command") {
        if (value != name_) throw UsageError("config is for command '" + value.dump() + "', not '" + name_ + "'");
        continue;
      }
      auto it = entries_.find(key);
      if (it == entries_.end() || key == "config") throw UsageError("unknown config key: " + key);
      if (it->second.option->count() > 0) continue;
      try {
        it->second.set(value);
      } catch (const Json::exception& e) {
        throw UsageError("config key " + key + ": " + e.what());
      }
    }
  }

  Json stamp() const {
    Json j;
    j["command"] = name_;
    for (const auto& key : order_)
      if (key != "config") j[key] = entries_.at(key).get();
    return j;
  }

 private:
  struct Entry {
    CLI::Option* option = nullptr;
    std::function<Json()> get;
    std::function<void(const Json&)> set;
  };

  template <typename T>
  void record(const std::string& flag, CLI::Option* opt, T& var) {
    entries_[flag] = Entry{opt, [&var] { return Json(var); }, [&var](const Json& j) { var = j.get<T>(); }};
    order_.push_back(flag);
  }

  std::string name_;
  CLI::App* app_;
  std::map<std::string, Entry> entries_;
  std::vector<std::string> order_;
};

// Human-readable progress on `out`, machine-readable JSONL next to the outputs.
class RunLog {
 public:
  RunLog(std::ostream& out, const fs::path& path) : out_(out), file_(path, std::ios::trunc) {
    if (!file_) throw Error("cannot write log " + path.string());
  }

  void epoch(const std::string& phase, const EpochRecord& r, int total) {
    char line[160];
    if (std::isnan(r.dev_loss))
      std::snprintf(line, sizeof(line), "[%s] epoch %d/%d loss %.6f time %.1fs", phase.c_str(), r.epoch, total,
                    r.train_loss, r.seconds);
    else
      std::snprintf(line, sizeof(line), "[%s] epoch %d/%d loss %.6f dev %.6f time %.1fs", phase.c_str(), r.epoch, total,
                    r.train_loss, r.dev_loss, r.seconds);
    out_ << line << std::endl;
    Json j;
    j["event"] = "epoch";
    j["phase"] = phase;
    j["epoch"] = r.epoch;
    j["train_loss"] = r.train_loss;
    j["dev_loss"] = std::isnan(r.dev_loss) ? Json(nullptr) : Json(r.dev_loss);
    j["seconds"] = r.seconds;
    file_ << j.dump() << "\n" << std::flush;
  }

  void summary(const std::string& text, Json j) {
    out_ << text << std::endl;
    j["event"] = "summary";
    file_ << j.dump() << "\n" << std::flush;
  }

 private:
  std::ostream& out_;
  std::ofstream file_;
};

std::string require(const std::string& flag, const std::string& value) {
  if (value.empty()) throw UsageError("--" + flag + " is required");
  return value;
}

fs::path existing_file(const std::string& what, const std::string& flag, const std::string& value) {
  const fs::path p = require(flag, value);
  if (!fs::is_regular_file(p)) throw Error(what + " not found: " + p.string());
  return p;
}

fs::path output_dir(const Options& o) {
  const fs::path dir = o.out;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (!fs::is_directory(dir)) throw Error("cannot create output directory " + dir.string());
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

void write_stamp(const fs::path& dir, const Command& cmd) {
  write_text(dir / (cmd.name() + ".config.json"), cmd.stamp().dump(2) + "\n");
}

std::string run_id(const Command& cmd) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : cmd.stamp().dump()) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return cmd.name() + "-" + buf;
}

TrainConfig train_config(const Options& o) {
  TrainConfig tc;
  tc.learning_rate = o.lr;
  tc.epochs = o.epochs;
  tc.batch_size = o.batch_size;
  tc.seed = o.seed;
  tc.k_passages_train = o.k_passages_train;
  tc.k_passages_pretrain_max = o.k_passages_pretrain_max;
  if (o.kl_direction == "as_paper") tc.kl_direction = KlDirection::kAsPaper;
  else if (o.kl_direction == "reversed") tc.kl_direction = KlDirection::kReversed;
  else throw UsageError("--kl-direction must be as_paper or reversed");
  tc.train_memory_includes_x = o.train_memory_includes_x;
  tc.clip_norm = o.clip_norm;
  try {
    tc.validate();
  } catch (const ContractViolation& e) {
    throw UsageError(e.what());
  }
  return tc;
}

std::vector<Condition> parse_conditions(const std::vector<std::string>& names) {
  if (names.empty()) throw UsageError("--conditions must name at least one condition");
  std::vector<Condition> out;
  for (const auto& n : names) {
    try {
      out.push_back(parse_condition(n));
    } catch (const ContractViolation& e) {
      throw UsageError(e.what());
    }
  }
  return out;
}

ModelParams<float> load_teacher(const Options& o, ModelConfig* cfg) {
  auto ck = load_checkpoint_as(existing_file("teacher checkpoint", "teacher", o.teacher), Role::kTeacher);
  ck.params.set_frozen(true);
  if (cfg) *cfg = ck.config;
  return std::move(ck.params);
}

CompressorModel load_compressor(const Options& o, const ModelConfig& teacher_cfg, ModelConfig* cfg) {
  auto ck = load_checkpoint_as(existing_file("checkpoint", "checkpoint", o.checkpoint), Role::kCompressor);
  if (!ck.pools) throw Error("checkpoint " + o.checkpoint + " holds no gist pools");
  ModelConfig shape = ck.config;
  shape.n_gist = teacher_cfg.n_gist;
  if (!(shape == teacher_cfg)) throw Error("checkpoint " + o.checkpoint + " does not match the teacher's model shape");
  *cfg = ck.config;
  return CompressorModel{std::move(ck.params), std::move(*ck.pools)};
}

std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

std::string condition_summary(const ConditionReport& r) {
  std::string s = std::string(condition_name(r.condition)) + ": score " + fixed(r.score);
  if (r.n_rag) s += ", accuracy " + fixed(r.accuracy) + " (" + std::to_string(r.n_rag) + " rag)";
  if (r.n_instruction) s += ", rouge_l " + fixed(r.rouge_l) + " (" + std::to_string(r.n_instruction) + " instruction)";
  if (r.mean_compression_ratio) s += ", compression " + fixed(*r.mean_compression_ratio);
  return s;
}

Json condition_json(const ConditionReport& r) {
  Json j;
  j["name"] = condition_name(r.condition);
  j["accuracy"] = r.accuracy;
  j["rouge_l"] = r.rouge_l;
  j["score"] = r.score;
  j["n"] = r.n;
  return j;
}

// ---------------------------------------------------------------------------

int gen_data(const Options& o, const Command& cmd, std::ostream& out) {
  if (o.n_train < 1 || o.n_eval < 1) throw UsageError("--n-train and --n-eval must be at least 1");
  if (o.n_distractors < 0 || o.n_instruction_train < 0 || o.n_instruction_eval < 0 || o.retrieve_depth < 1)
    throw UsageError("counts must be non-negative and --retrieve-depth at least 1");
  const auto dir = output_dir(o);
  auto qa = generate_passage_qa(o.seed, o.n_train + o.n_eval, o.n_distractors);
  attach_passages(qa.corpus, qa.examples, o.retrieve_depth);
  std::vector<Example> train(qa.examples.begin(), qa.examples.begin() + o.n_train);
  std::vector<Example> eval(qa.examples.begin() + o.n_train, qa.examples.end());
  if (o.n_instruction_train > 0) {
    const auto inst = generate_instruction_tasks(o.seed + 1, o.n_instruction_train);
    train.insert(train.end(), inst.begin(), inst.end());
  }
  if (o.n_instruction_eval > 0) {
    const auto inst = generate_instruction_tasks(o.seed + 2, o.n_instruction_eval);
    eval.insert(eval.end(), inst.begin(), inst.end());
  }
  save_jsonl(train, dir / "train.jsonl");
  save_jsonl(eval, dir / "eval.jsonl");
  save_corpus_jsonl(qa.corpus.documents(), dir / "corpus.jsonl");
  write_stamp(dir, cmd);
  out << "wrote " << train.size() << " train and " << eval.size() << " eval examples, " << qa.corpus.size()
      << " documents to " << dir.string() << std::endl;
  return kExitOk;
}

int pretrain(const Options& o, const Command& cmd, std::ostream& out) {
  const auto train = load_jsonl(existing_file("training data", "data", o.data));
  const auto dev = o.dev.empty() ? std::vector<Example>{} : load_jsonl(existing_file("dev data", "dev", o.dev));
  if (train.empty()) throw Error("training data " + o.data + " holds no examples");
  ModelConfig cfg;
  cfg.d_model = o.d_model;
  cfg.n_heads = o.n_heads;
  cfg.n_enc_layers = o.enc_layers;
  cfg.n_dec_layers = o.dec_layers;
  cfg.d_ff = o.d_ff;
  cfg.max_seq_len = o.max_seq_len;
  cfg.n_gist = o.gist_count;
  try {
    cfg.validate();
  } catch (const ContractViolation& e) {
    throw UsageError(e.what());
  }
  const auto tc = train_config(o);
  const auto dir = output_dir(o);
  write_stamp(dir, cmd);
  RunLog log(out, dir / "pretrain.log.jsonl");
  TrainLog tlog;
  const auto teacher =
      pretrain_teacher(cfg, tc, train, dev, &tlog, [&](const EpochRecord& r) { log.epoch("pretrain", r, tc.epochs); });
  save_checkpoint(teacher, nullptr, cfg, dir / "teacher.ckpt");
  Json s;
  s["checkpoint"] = (dir / "teacher.ckpt").string();
  s["initial_dev_loss"] = std::isnan(tlog.initial_dev_loss) ? Json(nullptr) : Json(tlog.initial_dev_loss);
  s["final_train_loss"] = tlog.epochs.empty() ? Json(nullptr) : Json(tlog.epochs.back().train_loss);
  s["steps"] = tlog.step_losses.size();
  log.summary("saved teacher to " + (dir / "teacher.ckpt").string(), s);
  return kExitOk;
}

CompressorModel fit_compressor(const Options& o, const ModelParams<float>& teacher, const ModelConfig& cfg,
                               const std::vector<Example>& train, RunLog& log, const std::string& phase) {
  auto [compressor, pools] =
      init_compressor(teacher, cfg, o.unified_gists ? GistMode::kUnified : GistMode::kDisentangled);
  const auto tc = train_config(o);
  TrainLog tlog;
  auto model = train_compressor(cfg, tc, teacher, CompressorModel{std::move(compressor), std::move(pools)}, train,
                                &tlog, [&](const EpochRecord& r) { log.epoch(phase, r, tc.epochs); });
  Json s;
  s["phase"] = phase;
  s["n_gist"] = cfg.n_gist;
  s["steps"] = tlog.step_losses.size();
  s["final_kl"] = tlog.epochs.empty() ? Json(nullptr) : Json(tlog.epochs.back().train_loss);
  s["max_teacher_grad_mass"] = tlog.max_teacher_grad_mass;
  s["teacher_checksum"] = tlog.teacher_checksum_after;
  log.summary("[" + phase + "] teacher unchanged, max teacher gradient mass " + fixed(tlog.max_teacher_grad_mass), s);
  return model;
}

ModelConfig with_gist_count(ModelConfig cfg, int n) {
  cfg.n_gist = n;
  try {
    cfg.validate();
  } catch (const ContractViolation& e) {
    throw UsageError(e.what());
  }
  return cfg;
}

int train_compressor_cmd(const Options& o, const Command& cmd, std::ostream& out) {
  ModelConfig cfg;
  const auto teacher = load_teacher(o, &cfg);
  const auto train = load_jsonl(existing_file("training data", "data", o.data));
  if (train.empty()) throw Error("training data " + o.data + " holds no examples");
  cfg = with_gist_count(cfg, o.gist_count);
  train_config(o);
  const auto dir = output_dir(o);
  write_stamp(dir, cmd);
  RunLog log(out, dir / "train-compressor.log.jsonl");
  const auto model = fit_compressor(o, teacher, cfg, train, log, "train-compressor");
  save_checkpoint(model.compressor, &model.pools, cfg, dir / "compressor.ckpt");
  out << "saved compressor to " << (dir / "compressor.ckpt").string() << std::endl;
  return kExitOk;
}

int eval_cmd(const Options& o, const Command& cmd, std::ostream& out) {
  const auto conditions = parse_conditions(o.conditions);
  ModelConfig teacher_cfg;
  const auto teacher = load_teacher(o, &teacher_cfg);
  ModelConfig cfg = teacher_cfg;
  std::optional<CompressorModel> model;
  const bool needs_compressor = std::find(conditions.begin(), conditions.end(), Condition::kGist) != conditions.end();
  if (needs_compressor || !o.checkpoint.empty()) model = load_compressor(o, teacher_cfg, &cfg);
  const auto examples = load_jsonl(existing_file("evaluation data", "data", o.data));
  if (examples.empty()) throw Error("evaluation data " + o.data + " holds no examples");
  EvalOptions eo;
  eo.k_passages = o.k_passages;
  eo.max_generate = o.max_generate;
  eo.verbalize = o.verbalize;
  eo.verbalize_max_len = o.max_len;
  const auto dir = output_dir(o);
  auto report = run_eval(teacher, cfg, model ? &*model : nullptr, examples, conditions, eo);
  report.run_id = run_id(cmd);
  report.config_json = cmd.stamp().dump();
  write_stamp(dir, cmd);
  write_report(report, dir / "report.json", dir / "report.csv");
  for (const auto& r : report.per_condition) out << condition_summary(r) << std::endl;
  out << "wrote " << (dir / "report.json").string() << " and " << (dir / "report.csv").string() << std::endl;
  return kExitOk;
}

int verbalize_cmd(const Options& o, const Command& cmd, std::ostream& out) {
  if (o.max_len < 1) throw UsageError("--max-len must be at least 1");
  ModelConfig teacher_cfg;
  const auto teacher = load_teacher(o, &teacher_cfg);
  ModelConfig cfg;
  const auto model = load_compressor(o, teacher_cfg, &cfg);
  const auto examples = load_jsonl(existing_file("data", "data", o.data));
  const auto dir = output_dir(o);
  write_stamp(dir, cmd);
  const Vocab vocab;
  NoGradGuard no_grad;
  std::ofstream file(dir / "verbalized.jsonl", std::ios::binary | std::ios::trunc);
  if (!file) throw Error("cannot write " + (dir / "verbalized.jsonl").string());
  double ratio_total = 0;
  int contains = 0;
  for (const auto& ex : examples) {
    const auto input = assemble_compressor_input(ex, model.pools, model.compressor, vocab, cfg, o.k_passages);
    const auto v = verbalize(teacher, cfg, compress(model.compressor, cfg, input), o.max_len);
    const auto prompt_tokens = static_cast<long>(prompt_length(ex, vocab, o.k_passages));
    const double ratio = compression_ratio(prompt_tokens, static_cast<long>(v.tokens.size()));
    const bool has_target = substring_accuracy(v.text, ex.target) == 1;
    ratio_total += ratio;
    contains += has_target;
    Json j;
    j["id"] = ex.id;
    j["task_type"] = task_type_name(ex.task_type);
    j["layout"] = gist_layout_name(v.source_layout);
    j["verbalized"] = v.text;
    j["target"] = ex.target;
    j["contains_target"] = has_target;
    j["prompt_tokens"] = prompt_tokens;
    j["verbalized_tokens"] = v.tokens.size();
    j["compression_ratio"] = ratio;
    file << j.dump() << "\n";
  }
  const double n = static_cast<double>(std::max<size_t>(examples.size(), 1));
  out << "verbalized " << examples.size() << " prompts: mean compression " << fixed(ratio_total / n)
      << ", contains target " << fixed(contains / n) << std::endl;
  return kExitOk;
}

int sweep_cmd(const Options& o, const Command& cmd, std::ostream& out) {
  if (o.gist_counts.empty()) throw UsageError("--gist-counts must list at least one N");
  const auto conditions = parse_conditions(o.sweep_conditions);
  ModelConfig teacher_cfg;
  const auto teacher = load_teacher(o, &teacher_cfg);
  const auto train = load_jsonl(existing_file("training data", "data", o.data));
  const auto eval = load_jsonl(existing_file("evaluation data", "eval-data", o.eval_data));
  if (train.empty() || eval.empty()) throw Error("sweep needs non-empty training and evaluation data");
  for (int n : o.gist_counts) with_gist_count(teacher_cfg, n);
  train_config(o);
  const auto dir = output_dir(o);
  write_stamp(dir, cmd);
  RunLog log(out, dir / "sweep.log.jsonl");
  EvalOptions eo;
  eo.k_passages = o.k_passages;
  eo.max_generate = o.max_generate;
  std::string table = "n_gist,task,metric,value\n";
  for (int n : o.gist_counts) {
    const auto cfg = with_gist_count(teacher_cfg, n);
    const std::string tag = "n" + std::to_string(n);
    const auto model = fit_compressor(o, teacher, cfg, train, log, "sweep " + tag);
    save_checkpoint(model.compressor, &model.pools, cfg, dir / ("compressor_" + tag + ".ckpt"));
    auto report = run_eval(teacher, cfg, &model, eval, conditions, eo);
    report.run_id = run_id(cmd) + "-" + tag;
    auto stamp = cmd.stamp();
    stamp["gist_count"] = n;
    report.config_json = stamp.dump();
    write_report(report, dir / ("report_" + tag + ".json"), dir / ("report_" + tag + ".csv"));
    Json s;
    s["n_gist"] = n;
    s["per_condition"] = Json::array();
    for (const auto& r : report.per_condition) {
      s["per_condition"].push_back(condition_json(r));
      const std::string prefix = std::to_string(n) + ",";
      const std::string cond = condition_name(r.condition);
      if (r.n_rag) table += prefix + "rag," + cond + "_accuracy," + fixed(r.accuracy) + "\n";
      if (r.n_instruction) table += prefix + "instruction," + cond + "_rouge_l," + fixed(r.rouge_l) + "\n";
      table += prefix + "all," + cond + "_score," + fixed(r.score) + "\n";
    }
    std::string line = "[sweep " + tag + "]";
    for (const auto& r : report.per_condition) line += " " + condition_summary(r);
    log.summary(line, s);
  }
  write_text(dir / "sweep.csv", table);
  out << "wrote " << (dir / "sweep.csv").string() << std::endl;
  return kExitOk;
}

// Finds --config PATH / --config=PATH before parsing so the file can be read.
Json read_config(const std::string& path) {
  if (path.empty()) return Json::object();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read config file " + path);
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw UsageError("config file " + path + " is not valid JSON: " + e.what());
  }
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"gcoco: gist-conditioned prompt compression at desk scale"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  std::vector<std::unique_ptr<Command>> commands;
  auto add = [&](const std::string& name, const std::string& description) -> Command& {
    commands.push_back(std::make_unique<Command>(app, name, description));
    Command& c = *commands.back();
    c.option("config", o.config, "JSON file of option values; command-line flags win");
    c.option("seed", o.seed, "random seed");
    c.option("out", o.out, "output directory");
    return c;
  };
  auto training_options = [&](Command& c) {
    c.option("data", o.data, "training examples (JSONL)");
    c.option("epochs", o.epochs, "training epochs");
    c.option("lr", o.lr, "Adam learning rate");
    c.option("batch-size", o.batch_size, "examples per optimizer step");
    c.option("gist-count", o.gist_count, "gist tokens per pool (N)");
    c.option("clip-norm", o.clip_norm, "gradient norm clipping threshold (0 disables)");
  };
  auto distill_options = [&](Command& c) {
    training_options(c);
    c.flag("unified-gists", o.unified_gists, "one shared pool of 2N gist tokens instead of separate pools");
    c.option("k-passages-train", o.k_passages_train, "retrieved passages per rag prompt during compressor training");
    c.option("kl-direction", o.kl_direction, "as_paper (KL(P||Q)) or reversed (KL(Q||P))");
    c.flag("train-memory-includes-x", o.train_memory_includes_x, "append the encoded input to the training memory");
  };

  auto& gen = add("gen-data", "generate synthetic passage-QA and instruction data");
  gen.option("n-train", o.n_train, "passage-QA training examples");
  gen.option("n-eval", o.n_eval, "passage-QA evaluation examples");
  gen.option("n-distractors", o.n_distractors, "extra distractor documents in the corpus");
  gen.option("n-instruction-train", o.n_instruction_train, "instruction-task training examples");
  gen.option("n-instruction-eval", o.n_instruction_eval, "instruction-task evaluation examples");
  gen.option("retrieve-depth", o.retrieve_depth, "passages retrieved and stored per rag example");

  auto& pre = add("pretrain", "train the full-prompt teacher with cross-entropy");
  training_options(pre);
  pre.option("dev", o.dev, "development examples (JSONL)");
  pre.option("k-passages-pretrain-max", o.k_passages_pretrain_max, "largest passage depth sampled during pretraining");
  pre.option("d-model", o.d_model, "model width");
  pre.option("n-heads", o.n_heads, "attention heads");
  pre.option("enc-layers", o.enc_layers, "encoder layers");
  pre.option("dec-layers", o.dec_layers, "decoder layers");
  pre.option("d-ff", o.d_ff, "feed-forward width");
  pre.option("max-seq-len", o.max_seq_len, "longest sequence the model accepts");

  auto& trc = add("train-compressor", "distill prompts into gist tokens against a frozen teacher");
  distill_options(trc);
  trc.option("teacher", o.teacher, "teacher checkpoint");

  auto& ev = add("eval", "evaluate no-prompt, gist and full-prompt conditions");
  ev.option("teacher", o.teacher, "teacher checkpoint");
  ev.option("checkpoint", o.checkpoint, "compressor checkpoint");
  ev.option("data", o.data, "evaluation examples (JSONL)");
  ev.option("k-passages", o.k_passages, "retrieved passages per rag prompt");
  ev.option("conditions", o.conditions, "comma-separated: no_prompt, gist, full_prompt");
  ev.option("max-generate", o.max_generate, "longest generated answer");
  ev.flag("verbalize", o.verbalize, "also verbalize gist states and report compression ratios");
  ev.option("max-len", o.max_len, "longest verbalized prompt");

  auto& verb = add("verbalize", "decode gist states into text prompts");
  verb.option("teacher", o.teacher, "teacher checkpoint");
  verb.option("checkpoint", o.checkpoint, "compressor checkpoint");
  verb.option("data", o.data, "examples (JSONL)");
  verb.option("max-len", o.max_len, "longest verbalized prompt");
  verb.option("k-passages", o.k_passages, "retrieved passages per rag prompt");

  auto& sw = add("sweep", "train and evaluate one compressor per gist count");
  distill_options(sw);
  sw.option("teacher", o.teacher, "teacher checkpoint");
  sw.option("eval-data", o.eval_data, "evaluation examples (JSONL)");
  sw.option("gist-counts", o.gist_counts, "comma-separated gist counts");
  sw.option("k-passages", o.k_passages, "retrieved passages per rag prompt at evaluation");
  sw.option("conditions", o.sweep_conditions, "comma-separated conditions evaluated per gist count");
  sw.option("max-generate", o.max_generate, "longest generated answer");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }

  Command* active = nullptr;
  for (auto& c : commands)
    if (c->app()->parsed()) active = c.get();

  try {
    active->apply_config(read_config(o.config));
    if (active == &gen) return gen_data(o, *active, out);
    if (active == &pre) return pretrain(o, *active, out);
    if (active == &trc) return train_compressor_cmd(o, *active, out);
    if (active == &ev) return eval_cmd(o, *active, out);
    if (active == &verb) return verbalize_cmd(o, *active, out);
    return sweep_cmd(o, *active, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n" << active->app()->help();
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << std::endl;
    return kExitRuntime;
  }
}

}  // namespace gcoco::cli
