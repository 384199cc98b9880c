#include "gcoco/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "json.hpp"

namespace gcoco {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[7] = {'G', 'C', 'O', 'C', 'O', '1', '\0'};

nlohmann::ordered_json config_to_json(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["d_model"] = c.d_model;
  j["n_heads"] = c.n_heads;
  j["n_enc_layers"] = c.n_enc_layers;
  j["n_dec_layers"] = c.n_dec_layers;
  j["d_ff"] = c.d_ff;
  j["vocab_size"] = c.vocab_size;
  j["max_seq_len"] = c.max_seq_len;
  j["n_gist"] = c.n_gist;
  return j;
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.d_model = j.at("d_model").get<int>();
  c.n_heads = j.at("n_heads").get<int>();
  c.n_enc_layers = j.at("n_enc_layers").get<int>();
  c.n_dec_layers = j.at("n_dec_layers").get<int>();
  c.d_ff = j.at("d_ff").get<int>();
  c.vocab_size = j.at("vocab_size").get<int>();
  c.max_seq_len = j.at("max_seq_len").get<int>();
  c.n_gist = j.at("n_gist").get<int>();
  return c;
}

}  // namespace

void save_checkpoint(const ModelParams<float>& params, const GistPools<float>* pools, const ModelConfig& config,
                     const std::filesystem::path& path) {
  std::vector<std::pair<std::string, Tensor<float>>> entries;
  for (const auto& kv : params.tensors()) entries.emplace_back(kv.first, kv.second);
  if (pools)
    for (auto& kv : pools->named()) entries.push_back(std::move(kv));

  nlohmann::ordered_json header;
  header["version"] = kCheckpointVersion;
  auto cfg = config_to_json(config);
  cfg["role"] = role_name(params.role());
  cfg["frozen"] = params.frozen();
  cfg["gist_mode"] = !pools ? "none" : pools->mode == GistMode::kUnified ? "unified" : "disentangled";
  header["config"] = cfg;
  header["entries"] = nlohmann::ordered_json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : entries) {
    const std::uint64_t length = sizeof(float) * static_cast<std::uint64_t>(t.size());
    nlohmann::ordered_json e;
    e["name"] = name;
    e["dtype"] = "f32";
    e["shape"] = {t.rows(), t.cols()};
    e["offset"] = offset;
    e["length"] = length;
    header["entries"].push_back(e);
    offset += length;
  }
  const std::string text = header.dump();
  const std::uint64_t header_len = text.size();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError(CheckpointError::Kind::kIo, "cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof(kMagic));
  out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, t] : entries)
    out.write(reinterpret_cast<const char*>(t.value().data()), static_cast<std::streamsize>(sizeof(float) * t.size()));
  if (!out) throw CheckpointError(CheckpointError::Kind::kIo, "failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointError::Kind::kIo, "cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw CheckpointError(CheckpointError::Kind::kBadMagic, "bad magic");
  size_t at = sizeof(kMagic);
  std::uint64_t header_len = 0;
  if (bytes.size() < at + sizeof(header_len))
    throw CheckpointError(CheckpointError::Kind::kTruncated, "truncated checkpoint: missing header length");
  std::memcpy(&header_len, bytes.data() + at, sizeof(header_len));
  at += sizeof(header_len);
  if (bytes.size() - at < header_len)
    throw CheckpointError(CheckpointError::Kind::kTruncated, "truncated checkpoint: header cut short");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(at, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(CheckpointError::Kind::kMalformed, std::string("malformed checkpoint header: ") + e.what());
  }
  at += header_len;
  const size_t data_start = at;

  try {
    const int version = header.at("version").get<int>();
    if (version != kCheckpointVersion)
      throw CheckpointError(CheckpointError::Kind::kVersionMismatch,
                            "checkpoint version " + std::to_string(version) + " is not supported (expected " +
                                std::to_string(kCheckpointVersion) + ")");
    const auto& cfg = header.at("config");
    Checkpoint ck;
    ck.config = config_from_json(cfg);
    const std::string role = cfg.at("role").get<std::string>();
    ck.params.set_role(role == "compressor" ? Role::kCompressor : Role::kTeacher);
    const std::string gist_mode = cfg.value("gist_mode", std::string("none"));

    std::map<std::string, Tensor<float>> gist;
    for (const auto& e : header.at("entries")) {
      const auto name = e.at("name").get<std::string>();
      if (e.at("dtype").get<std::string>() != "f32")
        throw CheckpointError(CheckpointError::Kind::kMalformed, "unsupported dtype for " + name);
      const auto shape = e.at("shape").get<std::vector<Index>>();
      const auto offset = e.at("offset").get<std::uint64_t>();
      const auto length = e.at("length").get<std::uint64_t>();
      if (shape.size() != 2 || shape[0] <= 0 || shape[1] <= 0 ||
          length != sizeof(float) * static_cast<std::uint64_t>(shape[0] * shape[1]))
        throw CheckpointError(CheckpointError::Kind::kMalformed, "inconsistent shape/length for " + name);
      if (bytes.size() - data_start < offset || bytes.size() - data_start - offset < length)
        throw CheckpointError(CheckpointError::Kind::kTruncated, "truncated checkpoint: data for " + name + " cut short");
      Matrix<float> m(shape[0], shape[1]);
      std::memcpy(m.data(), bytes.data() + data_start + offset, length);
      Tensor<float> t(std::move(m), true);
      if (name.rfind("gist.", 0) == 0) gist.emplace(name, std::move(t));
      else ck.params.add(name, std::move(t));
    }
    if (gist_mode == "unified") {
      GistPools<float> pools;
      pools.mode = GistMode::kUnified;
      if (!gist.count("gist.unified"))
        throw CheckpointError(CheckpointError::Kind::kMissingNames, "missing parameters: gist.unified");
      pools.g_instruction = gist.at("gist.unified");
      ck.pools = pools;
    } else if (gist_mode == "disentangled") {
      std::string missing;
      for (const char* n : {"gist.instruction", "gist.passage"})
        if (!gist.count(n)) missing += std::string(missing.empty() ? "" : ", ") + n;
      if (!missing.empty()) throw CheckpointError(CheckpointError::Kind::kMissingNames, "missing parameters: " + missing);
      GistPools<float> pools;
      pools.g_instruction = gist.at("gist.instruction");
      pools.g_passage = gist.at("gist.passage");
      ck.pools = pools;
    }
    if (cfg.value("frozen", false)) ck.params.set_frozen(true);
    return ck;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(CheckpointError::Kind::kMalformed, std::string("malformed checkpoint header: ") + e.what());
  }
}

std::vector<std::string> expected_parameter_names(const ModelConfig& config, Role role) {
  // Names depend on layer counts only; build a throwaway model to list them.
  const auto reference = init_params<float>(config, 0);
  std::vector<std::string> names;
  for (const auto& name : reference.names())
    if (role == Role::kTeacher || is_encoder_param(name)) names.push_back(name);
  return names;
}

Checkpoint load_checkpoint_as(const std::filesystem::path& path, Role role) {
  Checkpoint ck = load_checkpoint(path);
  std::string missing;
  ModelParams<float> selected(role);
  for (const auto& name : expected_parameter_names(ck.config, role)) {
    if (!ck.params.contains(name)) {
      missing += (missing.empty() ? "" : ", ") + name;
      continue;
    }
    selected.add(name, ck.params.at(name));
  }
  if (!missing.empty())
    throw CheckpointError(CheckpointError::Kind::kMissingNames, "missing parameters: " + missing);
  if (role == Role::kTeacher && ck.params.frozen()) selected.set_frozen(true);
  ck.params = std::move(selected);
  return ck;
}

}  // namespace gcoco
