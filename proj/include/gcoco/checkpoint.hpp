#pragma once

// Checkpoint layout:
//   "GCOCO1\0"                      7 magic bytes
//   u64 little-endian               header byte length
//   UTF-8 JSON header               {version, config, entries:[{name, dtype, shape, offset, length}]}
//   raw little-endian f32 data      entries at their byte offsets

#include <filesystem>
#include <optional>
#include <string>

#include "gcoco/gist.hpp"
#include "gcoco/model.hpp"

namespace gcoco {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig config;
  ModelParams<float> params;
  std::optional<GistPools<float>> pools;
};

void save_checkpoint(const ModelParams<float>& params, const GistPools<float>* pools, const ModelConfig& config,
                     const std::filesystem::path& path);

Checkpoint load_checkpoint(const std::filesystem::path& path);

// Loads and keeps exactly the parameters the given role needs. Extra
// tensors are ignored; missing ones raise CheckpointError listing them.
Checkpoint load_checkpoint_as(const std::filesystem::path& path, Role role);

std::vector<std::string> expected_parameter_names(const ModelConfig& config, Role role);

}  // namespace gcoco
