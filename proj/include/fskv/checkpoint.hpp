#pragma once

// Binary checkpoint container, all integers little-endian:
//   "FSKVCKPT" | u32 version | u64 metadata length | metadata (UTF-8 JSON)
//   | u64 array count | per array: u64 name length, name, u64 rank,
//     rank x u64 dims, row-major f64 payload.

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "fskv/fewshot.hpp"

namespace fskv {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  // {"model": model config, "seed": master seed, ...extra}
  nlohmann::json metadata;
  ParameterSet arrays;
};

std::string serialize_checkpoint(const Checkpoint& checkpoint);
// Throws Error(kCheckpointVersion) or Error(kCheckpointCorrupt).
Checkpoint deserialize_checkpoint(const std::string& bytes);

Checkpoint make_checkpoint(const Model& model, const nlohmann::json& extra = {});
// Rebuilds the model and checks every array name and shape against it.
Model model_from_checkpoint(const Checkpoint& checkpoint);

void save_checkpoint(const Model& model, const std::string& path,
                     const nlohmann::json& extra = {});
Checkpoint load_checkpoint(const std::string& path);
Model load_model(const std::string& path);

}  // namespace fskv
