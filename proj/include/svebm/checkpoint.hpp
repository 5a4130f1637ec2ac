#pragma once

// Single-file text checkpoint. Reals are written as hexadecimal floating
// point so every array round-trips bit-exactly.

#include <filesystem>
#include <string>

#include "svebm/run_config.hpp"
#include "svebm/trainer.hpp"

namespace svebm {

inline constexpr const char* kCheckpointMagic = "svebm-checkpoint";
inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  RunConfig config;
  ModelState state;
};

void save_checkpoint(const std::filesystem::path& path, const ModelState& state, const RunConfig& config);
/// Echoes the model and training settings plus `extra` entries.
void save_checkpoint(const std::filesystem::path& path, const ModelState& state, const TrainConfig& cfg,
                     const ConfigExtras& extra = {});

Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Short content hash of a checkpoint file, used to tag reports.
std::string checkpoint_id(const std::filesystem::path& path);

}  // namespace svebm
