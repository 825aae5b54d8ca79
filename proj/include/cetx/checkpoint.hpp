#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cetx/data.hpp"
#include "cetx/model.hpp"

namespace cetx {

/// Everything besides the weights that evaluation needs.
struct CheckpointInfo {
  std::vector<std::string> class_names;
  std::optional<ChannelStats> channel_stats;  // input standardization fitted on the train split
};

/// Binary checkpoint (magic "CETM"): model config, info, then every
/// parameter by name and shape as little-endian float32, CRC-32 trailer.
void save_checkpoint(const MultiExitNet& net, const CheckpointInfo& info, const std::filesystem::path& path);

struct LoadedCheckpoint {
  MultiExitNet net;
  CheckpointInfo info;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

/// Loads weights into an existing network; names and shapes must match.
CheckpointInfo load_checkpoint_into(MultiExitNet& net, const std::filesystem::path& path);

}  // namespace cetx
