#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cetx/tensor.hpp"

namespace cetx {

struct DatasetMeta {
  std::size_t num_classes = 0;
  std::vector<std::string> class_names;  // empty or one per class
  std::size_t channels = 0;
  std::size_t window_length = 0;
  std::optional<double> sample_rate;
};

/// N fixed-size windows of shape [channels, window_length] with a class
/// label and a group (user) id each.
struct WindowedDataset {
  DatasetMeta meta;
  std::vector<Tensor<float>> windows;
  std::vector<std::uint16_t> labels;
  std::vector<std::uint16_t> groups;

  std::size_t size() const { return windows.size(); }
  /// Throws on inconsistent shapes, labels out of range, or N == 0.
  void validate() const;
  WindowedDataset subset(std::span<const std::size_t> indices) const;
  /// Sorted distinct group ids.
  std::vector<std::uint16_t> distinct_groups() const;
};

struct SplitSpec {
  double train_fraction = 0.7;
  std::uint64_t seed = 0;
};

/// Partitions groups (not examples) into train/test. The number of train
/// groups is round(fraction * G), clamped to [1, G - 1].
std::pair<WindowedDataset, WindowedDataset> group_split(const WindowedDataset& data, const SplitSpec& spec);

struct SynthSpec {
  std::size_t num_classes = 6;
  std::size_t channels = 3;
  std::size_t length = 400;
  std::size_t per_class = 100;
  std::size_t groups = 10;
  std::uint64_t seed = 0;
  double noise_std = 0.1;
};

/// Class-specific sinusoid templates with per-group frequency, amplitude,
/// phase and offset variation plus Gaussian noise. Classes are balanced and
/// examples are spread round-robin over groups.
WindowedDataset generate_synthetic(const SynthSpec& spec);

/// Per-channel statistics used for input standardization.
struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> stddev;
};

/// Mean and standard deviation over all windows and time steps, per
/// channel. A constant channel gets stddev 1.
ChannelStats compute_channel_stats(const WindowedDataset& data);
void apply_channel_stats(WindowedDataset& data, const ChannelStats& stats);

/// Fits statistics on `train` and applies them to both splits.
ChannelStats channel_normalize(WindowedDataset& train, WindowedDataset& test);

/// Binary windows file (magic "CETD").
void save_windows_file(const WindowedDataset& data, const std::filesystem::path& path);
WindowedDataset load_windows_file(const std::filesystem::path& path);

/// One row per window: group id, label, then channels*length values in
/// channel-major order. Blank lines and lines starting with '#' are skipped.
/// `meta` supplies num_classes, channels and window_length.
WindowedDataset load_csv(const std::filesystem::path& path, const DatasetMeta& meta);

}  // namespace cetx
