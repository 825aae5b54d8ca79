#pragma once

#include <filesystem>
#include <iosfwd>
#include <vector>

#include "cetx/checkpoint.hpp"
#include "cetx/config.hpp"
#include "cetx/early_exit.hpp"
#include "cetx/trainer.hpp"

namespace cetx {

/// Loads or generates the dataset described by `cfg` (not normalized).
WindowedDataset load_source(const DataConfig& cfg);

/// Windows file, or csv when the extension is ".csv" (shape taken from `meta`).
WindowedDataset load_dataset_file(const std::filesystem::path& path, const DatasetMeta& meta);

struct PreparedData {
  WindowedDataset train;
  WindowedDataset validation;  // empty unless split.validation_fraction > 0
  WindowedDataset test;
  WindowedDataset raw_train;  // before standardization
  WindowedDataset raw_test;
  ChannelStats stats;  // fitted on `train`
};

/// Group split (and optional validation split of the training groups), then
/// per-channel standardization with statistics of the training part.
PreparedData prepare_data(const RunConfig& cfg);

/// Adds N(0, sigma) to every input; example i uses its own stream.
void add_test_noise(WindowedDataset& data, double sigma, std::uint64_t seed);

struct TrainOutcome {
  TrainResult result;
  PreparedData data;
};

/// Trains and writes config.txt, checkpoint.cetm, train_report.csv and the
/// raw train.cetd / test.cetd splits into `out_dir`. Progress goes to `log`.
TrainOutcome run_training(const RunConfig& cfg, const std::filesystem::path& out_dir, std::ostream* log = nullptr);

struct EvalOptions {
  std::vector<double> phi_grid;
  double noise_sigma = 0.0;
  std::uint64_t noise_seed = 0;
  std::size_t threads = 1;
  bool sweep_table = false;  // also write sweep.csv
};

/// Standardizes `raw` with the checkpoint's statistics, adds test noise,
/// evaluates, and writes eval_config.txt plus the report tables.
EvaluationBundle run_evaluation(const LoadedCheckpoint& ckpt, const WindowedDataset& raw, const EvalOptions& opts,
                                const std::filesystem::path& out_dir);

/// {0, 1/(n-1), ..., 1}.
std::vector<double> uniform_phi_grid(std::size_t n);

}  // namespace cetx
