#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cetx/adam.hpp"
#include "cetx/data.hpp"
#include "cetx/metrics.hpp"
#include "cetx/model.hpp"
#include "cetx/objectives.hpp"
#include "cetx/perturb.hpp"

namespace cetx {

struct TrainConfig {
  double learning_rate = 3e-4;
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  LossConfig loss;
  PerturbationConfig perturb;
  std::size_t eval_every = 0;  // 0: validate after the last epoch only

  void validate(std::size_t window_length) const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double kappa = 0.0;
  double total_loss = 0.0;
  double l2 = 0.0;
  std::vector<double> task_loss;         // per exit, mean over batches
  std::vector<double> consistency_loss;  // per exit, mean over batches
  std::vector<double> retained_fraction;
  std::vector<double> train_accuracy;  // per exit, clean training-mode predictions
  std::optional<ClassificationMetrics> validation;  // last exit, inference mode
};

struct TrainReport {
  std::vector<EpochRecord> epochs;

  /// Comma-separated table with a header row, one row per epoch.
  std::string to_csv() const;
};

struct StepResult {
  ExitLossBreakdown breakdown;
  std::vector<std::size_t> correct;  // per exit, clean predictions matching labels
};

/// One optimizer step at a time over a network it does not own.
class Trainer {
 public:
  Trainer(MultiExitNet& net, TrainConfig config);

  /// Forward passes, loss, backward and Adam update for one mini-batch.
  /// `epoch` is 0-based and keys the perturbation and dropout streams.
  StepResult step(const WindowedDataset& data, std::span<const std::size_t> batch, std::size_t epoch,
                  double kappa);

  /// Loss and gradients without the update; gradients stay in the parameters.
  StepResult compute_gradients(const WindowedDataset& data, std::span<const std::size_t> batch,
                               std::size_t epoch, double kappa);

  /// Shuffled pass over `data`; returns the epoch record (without validation).
  EpochRecord run_epoch(const WindowedDataset& data, std::size_t epoch);

  const AdamState& optimizer() const { return adam_; }
  const TrainConfig& config() const { return config_; }

 private:
  MultiExitNet& net_;
  TrainConfig config_;
  AdamState adam_;
};

/// Shuffle order of epoch `epoch` (0-based) for n examples.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch);

/// Called after each epoch with the record just appended.
using EpochCallback = std::function<void(const EpochRecord&, const MultiExitNet&)>;

struct TrainResult {
  MultiExitNet net;
  TrainReport report;
};

/// Builds a network from `model_config` and trains it on `train_set`.
/// Validation metrics are computed every `eval_every` epochs and after the
/// last epoch when `validation` is given.
TrainResult train(const WindowedDataset& train_set, const ModelConfig& model_config, const TrainConfig& config,
                  const WindowedDataset* validation = nullptr, const EpochCallback& on_epoch = {});

/// Inference-mode metrics of one exit (1-based) over a dataset.
ClassificationMetrics evaluate_exit(const MultiExitNet& net, const WindowedDataset& data, std::size_t exit,
                                    std::size_t threads = 1);

}  // namespace cetx
