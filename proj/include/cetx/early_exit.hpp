#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cetx/data.hpp"
#include "cetx/metrics.hpp"
#include "cetx/model.hpp"

namespace cetx {

/// Exit when the normalized entropy of an exit's softmax is below phi.
struct ExitPolicy {
  double phi = 0.0;

  void validate() const;
};

struct InferenceTrace {
  std::vector<double> entropies;  // exits 1..chosen_exit
  std::size_t chosen_exit = 0;    // 1-based
  std::size_t predicted_label = 0;
  double confidence = 0.0;  // max softmax probability at the chosen exit
};

/// Softmax of one exit's logits, computed in double.
std::vector<double> exit_probabilities(const Tensor<float>& logits);
/// Index of the largest probability (lowest index on ties).
std::size_t argmax(std::span<const double> probs);

/// H(p) / ln K with 0 * ln 0 = 0, clamped to [0, 1]. Requires K >= 2.
double normalized_entropy(std::span<const double> probs);
double normalized_entropy(const Tensor<float>& probs);

/// First exit (1-based) whose entropy is strictly below phi, else the last.
std::size_t choose_exit(std::span<const double> entropies, double phi);

/// Evaluates exits 1..E in order on one shared trunk and stops at the first
/// confident one.
InferenceTrace infer_early_exit(const MultiExitNet& net, const Tensor<float>& x, const ExitPolicy& policy,
                                ForwardCounter* counter = nullptr);

struct ExitStats {
  std::vector<double> fractions;  // per exit
  double average_exit = 0.0;
  std::vector<std::size_t> counts;                    // per exit
  std::vector<std::vector<std::size_t>> class_counts;  // [class][exit]
  std::vector<std::vector<double>> class_confidence;   // [class][exit] mean, 0 when empty
};

struct BatchResult {
  ExitStats stats;
  std::vector<InferenceTrace> traces;
  std::vector<std::size_t> predictions;
};

/// Builds statistics from traces; `labels` gives each example's class.
ExitStats exit_stats(std::span<const InferenceTrace> traces, std::span<const std::uint16_t> labels,
                     std::size_t num_exits, std::size_t num_classes);

BatchResult batch_stats(const MultiExitNet& net, const WindowedDataset& data, const ExitPolicy& policy,
                        std::size_t threads = 1);

struct SweepRow {
  double phi = 0.0;
  ClassificationMetrics metrics;
  ExitStats stats;
};

/// Softmax outputs of every exit for every example (inference mode).
struct ExitProbabilities {
  std::vector<std::vector<std::vector<double>>> probs;  // [example][exit][class]
  std::vector<std::vector<double>> entropies;           // [example][exit]
};

ExitProbabilities all_exit_probabilities(const MultiExitNet& net, const WindowedDataset& data,
                                         std::size_t threads = 1);

/// Trace that infer_early_exit would produce, from precomputed outputs.
InferenceTrace trace_from_probabilities(const std::vector<std::vector<double>>& probs,
                                        std::span<const double> entropies, double phi);

/// One row per distinct phi, ascending. Each network output is computed once
/// and reused for every threshold.
std::vector<SweepRow> sweep_thresholds(const MultiExitNet& net, const WindowedDataset& data,
                                       std::vector<double> phi_grid, std::size_t threads = 1);

/// {0, 0.1, ..., 1.0}.
std::vector<double> default_phi_grid();

struct ExitMetrics {
  std::size_t exit = 0;
  ClassificationMetrics metrics;
  std::size_t macs = 0;
};

struct EvaluationBundle {
  std::vector<ExitMetrics> per_exit;
  std::vector<SweepRow> sweep;
};

/// Metrics of every exit on all examples, plus the early-exit sweep.
EvaluationBundle evaluate(const MultiExitNet& net, const WindowedDataset& data, const std::vector<double>& phi_grid,
                          std::size_t threads = 1);

}  // namespace cetx
