#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cetx/autograd.hpp"

namespace cetx {

enum class LossMode { cet, exit_wise, augment_only, distill };
enum class LabelSource { pseudo, teacher, original };

std::string to_string(LossMode mode);
std::string to_string(LabelSource source);
LossMode parse_loss_mode(const std::string& name);
LabelSource parse_label_source(const std::string& name);

struct LossConfig {
  double lambda = 0.5;
  double kappa_min = 0.5;
  double kappa_max = 0.9;
  LabelSource label_source = LabelSource::pseudo;
  double tau = 2.0;
  LossMode mode = LossMode::cet;

  void validate() const;
};

/// Cosine ramp from kappa_min at step 0 to kappa_max at total_steps.
/// Returns kappa_max when total_steps == 0.
double kappa_schedule(std::size_t step, std::size_t total_steps, double kappa_min, double kappa_max);

/// Logits of every exit for one example.
using ExitLogits = std::vector<Var<float>>;

/// Per exit: mean cross-entropy over the batch against the labels.
std::vector<Var<float>> task_loss(Tape<float>& tape, const std::vector<ExitLogits>& clean,
                                  std::span<const std::size_t> labels);

struct ConsistencyTerms {
  std::vector<Var<float>> per_exit;
  std::vector<double> retained_fraction;  // share of the batch passing the gate, per exit
};

/// Confidence-gated consistency loss. Targets and gates come from the clean
/// outputs (treated as constants): the same exit (pseudo), the last exit
/// (teacher), or the true labels with the gate always open (original).
/// Per exit: (1/M) * sum over gated examples of CE(target, perturbed logits).
ConsistencyTerms consistency_loss(Tape<float>& tape, const std::vector<ExitLogits>& clean,
                                  const std::vector<ExitLogits>& perturbed, double kappa, LabelSource source,
                                  std::span<const std::size_t> labels);

/// -tau^2 * sum_k softmax(teacher/tau)_k * log softmax(student/tau)_k.
/// The teacher is cut from the graph.
Var<float> distillation_loss(Var<float> student, Var<float> teacher, double tau);

struct ExitLossBreakdown {
  std::vector<double> per_exit_task;
  std::vector<double> per_exit_consistency;  // distillation term in distill mode
  double l2 = 0.0;
  double total = 0.0;
  std::vector<double> retained_fraction;
};

struct LossInputs {
  const std::vector<ExitLogits>* clean = nullptr;
  const std::vector<ExitLogits>* perturbed = nullptr;  // required by cet and augment_only
  std::span<const std::size_t> labels;
  double kappa = 0.5;
  Var<float> l2;  // scalar penalty already on the tape
};

struct TotalLoss {
  Var<float> total;
  ExitLossBreakdown breakdown;
};

/// (1/E) * sum over exits of the mode's per-exit objective, plus l2.
/// Per exit: task + lambda * consistency (cet), task (exit_wise),
/// task over the union of clean and perturbed examples (augment_only), or
/// task + lambda * distillation from the last exit (distill).
TotalLoss total_loss(Tape<float>& tape, const LossInputs& in, const LossConfig& cfg);

/// mean over exits of (task + lambda * consistency) + l2, in double.
double aggregate_total(std::span<const double> task, std::span<const double> consistency, double lambda, double l2);

}  // namespace cetx
