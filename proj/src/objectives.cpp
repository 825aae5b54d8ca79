#include "cetx/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "cetx/ops.hpp"

namespace cetx {

std::string to_string(LossMode mode) {
  switch (mode) {
    case LossMode::cet: return "cet";
    case LossMode::exit_wise: return "exit_wise";
    case LossMode::augment_only: return "augment_only";
    case LossMode::distill: return "distill";
  }
  return "unknown";
}

std::string to_string(LabelSource source) {
  switch (source) {
    case LabelSource::pseudo: return "pseudo";
    case LabelSource::teacher: return "teacher";
    case LabelSource::original: return "original";
  }
  return "unknown";
}

LossMode parse_loss_mode(const std::string& name) {
  if (name == "cet") return LossMode::cet;
  if (name == "exit_wise") return LossMode::exit_wise;
  if (name == "augment_only") return LossMode::augment_only;
  if (name == "distill") return LossMode::distill;
  throw ConfigError("loss.mode: unknown mode '" + name + "' (cet, exit_wise, augment_only, distill)");
}

LabelSource parse_label_source(const std::string& name) {
  if (name == "pseudo") return LabelSource::pseudo;
  if (name == "teacher") return LabelSource::teacher;
  if (name == "original") return LabelSource::original;
  throw ConfigError("loss.label_source: unknown source '" + name + "' (pseudo, teacher, original)");
}

void LossConfig::validate() const {
  if (!(lambda >= 0.0)) throw ConfigError("loss.lambda: must be non-negative");
  if (!(kappa_min > 0.0 && kappa_min <= kappa_max)) {
    throw ConfigError("loss.kappa_min: must satisfy 0 < kappa_min <= kappa_max");
  }
  if (!(kappa_max < 1.0)) throw ConfigError("loss.kappa_max: must be < 1");
  if (!(tau >= 1.0)) throw ConfigError("loss.tau: must be >= 1");
}

double kappa_schedule(std::size_t step, std::size_t total_steps, double kappa_min, double kappa_max) {
  if (total_steps == 0) return kappa_max;
  const double t = static_cast<double>(std::min(step, total_steps)) / static_cast<double>(total_steps);
  const double c = std::cos(std::numbers::pi * t);
  // Convex combination: exact endpoints since cos(0) == 1 and cos(pi) == -1.
  const double w_max = (1.0 - c) / 2.0;
  const double w_min = (1.0 + c) / 2.0;
  return w_min * kappa_min + w_max * kappa_max;
}

namespace {

Var<float> zero_scalar(Tape<float>& tape) { return tape.constant(Tensor<float>::scalar(0.0f)); }

/// Sum of scalars; a zero constant when the list is empty.
Var<float> sum_all(Tape<float>& tape, const std::vector<Var<float>>& terms) {
  if (terms.empty()) return zero_scalar(tape);
  Var<float> acc = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) acc = add(acc, terms[i]);
  return acc;
}

std::size_t num_exits(const std::vector<ExitLogits>& batch) {
  if (batch.empty()) throw Error("loss: empty batch");
  const std::size_t e = batch.front().size();
  for (const auto& ex : batch) {
    if (ex.size() != e) throw ShapeError("loss: examples disagree on the number of exits");
  }
  return e;
}

std::size_t argmax(const Tensor<float>& p) {
  return static_cast<std::size_t>(std::max_element(p.data().begin(), p.data().end()) - p.data().begin());
}

std::vector<double> values(const std::vector<Var<float>>& vars) {
  std::vector<double> out;
  for (auto v : vars) out.push_back(v.value().item());
  return out;
}

}  // namespace

std::vector<Var<float>> task_loss(Tape<float>& tape, const std::vector<ExitLogits>& clean,
                                  std::span<const std::size_t> labels) {
  const std::size_t exits = num_exits(clean);
  if (labels.size() != clean.size()) throw Error("task_loss: labels and batch differ in length");
  const float inv_m = 1.0f / static_cast<float>(clean.size());
  std::vector<Var<float>> out;
  for (std::size_t e = 0; e < exits; ++e) {
    std::vector<Var<float>> terms;
    for (std::size_t m = 0; m < clean.size(); ++m) terms.push_back(cross_entropy_with_label(clean[m][e], labels[m]));
    out.push_back(scale(sum_all(tape, terms), inv_m));
  }
  return out;
}

ConsistencyTerms consistency_loss(Tape<float>& tape, const std::vector<ExitLogits>& clean,
                                  const std::vector<ExitLogits>& perturbed, double kappa, LabelSource source,
                                  std::span<const std::size_t> labels) {
  const std::size_t exits = num_exits(clean);
  if (perturbed.size() != clean.size() || num_exits(perturbed) != exits) {
    throw ShapeError("consistency_loss: clean and perturbed batches are not paired");
  }
  if (source == LabelSource::original && labels.size() != clean.size()) {
    throw Error("consistency_loss: original-label mode needs one label per example");
  }
  const std::size_t batch = clean.size();
  const float inv_m = 1.0f / static_cast<float>(batch);
  ConsistencyTerms out;
  for (std::size_t e = 0; e < exits; ++e) {
    const std::size_t src_exit = source == LabelSource::teacher ? exits - 1 : e;
    std::vector<Var<float>> terms;
    std::size_t retained = 0;
    for (std::size_t m = 0; m < batch; ++m) {
      std::size_t target = 0;
      bool gate = true;
      if (source == LabelSource::original) {
        target = labels[m];
      } else {
        // Values only: the clean branch never receives gradient from here.
        const auto p = softmax_values(clean[m][src_exit].value());
        target = argmax(p);
        gate = static_cast<double>(p[target]) >= kappa;
      }
      if (!gate) continue;
      ++retained;
      terms.push_back(cross_entropy_with_label(perturbed[m][e], target));
    }
    out.per_exit.push_back(terms.empty() ? zero_scalar(tape) : scale(sum_all(tape, terms), inv_m));
    out.retained_fraction.push_back(static_cast<double>(retained) / static_cast<double>(batch));
  }
  return out;
}

Var<float> distillation_loss(Var<float> student, Var<float> teacher, double tau) {
  if (!(tau >= 1.0)) throw Error("distillation_loss: tau must be >= 1");
  Tensor<float> t = teacher.value();
  for (auto& v : t.data()) v = static_cast<float>(v / tau);
  const auto target = softmax_values(t);
  auto ce = cross_entropy_with_logits(scale(student, static_cast<float>(1.0 / tau)), target);
  return scale(ce, static_cast<float>(tau * tau));
}

TotalLoss total_loss(Tape<float>& tape, const LossInputs& in, const LossConfig& cfg) {
  if (in.clean == nullptr) throw Error("total_loss: clean outputs are required");
  const auto& clean = *in.clean;
  const std::size_t exits = num_exits(clean);
  const std::size_t batch = clean.size();
  const auto needs_perturbed = cfg.mode == LossMode::cet || cfg.mode == LossMode::augment_only;
  if (needs_perturbed && in.perturbed == nullptr) {
    throw Error("total_loss: mode " + to_string(cfg.mode) + " requires perturbed outputs");
  }

  std::vector<Var<float>> task, extra;
  std::vector<double> retained(exits, 0.0);
  switch (cfg.mode) {
    case LossMode::exit_wise:
      task = task_loss(tape, clean, in.labels);
      break;
    case LossMode::cet: {
      task = task_loss(tape, clean, in.labels);
      auto cons = consistency_loss(tape, clean, *in.perturbed, in.kappa, cfg.label_source, in.labels);
      extra = std::move(cons.per_exit);
      retained = std::move(cons.retained_fraction);
      break;
    }
    case LossMode::augment_only: {
      // One batch of 2M examples: the clean ones and their perturbed copies.
      std::vector<ExitLogits> both = clean;
      both.insert(both.end(), in.perturbed->begin(), in.perturbed->end());
      std::vector<std::size_t> labels(in.labels.begin(), in.labels.end());
      labels.insert(labels.end(), in.labels.begin(), in.labels.end());
      task = task_loss(tape, both, labels);
      break;
    }
    case LossMode::distill: {
      task = task_loss(tape, clean, in.labels);
      const float inv_m = 1.0f / static_cast<float>(batch);
      for (std::size_t e = 0; e + 1 < exits; ++e) {
        std::vector<Var<float>> terms;
        for (std::size_t m = 0; m < batch; ++m) {
          terms.push_back(distillation_loss(clean[m][e], tape.stop_gradient(clean[m][exits - 1]), cfg.tau));
        }
        extra.push_back(scale(sum_all(tape, terms), inv_m));
      }
      extra.push_back(zero_scalar(tape));  // the teacher exit has no distillation term
      std::fill(retained.begin(), retained.end(), 1.0);
      retained.back() = 0.0;
      break;
    }
  }

  std::vector<Var<float>> per_exit;
  for (std::size_t e = 0; e < exits; ++e) {
    per_exit.push_back(extra.empty() ? task[e] : add(task[e], scale(extra[e], static_cast<float>(cfg.lambda))));
  }
  auto total = scale(sum_all(tape, per_exit), 1.0f / static_cast<float>(exits));
  const bool has_l2 = in.l2.tape != nullptr;
  if (has_l2) total = add(total, in.l2);

  TotalLoss out;
  out.total = total;
  auto& bd = out.breakdown;
  bd.per_exit_task = values(task);
  bd.per_exit_consistency = extra.empty() ? std::vector<double>(exits, 0.0) : values(extra);
  bd.retained_fraction = retained;
  bd.l2 = has_l2 ? in.l2.value().item() : 0.0;
  bd.total = aggregate_total(bd.per_exit_task, bd.per_exit_consistency, cfg.lambda, bd.l2);
  return out;
}

double aggregate_total(std::span<const double> task, std::span<const double> consistency, double lambda, double l2) {
  if (task.empty() || task.size() != consistency.size()) throw Error("aggregate_total: per-exit lists differ");
  double s = 0;
  for (std::size_t e = 0; e < task.size(); ++e) s += task[e] + lambda * consistency[e];
  return s / static_cast<double>(task.size()) + l2;
}

}  // namespace cetx
