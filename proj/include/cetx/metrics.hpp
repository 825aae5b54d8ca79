#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace cetx {

/// K x K counts; rows are true classes, columns predictions.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t num_classes) : k_(num_classes), counts_(num_classes * num_classes, 0) {}

  static ConfusionMatrix from_predictions(std::size_t num_classes, std::span<const std::size_t> truth,
                                          std::span<const std::size_t> predicted);
  static ConfusionMatrix from_rows(const std::vector<std::vector<std::uint64_t>>& rows);

  void add(std::size_t truth, std::size_t predicted, std::uint64_t n = 1);
  std::uint64_t operator()(std::size_t truth, std::size_t predicted) const { return counts_[truth * k_ + predicted]; }
  std::size_t num_classes() const { return k_; }
  std::uint64_t total() const;

 private:
  std::size_t k_;
  std::vector<std::uint64_t> counts_;
};

/// trace / total.
double accuracy(const ConfusionMatrix& cm);
/// Unweighted mean of per-class F1 (0 for a class with P + R = 0).
double macro_f1(const ConfusionMatrix& cm);
/// (p_o - p_e) / (1 - p_e); 0 when p_e == 1.
double cohens_kappa(const ConfusionMatrix& cm);

struct ClassificationMetrics {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double kappa = 0.0;

  friend bool operator==(const ClassificationMetrics&, const ClassificationMetrics&) = default;
};

ClassificationMetrics compute_metrics(const ConfusionMatrix& cm);

}  // namespace cetx
