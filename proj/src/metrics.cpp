#include "cetx/metrics.hpp"

#include "cetx/errors.hpp"

namespace cetx {

ConfusionMatrix ConfusionMatrix::from_predictions(std::size_t num_classes, std::span<const std::size_t> truth,
                                                  std::span<const std::size_t> predicted) {
  if (truth.size() != predicted.size()) throw Error("confusion matrix: truth and predictions differ in length");
  ConfusionMatrix cm(num_classes);
  for (std::size_t i = 0; i < truth.size(); ++i) cm.add(truth[i], predicted[i]);
  return cm;
}

ConfusionMatrix ConfusionMatrix::from_rows(const std::vector<std::vector<std::uint64_t>>& rows) {
  ConfusionMatrix cm(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != rows.size()) throw ShapeError("confusion matrix must be square");
    for (std::size_t c = 0; c < rows.size(); ++c) cm.add(r, c, rows[r][c]);
  }
  return cm;
}

void ConfusionMatrix::add(std::size_t truth, std::size_t predicted, std::uint64_t n) {
  if (truth >= k_ || predicted >= k_) throw Error("confusion matrix: class index out of range");
  counts_[truth * k_ + predicted] += n;
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t t = 0;
  for (auto c : counts_) t += c;
  return t;
}

namespace {

void require_nonempty(const ConfusionMatrix& cm) {
  if (cm.num_classes() == 0 || cm.total() == 0) throw Error("metrics: confusion matrix is empty");
}

}  // namespace

double accuracy(const ConfusionMatrix& cm) {
  require_nonempty(cm);
  std::uint64_t diag = 0;
  for (std::size_t i = 0; i < cm.num_classes(); ++i) diag += cm(i, i);
  return static_cast<double>(diag) / static_cast<double>(cm.total());
}

double macro_f1(const ConfusionMatrix& cm) {
  require_nonempty(cm);
  const std::size_t k = cm.num_classes();
  double total_f1 = 0;
  for (std::size_t c = 0; c < k; ++c) {
    std::uint64_t tp = cm(c, c), col = 0, row = 0;
    for (std::size_t j = 0; j < k; ++j) {
      col += cm(j, c);
      row += cm(c, j);
    }
    // F1 = 2TP / (2TP + FP + FN), identical to 2PR/(P+R) and 0 when P+R = 0.
    const std::uint64_t denom = col + row;
    if (tp > 0 && denom > 0) total_f1 += 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
  }
  return total_f1 / static_cast<double>(k);
}

double cohens_kappa(const ConfusionMatrix& cm) {
  require_nonempty(cm);
  const std::size_t k = cm.num_classes();
  // (p_o - p_e) / (1 - p_e) scaled by N^2: (N * diag - sum row*col) / (N^2 - sum row*col).
  // Counts stay integral until the single division.
  const long double n = static_cast<long double>(cm.total());
  long double diag = 0, chance = 0;
  for (std::size_t c = 0; c < k; ++c) {
    diag += static_cast<long double>(cm(c, c));
    long double row = 0, col = 0;
    for (std::size_t j = 0; j < k; ++j) {
      row += static_cast<long double>(cm(c, j));
      col += static_cast<long double>(cm(j, c));
    }
    chance += row * col;
  }
  const long double denom = n * n - chance;
  if (denom == 0) return 0.0;  // p_e == 1
  return static_cast<double>((n * diag - chance) / denom);
}

ClassificationMetrics compute_metrics(const ConfusionMatrix& cm) {
  return {accuracy(cm), macro_f1(cm), cohens_kappa(cm)};
}

}  // namespace cetx
