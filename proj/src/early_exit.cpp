#include "cetx/early_exit.hpp"

#include <algorithm>
#include <cmath>

#include "cetx/parallel.hpp"

namespace cetx {

void ExitPolicy::validate() const {
  if (!(phi >= 0.0 && phi <= 1.0)) throw ConfigError("eval.phi: threshold must be in [0, 1]");
}

std::vector<double> exit_probabilities(const Tensor<float>& logits) {
  const auto d = logits.cast<double>();
  const auto p = softmax_values(d);
  return p.vec();
}

std::size_t argmax(std::span<const double> probs) {
  return static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

double normalized_entropy(std::span<const double> probs) {
  if (probs.size() < 2) throw Error("normalized_entropy: at least 2 classes are required");
  double h = 0.0;
  for (double p : probs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return std::clamp(h / std::log(static_cast<double>(probs.size())), 0.0, 1.0);
}

double normalized_entropy(const Tensor<float>& probs) {
  const auto d = probs.cast<double>();
  return normalized_entropy(d.data());
}

std::size_t choose_exit(std::span<const double> entropies, double phi) {
  if (entropies.empty()) throw Error("choose_exit: no exits");
  for (std::size_t e = 0; e < entropies.size(); ++e) {
    if (entropies[e] < phi) return e + 1;
  }
  return entropies.size();
}

InferenceTrace infer_early_exit(const MultiExitNet& net, const Tensor<float>& x, const ExitPolicy& policy,
                                ForwardCounter* counter) {
  policy.validate();
  Tape<float> tape;
  tape.set_recording(false);
  InferenceTrace trace;
  auto h = net.stem(tape, x);
  const std::size_t exits = net.num_exits();
  for (std::size_t e = 1; e <= exits; ++e) {
    h = net.block(tape, e, h, false, nullptr, counter);
    const auto probs = exit_probabilities(net.head(tape, e, h, counter).value());
    const double eps = normalized_entropy(probs);
    trace.entropies.push_back(eps);
    if (eps < policy.phi || e == exits) {
      trace.chosen_exit = e;
      trace.predicted_label = argmax(probs);
      trace.confidence = probs[trace.predicted_label];
      break;
    }
  }
  return trace;
}

ExitStats exit_stats(std::span<const InferenceTrace> traces, std::span<const std::uint16_t> labels,
                     std::size_t num_exits, std::size_t num_classes) {
  if (traces.empty()) throw Error("exit statistics: no examples");
  if (labels.size() != traces.size()) throw Error("exit statistics: labels and traces differ in length");
  ExitStats st;
  st.counts.assign(num_exits, 0);
  st.class_counts.assign(num_classes, std::vector<std::size_t>(num_exits, 0));
  st.class_confidence.assign(num_classes, std::vector<double>(num_exits, 0.0));
  double exit_sum = 0.0;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    const auto& t = traces[i];
    if (t.chosen_exit < 1 || t.chosen_exit > num_exits) throw Error("exit statistics: chosen exit out of range");
    if (labels[i] >= num_classes) throw Error("exit statistics: label out of range");
    const std::size_t e = t.chosen_exit - 1;
    ++st.counts[e];
    ++st.class_counts[labels[i]][e];
    st.class_confidence[labels[i]][e] += t.confidence;
    exit_sum += static_cast<double>(t.chosen_exit);
  }
  const double n = static_cast<double>(traces.size());
  for (std::size_t e = 0; e < num_exits; ++e) st.fractions.push_back(static_cast<double>(st.counts[e]) / n);
  st.average_exit = exit_sum / n;
  for (std::size_t k = 0; k < num_classes; ++k) {
    for (std::size_t e = 0; e < num_exits; ++e) {
      if (st.class_counts[k][e] > 0) st.class_confidence[k][e] /= static_cast<double>(st.class_counts[k][e]);
    }
  }
  return st;
}

namespace {

ClassificationMetrics metrics_of(const WindowedDataset& data, const std::vector<std::size_t>& predictions) {
  std::vector<std::size_t> truth(data.labels.begin(), data.labels.end());
  return compute_metrics(ConfusionMatrix::from_predictions(data.meta.num_classes, truth, predictions));
}

}  // namespace

BatchResult batch_stats(const MultiExitNet& net, const WindowedDataset& data, const ExitPolicy& policy,
                        std::size_t threads) {
  policy.validate();
  BatchResult out;
  out.traces.resize(data.size());
  parallel_for(data.size(), threads,
               [&](std::size_t i) { out.traces[i] = infer_early_exit(net, data.windows[i], policy); });
  for (const auto& t : out.traces) out.predictions.push_back(t.predicted_label);
  out.stats = exit_stats(out.traces, data.labels, net.num_exits(), net.num_classes());
  return out;
}

ExitProbabilities all_exit_probabilities(const MultiExitNet& net, const WindowedDataset& data,
                                         std::size_t threads) {
  ExitProbabilities out;
  out.probs.resize(data.size());
  out.entropies.resize(data.size());
  parallel_for(data.size(), threads, [&](std::size_t i) {
    for (const auto& logits : net.predict_all(data.windows[i])) {
      out.probs[i].push_back(exit_probabilities(logits));
      out.entropies[i].push_back(normalized_entropy(out.probs[i].back()));
    }
  });
  return out;
}

InferenceTrace trace_from_probabilities(const std::vector<std::vector<double>>& probs,
                                        std::span<const double> entropies, double phi) {
  InferenceTrace t;
  t.chosen_exit = choose_exit(entropies, phi);
  t.entropies.assign(entropies.begin(), entropies.begin() + static_cast<std::ptrdiff_t>(t.chosen_exit));
  const auto& p = probs.at(t.chosen_exit - 1);
  t.predicted_label = argmax(p);
  t.confidence = p[t.predicted_label];
  return t;
}

namespace {

std::vector<double> checked_grid(std::vector<double> phi_grid) {
  if (phi_grid.empty()) throw ConfigError("eval.phi: the threshold grid is empty");
  for (double phi : phi_grid) ExitPolicy{phi}.validate();
  std::sort(phi_grid.begin(), phi_grid.end());
  phi_grid.erase(std::unique(phi_grid.begin(), phi_grid.end()), phi_grid.end());
  return phi_grid;
}

std::vector<SweepRow> sweep_rows(const ExitProbabilities& all, const WindowedDataset& data,
                                 const std::vector<double>& phi_grid, std::size_t num_exits) {
  std::vector<SweepRow> rows;
  for (double phi : phi_grid) {
    std::vector<InferenceTrace> traces;
    std::vector<std::size_t> predictions;
    for (std::size_t i = 0; i < data.size(); ++i) {
      traces.push_back(trace_from_probabilities(all.probs[i], all.entropies[i], phi));
      predictions.push_back(traces.back().predicted_label);
    }
    SweepRow row;
    row.phi = phi;
    row.metrics = metrics_of(data, predictions);
    row.stats = exit_stats(traces, data.labels, num_exits, data.meta.num_classes);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

std::vector<SweepRow> sweep_thresholds(const MultiExitNet& net, const WindowedDataset& data,
                                       std::vector<double> phi_grid, std::size_t threads) {
  const auto grid = checked_grid(std::move(phi_grid));
  return sweep_rows(all_exit_probabilities(net, data, threads), data, grid, net.num_exits());
}

std::vector<double> default_phi_grid() {
  std::vector<double> g;
  for (int i = 0; i <= 10; ++i) g.push_back(i / 10.0);
  return g;
}

EvaluationBundle evaluate(const MultiExitNet& net, const WindowedDataset& data, const std::vector<double>& phi_grid,
                          std::size_t threads) {
  const auto grid = checked_grid(phi_grid);
  EvaluationBundle out;
  const auto all = all_exit_probabilities(net, data, threads);
  for (std::size_t e = 1; e <= net.num_exits(); ++e) {
    std::vector<std::size_t> predictions;
    for (std::size_t i = 0; i < data.size(); ++i) predictions.push_back(argmax(all.probs[i][e - 1]));
    out.per_exit.push_back({e, metrics_of(data, predictions), net.macs_until_exit(e)});
  }
  out.sweep = sweep_rows(all, data, grid, net.num_exits());
  return out;
}

}  // namespace cetx
