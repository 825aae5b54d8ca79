#include <cmath>
#include <limits>

#include "cetx/early_exit.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace cetx;
using namespace cetx::testing;

namespace {

// Independent entropy oracle: -sum p ln p / ln K in long double.
double entropy_oracle(const std::vector<double>& p) {
  long double h = 0;
  for (double v : p) {
    if (v > 0) h -= static_cast<long double>(v) * std::log(static_cast<long double>(v));
  }
  return static_cast<double>(h / std::log(static_cast<long double>(p.size())));
}

const MultiExitNet& trained_net() {
  static const MultiExitNet net = train(tiny_data(), tiny_model(), tiny_train(4)).net;
  return net;
}

WindowedDataset test_set() { return tiny_data(6, 77); }

}  // namespace

TEST_CASE("normalized entropy: extremes and an explicit distribution") {
  CHECK(normalized_entropy(std::vector<double>{0.25, 0.25, 0.25, 0.25}) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(normalized_entropy(std::vector<double>{0.0, 1.0, 0.0}) == 0.0);
  CHECK(normalized_entropy(std::vector<double>{0.5, 0.5}) == doctest::Approx(1.0).epsilon(1e-15));
  const std::vector<double> p{0.7, 0.2, 0.1};
  CHECK(normalized_entropy(p) == doctest::Approx(entropy_oracle(p)).epsilon(1e-14));
  CHECK(normalized_entropy(p) == doctest::Approx(0.7298466991).epsilon(1e-9));
  const double h = normalized_entropy(std::vector<double>{1.0 / 3, 1.0 / 3, 1.0 / 3});
  CHECK(h >= 0.0);
  CHECK(h <= 1.0);
  CHECK_THROWS(normalized_entropy(std::vector<double>{1.0}));
}

TEST_CASE("exit probabilities match a direct softmax") {
  const Tensor<float> logits({3}, {1.0f, 2.0f, -1.0f});
  const auto p = exit_probabilities(logits);
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(-1.0);
  CHECK(p[0] == doctest::Approx(std::exp(1.0) / z).epsilon(1e-7));
  CHECK(p[1] == doctest::Approx(std::exp(2.0) / z).epsilon(1e-7));
  CHECK(argmax(p) == 1);
  CHECK(argmax(std::vector<double>{0.4, 0.4, 0.2}) == 0);
}

TEST_CASE("choose_exit uses a strict threshold and falls back to the last exit") {
  const std::vector<double> h{0.5, 0.3, 0.2};
  CHECK(choose_exit(h, 0.0) == 3);
  CHECK(choose_exit(h, 0.3) == 3);
  CHECK(choose_exit(h, std::nextafter(0.3, 1.0)) == 2);
  CHECK(choose_exit(h, 0.5) == 2);
  CHECK(choose_exit(h, 0.51) == 1);
  CHECK(choose_exit(h, 1.0) == 1);
  // An exactly uniform exit never leaves early, even at phi = 1.
  CHECK(choose_exit(std::vector<double>{1.0, 1.0}, 1.0) == 2);
}

TEST_CASE("policy validation") {
  CHECK_NOTHROW(ExitPolicy{0.0}.validate());
  CHECK_NOTHROW(ExitPolicy{1.0}.validate());
  CHECK_THROWS_AS(ExitPolicy{-0.1}.validate(), ConfigError);
  CHECK_THROWS_AS(ExitPolicy{1.5}.validate(), ConfigError);
  CHECK_THROWS_AS(ExitPolicy{std::numeric_limits<double>::quiet_NaN()}.validate(), ConfigError);
}

TEST_CASE("incremental inference agrees with the all-exit oracle and stops computing at the chosen exit") {
  const auto& net = trained_net();
  const auto data = test_set();
  const auto all = all_exit_probabilities(net, data);
  for (double phi : {0.0, 0.2, 0.5, 0.8, 1.0}) {
    for (std::size_t i = 0; i < data.size(); ++i) {
      ForwardCounter counter;
      const auto trace = infer_early_exit(net, data.windows[i], ExitPolicy{phi}, &counter);
      // Oracle: first exit whose entropy is below phi, computed from every exit.
      std::size_t expected = net.num_exits();
      for (std::size_t e = 0; e < net.num_exits(); ++e) {
        if (entropy_oracle(all.probs[i][e]) < phi) {
          expected = e + 1;
          break;
        }
      }
      CHECK(trace.chosen_exit == expected);
      CHECK(counter.blocks == trace.chosen_exit);
      CHECK(counter.heads == trace.chosen_exit);
      CHECK(trace.entropies.size() == trace.chosen_exit);
      const auto& p = all.probs[i][trace.chosen_exit - 1];
      CHECK(trace.predicted_label == argmax(p));
      CHECK(trace.confidence == p[trace.predicted_label]);
      const auto replay = trace_from_probabilities(all.probs[i], all.entropies[i], phi);
      CHECK(replay.chosen_exit == trace.chosen_exit);
      CHECK(replay.predicted_label == trace.predicted_label);
    }
  }
}

TEST_CASE("batch statistics are consistent with the traces") {
  const auto& net = trained_net();
  const auto data = test_set();
  const auto r = batch_stats(net, data, ExitPolicy{0.6});
  REQUIRE(r.traces.size() == data.size());
  double sum = 0, avg = 0;
  std::size_t total = 0;
  for (std::size_t e = 0; e < net.num_exits(); ++e) {
    sum += r.stats.fractions[e];
    avg += static_cast<double>(e + 1) * r.stats.fractions[e];
    total += r.stats.counts[e];
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(total == data.size());
  CHECK(r.stats.average_exit == doctest::Approx(avg).epsilon(1e-12));
  std::size_t class_total = 0;
  for (const auto& row : r.stats.class_counts) {
    for (auto c : row) class_total += c;
  }
  CHECK(class_total == data.size());
  for (std::size_t i = 0; i < data.size(); ++i) CHECK(r.predictions[i] == r.traces[i].predicted_label);
}

TEST_CASE("sweep: sorted, de-duplicated and monotone per example") {
  const auto& net = trained_net();
  const auto data = test_set();
  const auto rows = sweep_thresholds(net, data, {0.5, 0.0, 1.0, 0.5, 0.25});
  REQUIRE(rows.size() == 4);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    CHECK(rows[i - 1].phi < rows[i].phi);
    CHECK(rows[i - 1].stats.average_exit >= rows[i].stats.average_exit);
  }
  const auto all = all_exit_probabilities(net, data);
  const auto grid = default_phi_grid();
  REQUIRE(grid.size() == 11);
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::size_t prev = net.num_exits() + 1;
    for (double phi : grid) {
      const auto e = trace_from_probabilities(all.probs[i], all.entropies[i], phi).chosen_exit;
      CHECK(e <= prev);
      prev = e;
    }
  }
  CHECK_THROWS_AS(sweep_thresholds(net, data, {0.5, 1.2}), ConfigError);
  CHECK_THROWS(sweep_thresholds(net, data, {}));
}

TEST_CASE("phi = 0 sends everything to the last exit and reproduces last-exit evaluation exactly") {
  const auto& net = trained_net();
  const auto data = test_set();
  const auto rows = sweep_thresholds(net, data, {0.0});
  const auto& s = rows.front().stats;
  CHECK(s.fractions.back() == 1.0);
  CHECK(s.average_exit == static_cast<double>(net.num_exits()));
  const auto plain = evaluate_exit(net, data, net.num_exits());
  CHECK(rows.front().metrics.accuracy == plain.accuracy);
  CHECK(rows.front().metrics.macro_f1 == plain.macro_f1);
  CHECK(rows.front().metrics.kappa == plain.kappa);
}

TEST_CASE("evaluation results do not depend on the thread count") {
  const auto& net = trained_net();
  const auto data = test_set();
  const auto grid = default_phi_grid();
  const auto a = evaluate(net, data, grid, 1);
  const auto b = evaluate(net, data, grid, 3);
  REQUIRE(a.sweep.size() == b.sweep.size());
  for (std::size_t i = 0; i < a.sweep.size(); ++i) {
    CHECK(a.sweep[i].metrics == b.sweep[i].metrics);
    CHECK(a.sweep[i].stats.fractions == b.sweep[i].stats.fractions);
  }
  REQUIRE(a.per_exit.size() == net.num_exits());
  for (std::size_t e = 0; e < a.per_exit.size(); ++e) {
    CHECK(a.per_exit[e].metrics == b.per_exit[e].metrics);
    CHECK(a.per_exit[e].macs == net.macs_until_exit(e + 1));
    if (e > 0) CHECK(a.per_exit[e].macs > a.per_exit[e - 1].macs);
  }
}
