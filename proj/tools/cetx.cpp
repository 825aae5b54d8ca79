// cetx: train, evaluate and inspect multi-exit time-series classifiers.

#include <CLI11.hpp>
#include <chrono>
#include <iostream>
#include <optional>

#include "cetx/checkpoint.hpp"
#include "cetx/config.hpp"
#include "cetx/gradcheck.hpp"
#include "cetx/parallel.hpp"
#include "cetx/pipeline.hpp"
#include "cetx/report.hpp"
#include "cetx/text.hpp"

using namespace cetx;

namespace {

struct Options {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string phi;
  std::string checkpoint;
  std::string data;
  std::optional<double> noise;
  std::optional<std::uint64_t> noise_seed;
  std::size_t grid_points = 101;
  bool inject_fault = false;
};

RunConfig load_config(const Options& o, bool validate = true) {
  KeyValues kv = o.config.empty() ? KeyValues::parse("", "defaults") : KeyValues::load(o.config);
  if (o.seed) kv.set("seed", std::to_string(*o.seed));
  auto cfg = RunConfig::from_key_values(kv);
  if (validate) cfg.validate();
  return cfg;
}

std::vector<double> parse_phi(const std::string& text) {
  std::vector<double> out;
  for (const auto& part : split(text, ',')) {
    const auto v = parse_double(trim(part));
    if (!v) throw ConfigError("--phi: '" + part + "' is not a number");
    out.push_back(*v);
  }
  return out;
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw ConfigError(std::string(flag) + ": required");
}

int cmd_train(const Options& o) {
  require(o.out, "--out");
  const auto cfg = load_config(o);
  const auto t0 = std::chrono::steady_clock::now();
  const auto outcome = run_training(cfg, o.out, &std::cout);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const auto last = evaluate_exit(outcome.result.net, outcome.data.test, cfg.model.num_exits(), configured_threads());
  std::cout << "test last-exit macro_f1 " << format_double(last.macro_f1, 4) << " accuracy "
            << format_double(last.accuracy, 4) << " (" << format_double(secs, 3) << " s)\n";
  std::cout << "wrote " << o.out << "\n";
  return 0;
}

int cmd_eval(const Options& o, bool sweep) {
  require(o.checkpoint, "--checkpoint");
  require(o.data, "--data");
  require(o.out, "--out");
  EvalOptions opts;
  opts.threads = configured_threads();
  opts.sweep_table = sweep;
  if (!o.config.empty()) {
    const auto cfg = load_config(o);
    opts.phi_grid = cfg.eval.phi_grid;
    opts.noise_sigma = cfg.eval.test_noise_sigma;
    opts.noise_seed = cfg.eval.noise_seed;
  } else {
    opts.phi_grid = sweep ? uniform_phi_grid(o.grid_points) : default_phi_grid();
  }
  if (!o.phi.empty()) opts.phi_grid = parse_phi(o.phi);
  if (o.noise) opts.noise_sigma = *o.noise;
  if (o.noise_seed) opts.noise_seed = *o.noise_seed;

  const auto ckpt = load_checkpoint(o.checkpoint);
  DatasetMeta meta;
  meta.channels = ckpt.net.config().channels_in;
  meta.window_length = ckpt.net.config().length_in;
  meta.num_classes = ckpt.net.config().num_classes;
  const auto data = load_dataset_file(o.data, meta);
  const auto bundle = run_evaluation(ckpt, data, opts, o.out);
  std::cout << "phi,macro_f1,average_exit\n";
  for (const auto& row : bundle.sweep) {
    std::cout << format_double(row.phi) << "," << format_double(row.metrics.macro_f1, 4) << ","
              << format_double(row.stats.average_exit, 4) << "\n";
  }
  std::cout << "wrote " << o.out << "\n";
  return 0;
}

int cmd_gradcheck(const Options& o) {
  const auto reports = gradcheck_suite(o.inject_fault);
  bool ok = true;
  for (const auto& r : reports) {
    std::cout << (r.passed ? "PASS " : "FAIL ") << r.subject << " max_rel_error " << format_double(r.max_rel_error(), 3);
    if (!r.failure.empty()) std::cout << " (" << r.failure << ")";
    std::cout << "\n";
    ok = ok && r.passed;
  }
  if (!ok) {
    std::cerr << "error: gradient check failed (tolerance 1e-4)\n";
    return 1;
  }
  return 0;
}

int cmd_synth(const Options& o) {
  require(o.out, "--out");
  const auto cfg = load_config(o, false);  // training keys are irrelevant here
  const auto data = generate_synthetic(cfg.data.synth);
  save_windows_file(data, o.out);
  std::cout << "wrote " << data.size() << " windows to " << o.out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-exit time-series classifiers with consistency training"};
  app.require_subcommand(1);
  Options o;

  auto* train = app.add_subcommand("train", "Train from a config; writes checkpoint, report and config echo");
  train->add_option("--config", o.config, "Run configuration (key = value)");
  train->add_option("--out", o.out, "Output directory");
  train->add_option("--seed", o.seed, "Override the run seed");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint over an entropy threshold grid");
  auto* sweep = app.add_subcommand("sweep", "Dense threshold sweep with trade-off tables");
  for (auto* sub : {eval, sweep}) {
    sub->add_option("--checkpoint", o.checkpoint, "Checkpoint file");
    sub->add_option("--data", o.data, "Windows file (.cetd) or csv");
    sub->add_option("--out", o.out, "Output directory");
    sub->add_option("--config", o.config, "Take eval.* settings from a run configuration");
    sub->add_option("--phi", o.phi, "Comma-separated thresholds in [0, 1]");
    sub->add_option("--seed", o.noise_seed, "Seed for test noise");
    sub->add_option("--noise", o.noise, "Additive test noise sigma (after standardization)");
  }
  sweep->add_option("--points", o.grid_points, "Uniform grid size when --phi is absent")->capture_default_str();

  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of every op and a small network");
  grad->add_flag("--inject-fault", o.inject_fault)->group("");

  auto* synth = app.add_subcommand("synth-data", "Write a synthetic windows file");
  synth->add_option("--config", o.config, "Run configuration (data.* and synth.* keys)");
  synth->add_option("--out", o.out, "Output file");
  synth->add_option("--seed", o.seed, "Override the seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (*train) return cmd_train(o);
    if (*eval) return cmd_eval(o, false);
    if (*sweep) return cmd_eval(o, true);
    if (*grad) return cmd_gradcheck(o);
    if (*synth) return cmd_synth(o);
  } catch (const std::exception& e) {
    std::string msg = e.what();
    for (auto& c : msg) {
      if (c == '\n') c = ' ';
    }
    std::cerr << "error: " << msg << "\n";
    return 1;
  }
  return 1;
}
