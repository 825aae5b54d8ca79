#include "cetx/pipeline.hpp"

#include <ostream>

#include "cetx/perturb.hpp"
#include "cetx/report.hpp"
#include "cetx/text.hpp"

namespace cetx {

WindowedDataset load_source(const DataConfig& cfg) {
  DatasetMeta meta;
  meta.num_classes = cfg.num_classes;
  meta.channels = cfg.channels;
  meta.window_length = cfg.length;
  WindowedDataset data;
  switch (cfg.source) {
    case DataSource::synthetic: data = generate_synthetic(cfg.synth); break;
    case DataSource::windows: data = load_windows_file(cfg.path); break;
    case DataSource::csv: data = load_csv(cfg.path, meta); break;
  }
  const auto& m = data.meta;
  if (m.channels != cfg.channels || m.window_length != cfg.length || m.num_classes != cfg.num_classes) {
    throw ShapeError("data: file has " + std::to_string(m.channels) + " channels, length " +
                     std::to_string(m.window_length) + ", " + std::to_string(m.num_classes) +
                     " classes but the config expects " + std::to_string(cfg.channels) + ", " +
                     std::to_string(cfg.length) + ", " + std::to_string(cfg.num_classes));
  }
  return data;
}

WindowedDataset load_dataset_file(const std::filesystem::path& path, const DatasetMeta& meta) {
  if (path.extension() == ".csv") return load_csv(path, meta);
  return load_windows_file(path);
}

PreparedData prepare_data(const RunConfig& cfg) {
  const auto all = load_source(cfg.data);
  PreparedData out;
  std::tie(out.raw_train, out.raw_test) = group_split(all, cfg.split);
  WindowedDataset fit = out.raw_train;
  if (cfg.validation_fraction > 0.0) {
    auto [fit_part, val_part] = group_split(out.raw_train, {1.0 - cfg.validation_fraction, cfg.split.seed + 1});
    fit = std::move(fit_part);
    out.validation = std::move(val_part);
  }
  out.stats = compute_channel_stats(fit);
  out.train = std::move(fit);
  apply_channel_stats(out.train, out.stats);
  if (out.validation.size() > 0) apply_channel_stats(out.validation, out.stats);
  out.test = out.raw_test;
  apply_channel_stats(out.test, out.stats);
  return out;
}

void add_test_noise(WindowedDataset& data, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw ConfigError("eval.test_noise_sigma: must be non-negative");
  if (sigma == 0.0) return;
  for (std::size_t i = 0; i < data.size(); ++i) {
    Rng rng = make_rng(seed, {0x7e57, i});
    data.windows[i] = additive_noise(data.windows[i], sigma, rng);
  }
}

TrainOutcome run_training(const RunConfig& cfg, const std::filesystem::path& out_dir, std::ostream* log) {
  cfg.validate();
  std::filesystem::create_directories(out_dir);
  write_text_file(out_dir / "config.txt", cfg.to_text());

  TrainOutcome out{TrainResult{build_network(cfg.model), {}}, prepare_data(cfg)};
  const auto& d = out.data;
  if (log != nullptr) {
    *log << "train " << d.train.size() << " windows, validation " << d.validation.size() << ", test "
         << d.test.size() << ", mode " << to_string(cfg.train.loss.mode) << "\n";
  }
  EpochCallback progress;
  if (log != nullptr) {
    progress = [log](const EpochRecord& r, const MultiExitNet&) {
      *log << "epoch " << r.epoch << " loss " << format_double(r.total_loss, 5) << " kappa "
           << format_double(r.kappa, 4) << " train_acc_last " << format_double(r.train_accuracy.back(), 4);
      if (r.validation) *log << " val_f1 " << format_double(r.validation->macro_f1, 4);
      *log << "\n";
    };
  }
  out.result = train(d.train, cfg.model, cfg.train, d.validation.size() > 0 ? &d.validation : nullptr, progress);

  CheckpointInfo info{d.train.meta.class_names, d.stats};
  save_checkpoint(out.result.net, info, out_dir / "checkpoint.cetm");
  write_text_file(out_dir / "train_report.csv", out.result.report.to_csv());
  save_windows_file(d.raw_train, out_dir / "train.cetd");
  save_windows_file(d.raw_test, out_dir / "test.cetd");
  return out;
}

EvaluationBundle run_evaluation(const LoadedCheckpoint& ckpt, const WindowedDataset& raw, const EvalOptions& opts,
                                const std::filesystem::path& out_dir) {
  const auto& mc = ckpt.net.config();
  if (raw.meta.channels != mc.channels_in || raw.meta.window_length != mc.length_in) {
    throw ShapeError("data: windows are " + std::to_string(raw.meta.channels) + " x " +
                     std::to_string(raw.meta.window_length) + " but the checkpoint expects " +
                     std::to_string(mc.channels_in) + " x " + std::to_string(mc.length_in));
  }
  if (raw.meta.num_classes != mc.num_classes) {
    throw ShapeError("data: " + std::to_string(raw.meta.num_classes) + " classes but the checkpoint has " +
                     std::to_string(mc.num_classes));
  }
  raw.validate();
  WindowedDataset data = raw;
  if (ckpt.info.channel_stats) apply_channel_stats(data, *ckpt.info.channel_stats);
  add_test_noise(data, opts.noise_sigma, opts.noise_seed);

  auto bundle = evaluate(ckpt.net, data, opts.phi_grid, opts.threads);
  std::vector<std::string> names = ckpt.info.class_names;
  if (names.size() != mc.num_classes) names = raw.meta.class_names;

  std::filesystem::create_directories(out_dir);
  KeyValues echo;
  std::string phis;
  for (const auto& row : bundle.sweep) phis += (phis.empty() ? "" : ",") + format_double(row.phi);
  echo.set("eval.phi", phis);
  echo.set("eval.test_noise_sigma", format_double(opts.noise_sigma));
  echo.set("eval.noise_seed", std::to_string(opts.noise_seed));
  echo.set("eval.examples", std::to_string(data.size()));
  echo.set("eval.entropy", "normalized by ln K");
  write_text_file(out_dir / "eval_config.txt", echo.to_text());
  emit_reports(bundle, names, out_dir);
  if (opts.sweep_table) write_text_file(out_dir / "sweep.csv", sweep_csv(bundle.sweep));
  return bundle;
}

std::vector<double> uniform_phi_grid(std::size_t n) {
  if (n < 2) throw ConfigError("phi grid: needs at least 2 points");
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i) g[i] = static_cast<double>(i) / static_cast<double>(n - 1);
  return g;
}

}  // namespace cetx
