#include "cetx/trainer.hpp"

#include <algorithm>
#include <numeric>

#include "cetx/early_exit.hpp"
#include "cetx/parallel.hpp"
#include "cetx/text.hpp"

namespace cetx {

void TrainConfig::validate(std::size_t window_length) const {
  if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate: must be positive");
  if (epochs < 1) throw ConfigError("train.epochs: must be >= 1");
  if (batch_size < 1) throw ConfigError("train.batch_size: must be >= 1");
  loss.validate();
  if (loss.mode == LossMode::cet || loss.mode == LossMode::augment_only) perturb.validate(window_length);
}

namespace {

std::size_t argmax_logits(std::span<const float> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

void check_compatible(const WindowedDataset& data, const ModelConfig& cfg) {
  data.validate();
  if (data.meta.channels != cfg.channels_in || data.meta.window_length != cfg.length_in) {
    throw ShapeError("dataset windows are " + std::to_string(data.meta.channels) + "x" +
                     std::to_string(data.meta.window_length) + " but the model expects " +
                     std::to_string(cfg.channels_in) + "x" + std::to_string(cfg.length_in));
  }
  if (data.meta.num_classes != cfg.num_classes) {
    throw ShapeError("dataset has " + std::to_string(data.meta.num_classes) + " classes but the model has " +
                     std::to_string(cfg.num_classes));
  }
}

}  // namespace

Trainer::Trainer(MultiExitNet& net, TrainConfig config)
    : net_(net), config_(std::move(config)), adam_(make_adam_state(net.parameters())) {
  config_.validate(net.config().length_in);
}

StepResult Trainer::compute_gradients(const WindowedDataset& data, std::span<const std::size_t> batch,
                                      std::size_t epoch, double kappa) {
  if (batch.empty()) throw Error("training step: empty batch");
  const auto mode = config_.loss.mode;
  const bool perturbed_pass = mode == LossMode::cet || mode == LossMode::augment_only;
  const std::uint64_t seed = config_.seed;

  Tape<float> tape;
  std::vector<ExitLogits> clean, perturbed;
  std::vector<std::size_t> labels;
  for (auto idx : batch) {
    const auto& x = data.windows.at(idx);
    labels.push_back(data.labels[idx]);
    Rng drop_clean = make_rng(seed, {0xd209, epoch, idx, 0});
    clean.push_back(net_.forward_all_exits(tape, x, true, &drop_clean));
    if (perturbed_pass) {
      const auto xp = perturb_example(x, config_.perturb, seed, epoch, idx);
      Rng drop_pert = make_rng(seed, {0xd209, epoch, idx, 1});
      perturbed.push_back(net_.forward_all_exits(tape, xp, true, &drop_pert));
    }
  }

  LossInputs in;
  in.clean = &clean;
  in.perturbed = perturbed_pass ? &perturbed : nullptr;
  in.labels = labels;
  in.kappa = kappa;
  if (net_.config().l2_rate > 0.0) in.l2 = net_.l2_penalty(tape);
  auto loss = total_loss(tape, in, config_.loss);

  tape.backward(loss.total);
  net_.zero_grad();
  tape.accumulate_param_grads();

  StepResult out;
  out.breakdown = std::move(loss.breakdown);
  out.correct.assign(net_.num_exits(), 0);
  for (std::size_t m = 0; m < clean.size(); ++m) {
    for (std::size_t e = 0; e < clean[m].size(); ++e) {
      if (argmax_logits(clean[m][e].value().data()) == labels[m]) ++out.correct[e];
    }
  }
  return out;
}

StepResult Trainer::step(const WindowedDataset& data, std::span<const std::size_t> batch, std::size_t epoch,
                         double kappa) {
  auto out = compute_gradients(data, batch, epoch, kappa);
  adam_step(net_.parameters(), adam_, config_.learning_rate);
  return out;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = make_rng(seed, {0x5f0f, epoch});
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

EpochRecord Trainer::run_epoch(const WindowedDataset& data, std::size_t epoch) {
  const std::size_t exits = net_.num_exits();
  EpochRecord rec;
  rec.epoch = epoch + 1;
  rec.kappa = kappa_schedule(epoch, config_.epochs, config_.loss.kappa_min, config_.loss.kappa_max);
  rec.task_loss.assign(exits, 0.0);
  rec.consistency_loss.assign(exits, 0.0);
  rec.retained_fraction.assign(exits, 0.0);
  std::vector<std::size_t> correct(exits, 0);

  const auto order = epoch_order(data.size(), config_.seed, epoch);
  std::size_t batches = 0;
  for (std::size_t start = 0; start < order.size(); start += config_.batch_size) {
    const std::size_t end = std::min(order.size(), start + config_.batch_size);
    const std::span<const std::size_t> batch(order.data() + start, end - start);
    StepResult r;
    try {
      r = step(data, batch, epoch, rec.kappa);
    } catch (const NumericError& e) {
      throw NumericError("epoch " + std::to_string(epoch + 1) + ", batch " + std::to_string(batches + 1) + ": " +
                         e.what());
    }
    const auto& bd = r.breakdown;
    for (std::size_t e = 0; e < exits; ++e) {
      rec.task_loss[e] += bd.per_exit_task[e];
      rec.consistency_loss[e] += bd.per_exit_consistency[e];
      rec.retained_fraction[e] += bd.retained_fraction[e];
      correct[e] += r.correct[e];
    }
    rec.total_loss += bd.total;
    rec.l2 += bd.l2;
    ++batches;
  }
  const double nb = static_cast<double>(batches);
  for (std::size_t e = 0; e < exits; ++e) {
    rec.task_loss[e] /= nb;
    rec.consistency_loss[e] /= nb;
    rec.retained_fraction[e] /= nb;
    rec.train_accuracy.push_back(static_cast<double>(correct[e]) / static_cast<double>(data.size()));
  }
  rec.total_loss /= nb;
  rec.l2 /= nb;
  return rec;
}

std::string TrainReport::to_csv() const {
  std::string out = "epoch,kappa,total_loss,l2";
  const std::size_t exits = epochs.empty() ? 0 : epochs.front().task_loss.size();
  for (const char* col : {"task_loss", "consistency_loss", "retained_fraction", "train_accuracy"}) {
    for (std::size_t e = 1; e <= exits; ++e) out += "," + std::string(col) + "_exit" + std::to_string(e);
  }
  out += ",val_accuracy,val_macro_f1,val_kappa\n";
  for (const auto& r : epochs) {
    out += std::to_string(r.epoch) + "," + format_double(r.kappa) + "," + format_double(r.total_loss) + "," +
           format_double(r.l2);
    for (const auto* col : {&r.task_loss, &r.consistency_loss, &r.retained_fraction, &r.train_accuracy}) {
      for (double v : *col) out += "," + format_double(v);
    }
    if (r.validation) {
      out += "," + format_double(r.validation->accuracy) + "," + format_double(r.validation->macro_f1) + "," +
             format_double(r.validation->kappa);
    } else {
      out += ",,,";
    }
    out += "\n";
  }
  return out;
}

ClassificationMetrics evaluate_exit(const MultiExitNet& net, const WindowedDataset& data, std::size_t exit,
                                    std::size_t threads) {
  if (exit < 1 || exit > net.num_exits()) throw Error("evaluate_exit: exit index out of range");
  std::vector<std::size_t> predicted(data.size()), truth(data.labels.begin(), data.labels.end());
  parallel_for(data.size(), threads, [&](std::size_t i) {
    Tape<float> tape;
    tape.set_recording(false);
    auto logits = net.forward_until_exit(tape, data.windows[i], exit);
    predicted[i] = argmax(exit_probabilities(logits.value()));
  });
  return compute_metrics(ConfusionMatrix::from_predictions(net.num_classes(), truth, predicted));
}

TrainResult train(const WindowedDataset& train_set, const ModelConfig& model_config, const TrainConfig& config,
                  const WindowedDataset* validation, const EpochCallback& on_epoch) {
  model_config.validate();
  check_compatible(train_set, model_config);
  if (validation != nullptr) check_compatible(*validation, model_config);

  TrainResult result{build_network(model_config), {}};
  Trainer trainer(result.net, config);
  const std::size_t threads = configured_threads();
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    auto rec = trainer.run_epoch(train_set, epoch);
    const bool last = epoch + 1 == config.epochs;
    const bool due = config.eval_every > 0 && (epoch + 1) % config.eval_every == 0;
    if (validation != nullptr && (last || due)) {
      rec.validation = evaluate_exit(result.net, *validation, result.net.num_exits(), threads);
    }
    result.report.epochs.push_back(std::move(rec));
    if (on_epoch) on_epoch(result.report.epochs.back(), result.net);
  }
  return result;
}

}  // namespace cetx
