#include "cetx/model.hpp"

#include <cmath>

namespace cetx {

std::vector<BlockSpec> default_blocks() {
  return {
      {8, 4, 4, 0.0}, {16, 4, 4, 0.1}, {24, 4, 4, 0.0}, {32, 4, 4, 0.1}, {64, 4, 4, 0.0},
  };
}

void ModelConfig::validate() const {
  if (num_classes < 2) throw ConfigError("model.num_classes: must be >= 2");
  if (channels_in < 1) throw ConfigError("model.channels_in: must be >= 1");
  if (length_in < 1) throw ConfigError("model.length_in: must be >= 1");
  if (blocks.empty()) throw ConfigError("model.blocks: at least one block is required");
  if (hidden_units < 1) throw ConfigError("model.hidden_units: must be >= 1");
  if (!(l2_rate >= 0.0)) throw ConfigError("model.l2_rate: must be non-negative");
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& b = blocks[i];
    const std::string key = "model.block" + std::to_string(i + 1);
    if (b.filters < 1) throw ConfigError(key + ".filters: must be >= 1");
    if (b.kernel < 1) throw ConfigError(key + ".kernel: must be >= 1");
    if (b.pool < 1) throw ConfigError(key + ".pool: must be >= 1");
    if (!(b.dropout_rate >= 0.0 && b.dropout_rate < 1.0)) {
      throw ConfigError(key + ".dropout: must be in [0, 1)");
    }
  }
}

std::vector<std::size_t> block_output_lengths(const ModelConfig& cfg) {
  std::vector<std::size_t> out;
  std::size_t len = cfg.length_in;
  for (const auto& b : cfg.blocks) {
    len = (len + b.pool - 1) / b.pool;
    out.push_back(len);
  }
  return out;
}

template <typename T>
BasicMultiExitNet<T>::BasicMultiExitNet(ModelConfig config) : config_(std::move(config)) {
  const auto& cfg = config_;
  in_gain_ = add_param("input_norm.gain", {cfg.channels_in}, false);
  in_shift_ = add_param("input_norm.shift", {cfg.channels_in}, false);
  std::size_t cin = cfg.channels_in;
  for (std::size_t i = 0; i < cfg.blocks.size(); ++i) {
    const auto& spec = cfg.blocks[i];
    const std::string p = "block" + std::to_string(i + 1) + ".";
    Block b{};
    b.spec = spec;
    b.conv_w = add_param(p + "conv.weight", {spec.filters, cin, spec.kernel}, true);
    b.conv_b = add_param(p + "conv.bias", {spec.filters}, false);
    b.norm_gain = add_param(p + "norm.gain", {spec.filters}, false);
    b.norm_shift = add_param(p + "norm.shift", {spec.filters}, false);
    b.slopes = add_param(p + "prelu.slope", {spec.filters}, false);
    blocks_.push_back(b);

    const std::string h = "exit" + std::to_string(i + 1) + ".";
    Head hd{};
    hd.fc_w = add_param(h + "fc.weight", {cfg.hidden_units, spec.filters}, true);
    hd.fc_b = add_param(h + "fc.bias", {cfg.hidden_units}, false);
    hd.slopes = add_param(h + "prelu.slope", {cfg.hidden_units}, false);
    hd.out_w = add_param(h + "out.weight", {cfg.num_classes, cfg.hidden_units}, true);
    hd.out_b = add_param(h + "out.bias", {cfg.num_classes}, false);
    heads_.push_back(hd);
    cin = spec.filters;
  }

  // Fan-in scaled uniform weights, zero biases, unit gains, 0.25 slopes.
  Rng rng(derive_seed(cfg.seed, {0x1417}));
  for (auto& prm : params_) {
    const auto& n = prm.name;
    auto ends_with = [&n](const char* suffix) {
      const std::string s(suffix);
      return n.size() >= s.size() && n.compare(n.size() - s.size(), s.size(), s) == 0;
    };
    if (ends_with(".weight")) {
      std::size_t fan_in = 1;
      for (std::size_t d = 1; d < prm.value.rank(); ++d) fan_in *= prm.value.dim(d);
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      std::uniform_real_distribution<double> u(-bound, bound);
      for (auto& v : prm.value.data()) v = static_cast<T>(u(rng));
    } else if (ends_with(".gain")) {
      prm.value.fill(T{1});
    } else if (ends_with(".slope")) {
      prm.value.fill(static_cast<T>(0.25));
    }
  }
}

template <typename T>
std::size_t BasicMultiExitNet<T>::add_param(std::string name, Shape shape, bool decay) {
  params_.emplace_back(std::move(name), Tensor<T>(std::move(shape)), decay);
  return params_.size() - 1;
}

template <typename T>
Parameter<T>* BasicMultiExitNet<T>::find(const std::string& name) {
  for (auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

template <typename T>
const Parameter<T>* BasicMultiExitNet<T>::find(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

template <typename T>
std::vector<std::size_t> BasicMultiExitNet<T>::block_parameter_indices(std::size_t exit) const {
  check_exit(exit);
  const auto& b = blocks_[exit - 1];
  return {b.conv_w, b.conv_b, b.norm_gain, b.norm_shift, b.slopes};
}

template <typename T>
std::vector<std::size_t> BasicMultiExitNet<T>::head_parameter_indices(std::size_t exit) const {
  check_exit(exit);
  const auto& h = heads_[exit - 1];
  return {h.fc_w, h.fc_b, h.slopes, h.out_w, h.out_b};
}

template <typename T>
Var<T> BasicMultiExitNet<T>::bind(Tape<T>& tape, std::size_t idx) const {
  // Binding only records the parameter's address; values are copied, and
  // gradients are written back solely by Tape::accumulate_param_grads.
  if (!tape.recording()) return tape.constant(params_[idx].value);
  return tape.param(const_cast<Parameter<T>&>(params_[idx]));
}

template <typename T>
void BasicMultiExitNet<T>::check_exit(std::size_t exit) const {
  if (exit < 1 || exit > blocks_.size()) {
    throw Error("exit index " + std::to_string(exit) + " out of range [1, " +
                std::to_string(blocks_.size()) + "]");
  }
}

template <typename T>
void BasicMultiExitNet<T>::check_input(const Tensor<T>& x) const {
  if (x.rank() != 2 || x.dim(0) != config_.channels_in) {
    throw ShapeError("network expects input with " + std::to_string(config_.channels_in) +
                     " channels, got shape " + shape_str(x.shape()));
  }
  if (x.dim(1) < 1) throw ShapeError("network input has zero length");
}

template <typename T>
Var<T> BasicMultiExitNet<T>::stem(Tape<T>& tape, const Tensor<T>& x) const {
  check_input(x);
  auto in = tape.constant(x);
  return normalize(in, NormMode::instance, bind(tape, in_gain_), bind(tape, in_shift_));
}

template <typename T>
Var<T> BasicMultiExitNet<T>::block(Tape<T>& tape, std::size_t exit, Var<T> h, bool training,
                                   Rng* rng, ForwardCounter* counter) const {
  check_exit(exit);
  const auto& b = blocks_[exit - 1];
  auto z = conv1d(h, bind(tape, b.conv_w), bind(tape, b.conv_b));
  z = normalize(z, NormMode::layer, bind(tape, b.norm_gain), bind(tape, b.norm_shift));
  z = prelu(z, bind(tape, b.slopes));
  z = max_pool1d(z, b.spec.pool, b.spec.pool);
  if (training && b.spec.dropout_rate > 0.0) {
    if (rng == nullptr) throw Error("training forward pass requires a random stream for dropout");
    z = dropout(z, b.spec.dropout_rate, true, *rng);
  }
  if (counter != nullptr) {
    ++counter->blocks;
    ++counter->conv_calls;
  }
  return z;
}

template <typename T>
Var<T> BasicMultiExitNet<T>::head(Tape<T>& tape, std::size_t exit, Var<T> h,
                                  ForwardCounter* counter) const {
  check_exit(exit);
  const auto& hd = heads_[exit - 1];
  auto z = global_avg_pool(h);
  z = dense(z, bind(tape, hd.fc_w), bind(tape, hd.fc_b));
  z = prelu(z, bind(tape, hd.slopes));
  z = dense(z, bind(tape, hd.out_w), bind(tape, hd.out_b));
  if (counter != nullptr) ++counter->heads;
  return z;
}

template <typename T>
std::vector<Var<T>> BasicMultiExitNet<T>::forward_all_exits(Tape<T>& tape, const Tensor<T>& x,
                                                            bool training, Rng* rng,
                                                            ForwardCounter* counter) const {
  std::vector<Var<T>> logits;
  logits.reserve(blocks_.size());
  auto h = stem(tape, x);
  for (std::size_t e = 1; e <= blocks_.size(); ++e) {
    h = block(tape, e, h, training, rng, counter);
    logits.push_back(head(tape, e, h, counter));
  }
  return logits;
}

template <typename T>
Var<T> BasicMultiExitNet<T>::forward_until_exit(Tape<T>& tape, const Tensor<T>& x, std::size_t exit,
                                                ForwardCounter* counter) const {
  check_exit(exit);
  auto h = stem(tape, x);
  for (std::size_t e = 1; e <= exit; ++e) h = block(tape, e, h, false, nullptr, counter);
  return head(tape, exit, h, counter);
}

template <typename T>
std::vector<Tensor<T>> BasicMultiExitNet<T>::predict_all(const Tensor<T>& x) const {
  Tape<T> tape;
  tape.set_recording(false);
  auto vars = forward_all_exits(tape, x, false, nullptr);
  std::vector<Tensor<T>> out;
  out.reserve(vars.size());
  for (auto v : vars) out.push_back(v.value());
  return out;
}

template <typename T>
Var<T> BasicMultiExitNet<T>::l2_penalty(Tape<T>& tape) const {
  Var<T> total = tape.constant(Tensor<T>::scalar(T{0}));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i].weight_decay_eligible) continue;
    total = add(total, sum_squares(bind(tape, i)));
  }
  return scale(total, static_cast<T>(config_.l2_rate));
}

template <typename T>
double BasicMultiExitNet<T>::l2_penalty_value() const {
  double s = 0;
  for (const auto& p : params_) {
    if (!p.weight_decay_eligible) continue;
    for (auto v : p.value.data()) s += static_cast<double>(v) * v;
  }
  return config_.l2_rate * s;
}

template <typename T>
std::size_t BasicMultiExitNet<T>::macs_until_exit(std::size_t exit) const {
  check_exit(exit);
  const auto lengths = block_output_lengths(config_);
  std::size_t macs = 0;
  std::size_t cin = config_.channels_in;
  std::size_t len = config_.length_in;
  for (std::size_t e = 0; e < exit; ++e) {
    const auto& s = blocks_[e].spec;
    macs += s.filters * cin * s.kernel * len;
    cin = s.filters;
    len = lengths[e];
  }
  macs += config_.hidden_units * cin + config_.num_classes * config_.hidden_units;
  return macs;
}

template <typename T>
void BasicMultiExitNet<T>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

template class BasicMultiExitNet<float>;
template class BasicMultiExitNet<double>;

MultiExitNet build_network(const ModelConfig& config) {
  config.validate();
  return MultiExitNet(config);
}

}  // namespace cetx
