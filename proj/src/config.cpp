#include "cetx/config.hpp"

#include <fstream>
#include <sstream>

#include "cetx/early_exit.hpp"
#include "cetx/text.hpp"

namespace cetx {

KeyValues KeyValues::parse(const std::string& text, const std::string& origin) {
  KeyValues kv;
  std::size_t line_no = 0;
  for (const auto& line : split(text, '\n')) {
    ++line_no;
    const auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    const std::string where = origin + " line " + std::to_string(line_no);
    if (eq == std::string_view::npos) throw ConfigError(where + ": expected 'key = value'");
    const std::string key(trim(t.substr(0, eq)));
    const std::string value(trim(t.substr(eq + 1)));
    if (key.empty()) throw ConfigError(where + ": empty key");
    if (kv.has(key)) throw ConfigError(key + ": duplicate key (" + where + ")");
    kv.values_[key] = value;
  }
  return kv;
}

KeyValues KeyValues::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

const std::string* KeyValues::raw(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return nullptr;
  used_.insert(key);
  return &it->second;
}

std::string KeyValues::get_string(const std::string& key, const std::string& fallback) const {
  const auto* v = raw(key);
  return v ? *v : fallback;
}

double KeyValues::get_double(const std::string& key, double fallback) const {
  const auto* v = raw(key);
  if (!v) return fallback;
  auto d = parse_double(*v);
  if (!d) throw ConfigError(key + ": '" + *v + "' is not a number");
  return *d;
}

std::uint64_t KeyValues::get_uint(const std::string& key, std::uint64_t fallback) const {
  const auto* v = raw(key);
  if (!v) return fallback;
  auto u = parse_uint(*v);
  if (!u) throw ConfigError(key + ": '" + *v + "' is not a non-negative integer");
  return *u;
}

bool KeyValues::get_bool(const std::string& key, bool fallback) const {
  const auto* v = raw(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1") return true;
  if (*v == "false" || *v == "0") return false;
  throw ConfigError(key + ": '" + *v + "' is not a boolean (true or false)");
}

std::vector<double> KeyValues::get_doubles(const std::string& key, const std::vector<double>& fallback) const {
  const auto* v = raw(key);
  if (!v) return fallback;
  std::vector<double> out;
  for (const auto& f : split(*v, ',')) {
    auto d = parse_double(trim(f));
    if (!d) throw ConfigError(key + ": '" + f + "' is not a number");
    out.push_back(*d);
  }
  return out;
}

std::vector<std::string> KeyValues::get_strings(const std::string& key,
                                                const std::vector<std::string>& fallback) const {
  const auto* v = raw(key);
  if (!v) return fallback;
  std::vector<std::string> out;
  for (const auto& f : split(*v, ',')) {
    const auto t = trim(f);
    if (!t.empty()) out.emplace_back(t);
  }
  return out;
}

std::vector<std::string> KeyValues::unused_keys() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : values_) {
    if (!used_.count(k)) out.push_back(k);
  }
  return out;
}

std::string KeyValues::to_text() const {
  std::string s;
  for (const auto& [k, v] : values_) s += k + " = " + v + "\n";
  return s;
}

std::string to_string(DataSource source) {
  switch (source) {
    case DataSource::synthetic: return "synthetic";
    case DataSource::windows: return "windows";
    case DataSource::csv: return "csv";
  }
  return "unknown";
}

namespace {

DataSource parse_source(const std::string& s) {
  if (s == "synthetic") return DataSource::synthetic;
  if (s == "windows") return DataSource::windows;
  if (s == "csv") return DataSource::csv;
  throw ConfigError("data.source: unknown source '" + s + "' (synthetic, windows, csv)");
}

std::string join(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + format_double(v[i]);
  return s;
}

std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

/// One value per block; a single value is broadcast.
std::vector<double> per_block(const KeyValues& kv, const std::string& key, const std::vector<double>& fallback,
                              std::size_t blocks) {
  auto v = kv.get_doubles(key, fallback);
  if (v.size() == 1) v.assign(blocks, v.front());
  if (v.size() != blocks) {
    throw ConfigError(key + ": expected 1 or " + std::to_string(blocks) + " values, got " + std::to_string(v.size()));
  }
  return v;
}

std::size_t as_count(double v, const std::string& key) {
  if (!(v >= 0.0) || v != static_cast<double>(static_cast<std::size_t>(v))) {
    throw ConfigError(key + ": '" + format_double(v) + "' is not a non-negative integer");
  }
  return static_cast<std::size_t>(v);
}

}  // namespace

RunConfig RunConfig::from_key_values(const KeyValues& kv) {
  RunConfig c;
  c.seed = kv.get_uint("seed", 0);

  auto& d = c.data;
  d.source = parse_source(kv.get_string("data.source", "synthetic"));
  d.path = kv.get_string("data.path", "");
  d.channels = kv.get_uint("data.channels", d.channels);
  d.length = kv.get_uint("data.length", d.length);
  d.num_classes = kv.get_uint("data.num_classes", d.num_classes);
  d.synth.num_classes = d.num_classes;
  d.synth.channels = d.channels;
  d.synth.length = d.length;
  d.synth.per_class = kv.get_uint("synth.per_class", d.synth.per_class);
  d.synth.groups = kv.get_uint("synth.groups", d.synth.groups);
  d.synth.noise_std = kv.get_double("synth.noise_std", d.synth.noise_std);
  d.synth.seed = kv.get_uint("synth.seed", c.seed);

  c.split.train_fraction = kv.get_double("split.train_fraction", c.split.train_fraction);
  c.split.seed = kv.get_uint("split.seed", c.seed);
  c.validation_fraction = kv.get_double("split.validation_fraction", 0.0);

  auto& m = c.model;
  m.channels_in = d.channels;
  m.length_in = d.length;
  m.num_classes = d.num_classes;
  m.seed = c.seed;
  std::vector<double> filters_default, kernel_default, pool_default, dropout_default;
  for (const auto& b : default_blocks()) {
    filters_default.push_back(static_cast<double>(b.filters));
    kernel_default.push_back(static_cast<double>(b.kernel));
    pool_default.push_back(static_cast<double>(b.pool));
    dropout_default.push_back(b.dropout_rate);
  }
  const auto filters = kv.get_doubles("model.filters", filters_default);
  const std::size_t nb = filters.size();
  const auto kernels = per_block(kv, "model.kernel", {4.0}, nb);
  const auto pools = per_block(kv, "model.pool", {4.0}, nb);
  const auto drops = kv.has("model.dropout") || nb != dropout_default.size()
                         ? per_block(kv, "model.dropout", {0.0}, nb)
                         : dropout_default;
  m.blocks.clear();
  for (std::size_t i = 0; i < nb; ++i) {
    m.blocks.push_back({as_count(filters[i], "model.filters"), as_count(kernels[i], "model.kernel"),
                        as_count(pools[i], "model.pool"), drops[i]});
  }
  m.hidden_units = kv.get_uint("model.hidden_units", m.hidden_units);
  m.l2_rate = kv.get_double("model.l2_rate", m.l2_rate);

  auto& t = c.train;
  t.seed = c.seed;
  t.learning_rate = kv.get_double("train.learning_rate", t.learning_rate);
  t.epochs = kv.get_uint("train.epochs", t.epochs);
  t.batch_size = kv.get_uint("train.batch_size", t.batch_size);
  t.eval_every = kv.get_uint("train.eval_every", t.eval_every);

  auto& l = t.loss;
  l.mode = parse_loss_mode(kv.get_string("loss.mode", to_string(l.mode)));
  l.lambda = kv.get_double("loss.lambda", l.lambda);
  l.kappa_min = kv.get_double("loss.kappa_min", l.kappa_min);
  l.kappa_max = kv.get_double("loss.kappa_max", l.kappa_max);
  l.label_source = parse_label_source(kv.get_string("loss.label_source", to_string(l.label_source)));
  l.tau = kv.get_double("loss.tau", l.tau);

  auto& p = t.perturb;
  p.additive_sigma = kv.get_double("perturb.additive_sigma", p.additive_sigma);
  p.multiplicative_sigma = kv.get_double("perturb.multiplicative_sigma", p.multiplicative_sigma);
  p.warp_sigma = kv.get_double("perturb.warp_sigma", p.warp_sigma);
  p.warp_knots = kv.get_uint("perturb.warp_knots", p.warp_knots);
  p.mask_length = kv.get_uint("perturb.mask_length", p.mask_length);
  std::vector<std::string> enabled_default;
  for (auto k : p.enabled) enabled_default.push_back(to_string(k));
  p.enabled.clear();
  for (const auto& name : kv.get_strings("perturb.enabled", enabled_default)) p.enabled.push_back(parse_perturb_kind(name));

  c.eval.phi_grid = kv.get_doubles("eval.phi", default_phi_grid());
  c.eval.test_noise_sigma = kv.get_double("eval.test_noise_sigma", 0.0);
  c.eval.noise_seed = kv.get_uint("eval.noise_seed", c.seed);

  const auto unused = kv.unused_keys();
  if (!unused.empty()) throw ConfigError(unused.front() + ": unknown configuration key");
  return c;
}

KeyValues RunConfig::to_key_values() const {
  KeyValues kv;
  kv.set("seed", std::to_string(seed));
  kv.set("data.source", to_string(data.source));
  if (!data.path.empty()) kv.set("data.path", data.path);
  kv.set("data.channels", std::to_string(data.channels));
  kv.set("data.length", std::to_string(data.length));
  kv.set("data.num_classes", std::to_string(data.num_classes));
  kv.set("synth.per_class", std::to_string(data.synth.per_class));
  kv.set("synth.groups", std::to_string(data.synth.groups));
  kv.set("synth.noise_std", format_double(data.synth.noise_std));
  kv.set("synth.seed", std::to_string(data.synth.seed));
  kv.set("split.train_fraction", format_double(split.train_fraction));
  kv.set("split.seed", std::to_string(split.seed));
  kv.set("split.validation_fraction", format_double(validation_fraction));

  std::vector<std::size_t> filters, kernels, pools;
  std::vector<double> drops;
  for (const auto& b : model.blocks) {
    filters.push_back(b.filters);
    kernels.push_back(b.kernel);
    pools.push_back(b.pool);
    drops.push_back(b.dropout_rate);
  }
  kv.set("model.filters", join(filters));
  kv.set("model.kernel", join(kernels));
  kv.set("model.pool", join(pools));
  kv.set("model.dropout", join(drops));
  kv.set("model.hidden_units", std::to_string(model.hidden_units));
  kv.set("model.l2_rate", format_double(model.l2_rate));

  kv.set("train.learning_rate", format_double(train.learning_rate));
  kv.set("train.epochs", std::to_string(train.epochs));
  kv.set("train.batch_size", std::to_string(train.batch_size));
  kv.set("train.eval_every", std::to_string(train.eval_every));

  kv.set("loss.mode", to_string(train.loss.mode));
  kv.set("loss.lambda", format_double(train.loss.lambda));
  kv.set("loss.kappa_min", format_double(train.loss.kappa_min));
  kv.set("loss.kappa_max", format_double(train.loss.kappa_max));
  kv.set("loss.label_source", to_string(train.loss.label_source));
  kv.set("loss.tau", format_double(train.loss.tau));

  const auto& p = train.perturb;
  kv.set("perturb.additive_sigma", format_double(p.additive_sigma));
  kv.set("perturb.multiplicative_sigma", format_double(p.multiplicative_sigma));
  kv.set("perturb.warp_sigma", format_double(p.warp_sigma));
  kv.set("perturb.warp_knots", std::to_string(p.warp_knots));
  kv.set("perturb.mask_length", std::to_string(p.mask_length));
  std::string enabled;
  for (std::size_t i = 0; i < p.enabled.size(); ++i) enabled += (i ? "," : "") + to_string(p.enabled[i]);
  kv.set("perturb.enabled", enabled);

  kv.set("eval.phi", join(eval.phi_grid));
  kv.set("eval.test_noise_sigma", format_double(eval.test_noise_sigma));
  kv.set("eval.noise_seed", std::to_string(eval.noise_seed));
  return kv;
}

void RunConfig::validate() const {
  if (data.source != DataSource::synthetic && data.path.empty()) {
    throw ConfigError("data.path: required when data.source = " + to_string(data.source));
  }
  if (data.num_classes < 2) throw ConfigError("data.num_classes: must be >= 2");
  if (data.channels < 1) throw ConfigError("data.channels: must be >= 1");
  if (data.length < 1) throw ConfigError("data.length: must be >= 1");
  if (data.synth.per_class < 1) throw ConfigError("synth.per_class: must be >= 1");
  if (data.synth.groups < 2) throw ConfigError("synth.groups: must be >= 2 for a group split");
  if (!(data.synth.noise_std >= 0.0)) throw ConfigError("synth.noise_std: must be non-negative");
  if (!(split.train_fraction > 0.0 && split.train_fraction < 1.0)) {
    throw ConfigError("split.train_fraction: must be in (0, 1)");
  }
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw ConfigError("split.validation_fraction: must be in [0, 1)");
  }
  if (!(eval.test_noise_sigma >= 0.0)) throw ConfigError("eval.test_noise_sigma: must be non-negative");
  if (eval.phi_grid.empty()) throw ConfigError("eval.phi: at least one threshold is required");
  for (double phi : eval.phi_grid) {
    if (!(phi >= 0.0 && phi <= 1.0)) throw ConfigError("eval.phi: threshold " + format_double(phi) + " is outside [0, 1]");
  }
  try {
    model.validate();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    // Block-indexed keys are reported under the list key the user wrote.
    if (msg.rfind("model.block", 0) == 0) {
      const auto dot = msg.find('.', 6);
      throw ConfigError("model." + msg.substr(dot + 1));
    }
    throw;
  }
  train.validate(data.length);
}

RunConfig load_run_config(const std::filesystem::path& path) {
  auto cfg = RunConfig::from_key_values(KeyValues::load(path));
  cfg.validate();
  return cfg;
}

}  // namespace cetx
