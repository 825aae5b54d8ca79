#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "cetx/data.hpp"
#include "cetx/model.hpp"
#include "cetx/trainer.hpp"

namespace cetx {

/// Flat `key = value` text with dotted keys. '#' starts a comment line.
/// Typed getters name the key in their errors; keys that are never read can
/// be reported with unused_keys().
class KeyValues {
 public:
  static KeyValues parse(const std::string& text, const std::string& origin = "config");
  static KeyValues load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback) const;
  std::vector<std::string> get_strings(const std::string& key, const std::vector<std::string>& fallback) const;

  std::vector<std::string> unused_keys() const;
  const std::map<std::string, std::string>& entries() const { return values_; }

  /// Sorted `key = value` lines.
  std::string to_text() const;

 private:
  const std::string* raw(const std::string& key) const;

  std::map<std::string, std::string> values_;
  mutable std::set<std::string> used_;
};

enum class DataSource { synthetic, windows, csv };

struct DataConfig {
  DataSource source = DataSource::synthetic;
  std::string path;
  std::size_t channels = 3;
  std::size_t length = 400;
  std::size_t num_classes = 6;
  SynthSpec synth;
};

struct EvalConfig {
  std::vector<double> phi_grid;
  double test_noise_sigma = 0.0;  // additive noise applied to test inputs
  std::uint64_t noise_seed = 0;
};

struct RunConfig {
  std::uint64_t seed = 0;
  ModelConfig model;
  TrainConfig train;
  DataConfig data;
  SplitSpec split;
  double validation_fraction = 0.0;  // share of training groups held out
  EvalConfig eval;

  /// Builds from key/values; unknown keys and unparsable values raise
  /// ConfigError naming the key. Ranges are checked by validate().
  static RunConfig from_key_values(const KeyValues& kv);
  /// Every effective setting; parsing it back gives an identical config.
  KeyValues to_key_values() const;
  std::string to_text() const { return to_key_values().to_text(); }
  void validate() const;
};

/// Parses and validates.
RunConfig load_run_config(const std::filesystem::path& path);

std::string to_string(DataSource source);

}  // namespace cetx
