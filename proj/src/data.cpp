#include "cetx/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <set>

#include "binary_io.hpp"
#include "cetx/rng.hpp"
#include "cetx/text.hpp"

namespace cetx {

void WindowedDataset::validate() const {
  if (windows.empty()) throw Error("dataset is empty");
  if (labels.size() != windows.size() || groups.size() != windows.size()) {
    throw Error("dataset: windows, labels and groups differ in length");
  }
  if (meta.num_classes < 2) throw Error("dataset: num_classes must be >= 2");
  if (!meta.class_names.empty() && meta.class_names.size() != meta.num_classes) {
    throw Error("dataset: class_names length does not match num_classes");
  }
  const Shape expect{meta.channels, meta.window_length};
  for (std::size_t i = 0; i < windows.size(); ++i) {
    if (windows[i].shape() != expect) {
      throw ShapeError("dataset: window " + std::to_string(i) + " has shape " +
                       shape_str(windows[i].shape()) + ", expected " + shape_str(expect));
    }
    if (labels[i] >= meta.num_classes) {
      throw Error("dataset: label " + std::to_string(labels[i]) + " of window " + std::to_string(i) +
                  " is out of range for " + std::to_string(meta.num_classes) + " classes");
    }
  }
}

WindowedDataset WindowedDataset::subset(std::span<const std::size_t> indices) const {
  WindowedDataset out;
  out.meta = meta;
  out.windows.reserve(indices.size());
  for (auto i : indices) {
    out.windows.push_back(windows.at(i));
    out.labels.push_back(labels.at(i));
    out.groups.push_back(groups.at(i));
  }
  return out;
}

std::vector<std::uint16_t> WindowedDataset::distinct_groups() const {
  std::set<std::uint16_t> s(groups.begin(), groups.end());
  return {s.begin(), s.end()};
}

std::pair<WindowedDataset, WindowedDataset> group_split(const WindowedDataset& data, const SplitSpec& spec) {
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) {
    throw ConfigError("split.train_fraction: must be in (0, 1)");
  }
  auto ids = data.distinct_groups();
  if (ids.size() < 2) throw Error("group_split: at least 2 distinct groups are required");
  Rng rng(derive_seed(spec.seed, {0x5e11}));
  std::shuffle(ids.begin(), ids.end(), rng);
  auto n_train = static_cast<std::size_t>(std::llround(spec.train_fraction * static_cast<double>(ids.size())));
  n_train = std::clamp<std::size_t>(n_train, 1, ids.size() - 1);
  const std::set<std::uint16_t> train_ids(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));

  std::vector<std::size_t> train_idx, test_idx;
  for (std::size_t i = 0; i < data.size(); ++i) {
    (train_ids.count(data.groups[i]) ? train_idx : test_idx).push_back(i);
  }
  return {data.subset(train_idx), data.subset(test_idx)};
}

WindowedDataset generate_synthetic(const SynthSpec& spec) {
  if (spec.num_classes < 2) throw ConfigError("synth.num_classes: must be >= 2");
  if (spec.channels < 1 || spec.length < 1) throw ConfigError("synth: channels and length must be >= 1");
  if (spec.per_class < 1) throw ConfigError("synth.per_class: must be >= 1");
  if (spec.groups < 1 || spec.groups > 65535) throw ConfigError("synth.groups: must be in [1, 65535]");
  if (!(spec.noise_std >= 0.0)) throw ConfigError("synth.noise_std: must be non-negative");

  constexpr double two_pi = 2.0 * std::numbers::pi;
  const auto L = static_cast<double>(spec.length);
  // Cycles per window of the class fundamental (4, 10, 16, ... at L = 400),
  // proportional to L and kept below Nyquist.
  const double max_cycles = std::max(1.0, L / 2.0 - 1.0);
  auto base_cycles = [&](std::size_t k) {
    return std::min(max_cycles / 1.6, (4.0 + 6.0 * static_cast<double>(k)) * L / 400.0);
  };

  struct GroupStyle {
    double freq_scale;
    std::vector<double> amplitude, offset;
    double phase;
  };
  std::vector<GroupStyle> styles(spec.groups);
  for (std::size_t g = 0; g < spec.groups; ++g) {
    Rng rng = make_rng(spec.seed, {0x6770, g});
    std::uniform_real_distribution<double> fs(0.93, 1.07), amp(0.7, 1.3), ph(0.0, two_pi);
    std::normal_distribution<double> off(0.0, 0.3);
    auto& s = styles[g];
    s.freq_scale = fs(rng);
    s.phase = ph(rng);
    for (std::size_t c = 0; c < spec.channels; ++c) {
      s.amplitude.push_back(amp(rng));
      s.offset.push_back(off(rng));
    }
  }

  WindowedDataset out;
  out.meta.num_classes = spec.num_classes;
  out.meta.channels = spec.channels;
  out.meta.window_length = spec.length;
  for (std::size_t k = 0; k < spec.num_classes; ++k) out.meta.class_names.push_back("class" + std::to_string(k));

  for (std::size_t k = 0; k < spec.num_classes; ++k) {
    for (std::size_t j = 0; j < spec.per_class; ++j) {
      const std::size_t g = j % spec.groups;
      const auto& st = styles[g];
      Rng noise_rng = make_rng(spec.seed, {0x401e, k, j});
      std::normal_distribution<double> noise(0.0, 1.0);
      Tensor<float> w({spec.channels, spec.length});
      for (std::size_t c = 0; c < spec.channels; ++c) {
        const double f1 = base_cycles(k) * (1.0 + 0.25 * static_cast<double>(c)) * st.freq_scale;
        const double f2 = std::min(max_cycles, 1.5 * f1);
        const double class_phase = 0.7 * static_cast<double>(k) + 1.3 * static_cast<double>(c);
        for (std::size_t t = 0; t < spec.length; ++t) {
          const double tt = static_cast<double>(t) / L;
          double v = std::sin(two_pi * f1 * tt + class_phase + st.phase) +
                     0.4 * std::sin(two_pi * f2 * tt + 2.0 * class_phase);
          v = st.amplitude[c] * v + st.offset[c];
          if (spec.noise_std > 0.0) v += spec.noise_std * noise(noise_rng);
          w.at(c, t) = static_cast<float>(v);
        }
      }
      out.windows.push_back(std::move(w));
      out.labels.push_back(static_cast<std::uint16_t>(k));
      out.groups.push_back(static_cast<std::uint16_t>(g));
    }
  }
  return out;
}

ChannelStats compute_channel_stats(const WindowedDataset& data) {
  const std::size_t c = data.meta.channels, len = data.meta.window_length;
  ChannelStats st{std::vector<double>(c, 0.0), std::vector<double>(c, 1.0)};
  if (data.windows.empty()) return st;
  const double n = static_cast<double>(data.size() * len);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double s = 0;
    for (const auto& w : data.windows) {
      for (std::size_t t = 0; t < len; ++t) s += w.at(ch, t);
    }
    const double mean = s / n;
    double v = 0;
    for (const auto& w : data.windows) {
      for (std::size_t t = 0; t < len; ++t) {
        const double d = w.at(ch, t) - mean;
        v += d * d;
      }
    }
    const double sd = std::sqrt(v / n);
    st.mean[ch] = mean;
    st.stddev[ch] = sd > 1e-12 ? sd : 1.0;
  }
  return st;
}

void apply_channel_stats(WindowedDataset& data, const ChannelStats& stats) {
  if (stats.mean.size() != data.meta.channels || stats.stddev.size() != data.meta.channels) {
    throw ShapeError("channel statistics do not match the dataset channel count");
  }
  const Shape expect{data.meta.channels, data.meta.window_length};
  for (auto& w : data.windows) {
    if (w.shape() != expect) throw ShapeError("window shape does not match the dataset metadata");
    for (std::size_t ch = 0; ch < data.meta.channels; ++ch) {
      for (std::size_t t = 0; t < data.meta.window_length; ++t) {
        w.at(ch, t) = static_cast<float>((w.at(ch, t) - stats.mean[ch]) / stats.stddev[ch]);
      }
    }
  }
}

ChannelStats channel_normalize(WindowedDataset& train, WindowedDataset& test) {
  auto stats = compute_channel_stats(train);
  apply_channel_stats(train, stats);
  apply_channel_stats(test, stats);
  return stats;
}

namespace {

constexpr char kWindowsMagic[] = "CETD";
constexpr std::uint32_t kWindowsVersion = 1;

std::string encode_meta(const DatasetMeta& meta) {
  std::string s;
  for (std::size_t i = 0; i < meta.class_names.size(); ++i) {
    s += "class." + std::to_string(i) + "=" + meta.class_names[i] + "\n";
  }
  if (meta.sample_rate) s += "sample_rate=" + format_double(*meta.sample_rate) + "\n";
  return s;
}

void decode_meta(const std::string& text, DatasetMeta& meta, const std::string& what) {
  meta.class_names.clear();
  std::vector<std::pair<std::size_t, std::string>> names;
  for (const auto& line : split(text, '\n')) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError(what + ": malformed metadata line '" + line + "'");
    const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    if (key.rfind("class.", 0) == 0) {
      auto idx = parse_uint(key.substr(6));
      if (!idx) throw FormatError(what + ": malformed metadata key '" + key + "'");
      names.emplace_back(*idx, value);
    } else if (key == "sample_rate") {
      auto v = parse_double(value);
      if (!v) throw FormatError(what + ": malformed sample_rate");
      meta.sample_rate = *v;
    }
  }
  std::sort(names.begin(), names.end());
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i].first != i) throw FormatError(what + ": class names are not contiguous");
    meta.class_names.push_back(names[i].second);
  }
}

}  // namespace

void save_windows_file(const WindowedDataset& data, const std::filesystem::path& path) {
  data.validate();
  std::uint32_t num_groups = 0;
  for (auto g : data.groups) num_groups = std::max<std::uint32_t>(num_groups, g + 1u);
  detail::ByteWriter w;
  w.bytes(std::string_view(kWindowsMagic, 4));
  w.u32(kWindowsVersion);
  w.u32(static_cast<std::uint32_t>(data.size()));
  w.u32(static_cast<std::uint32_t>(data.meta.channels));
  w.u32(static_cast<std::uint32_t>(data.meta.window_length));
  w.u32(static_cast<std::uint32_t>(data.meta.num_classes));
  w.u32(num_groups);
  for (const auto& win : data.windows) {
    for (auto v : win.data()) w.f32(v);
  }
  for (auto l : data.labels) w.u16(l);
  for (auto g : data.groups) w.u16(g);
  w.str(encode_meta(data.meta));
  w.seal();
  detail::write_file(path, w.buffer(), "windows file");
}

WindowedDataset load_windows_file(const std::filesystem::path& path) {
  const std::string what = "windows file " + path.string();
  const auto bytes = detail::read_file(path, what);
  detail::ByteReader r(bytes, what);
  if (r.bytes(4) != std::string_view(kWindowsMagic, 4)) throw FormatError(what + ": bad magic (not a CETD file)");
  const auto version = r.u32();
  if (version != kWindowsVersion) {
    throw FormatError(what + ": unsupported version " + std::to_string(version));
  }
  const std::uint64_t n = r.u32(), c = r.u32(), len = r.u32(), k = r.u32(), num_groups = r.u32();
  const std::uint64_t body = n * c * len * 4 + n * 2 * 2 + 4 + 4;
  r.need(static_cast<std::size_t>(body));
  detail::verify_checksum(bytes, what);

  WindowedDataset out;
  out.meta.num_classes = k;
  out.meta.channels = c;
  out.meta.window_length = len;
  out.windows.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    Tensor<float> win({c, len});
    for (auto& v : win.data()) v = r.f32();
    out.windows.push_back(std::move(win));
  }
  for (std::uint64_t i = 0; i < n; ++i) out.labels.push_back(r.u16());
  for (std::uint64_t i = 0; i < n; ++i) {
    const auto g = r.u16();
    if (g >= num_groups) throw FormatError(what + ": group id out of range");
    out.groups.push_back(g);
  }
  decode_meta(r.str(), out.meta, what);
  if (r.remaining() != 4) throw FormatError(what + ": unexpected trailing bytes");
  for (std::size_t i = 0; i < out.labels.size(); ++i) {
    if (out.labels[i] >= k) {
      throw FormatError(what + ": label " + std::to_string(out.labels[i]) + " at window " + std::to_string(i) +
                        " is >= num_classes " + std::to_string(k));
    }
  }
  out.validate();
  return out;
}

WindowedDataset load_csv(const std::filesystem::path& path, const DatasetMeta& meta) {
  std::ifstream in(path);
  if (!in) throw Error("csv: cannot open " + path.string());
  if (meta.num_classes < 2) throw ConfigError("csv: num_classes must be >= 2");
  if (meta.channels < 1 || meta.window_length < 1) throw ConfigError("csv: channels and length must be >= 1");
  const std::size_t values = meta.channels * meta.window_length;
  WindowedDataset out;
  out.meta = meta;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    const auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto fields = split(t, ',');
    const std::string where = "csv " + path.string() + " row " + std::to_string(row);
    if (fields.size() != values + 2) {
      throw FormatError(where + ": expected " + std::to_string(values + 2) + " fields, got " +
                        std::to_string(fields.size()));
    }
    const auto group = parse_uint(fields[0]);
    const auto label = parse_uint(fields[1]);
    if (!group || *group > 65535) throw FormatError(where + ": group id '" + fields[0] + "' is not an integer in [0, 65535]");
    if (!label) throw FormatError(where + ": label '" + fields[1] + "' is not a non-negative integer");
    if (*label >= meta.num_classes) {
      throw FormatError(where + ": label " + fields[1] + " is >= num_classes " + std::to_string(meta.num_classes));
    }
    Tensor<float> win({meta.channels, meta.window_length});
    for (std::size_t i = 0; i < values; ++i) {
      const auto v = parse_double(fields[i + 2]);
      if (!v) throw FormatError(where + ": field " + std::to_string(i + 3) + " ('" + fields[i + 2] + "') is not numeric");
      win[i] = static_cast<float>(*v);
    }
    out.windows.push_back(std::move(win));
    out.labels.push_back(static_cast<std::uint16_t>(*label));
    out.groups.push_back(static_cast<std::uint16_t>(*group));
  }
  out.validate();
  return out;
}

}  // namespace cetx
