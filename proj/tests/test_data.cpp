#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>

#include "cetx/data.hpp"
#include "doctest.h"

using namespace cetx;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "cetx_unit";
  std::filesystem::create_directories(dir);
  return dir / name;
}

SynthSpec small_spec() {
  SynthSpec s;
  s.per_class = 20;
  s.length = 120;
  return s;
}

void expect_same(const WindowedDataset& a, const WindowedDataset& b) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.windows[i] == b.windows[i]);
  CHECK(a.labels == b.labels);
  CHECK(a.groups == b.groups);
  CHECK(a.meta.num_classes == b.meta.num_classes);
  CHECK(a.meta.class_names == b.meta.class_names);
  CHECK(a.meta.channels == b.meta.channels);
  CHECK(a.meta.window_length == b.meta.window_length);
  CHECK(a.meta.sample_rate == b.meta.sample_rate);
}

/// Index of the strongest non-DC DFT bin of one channel.
double peak_bin(const Tensor<float>& w, std::size_t ch) {
  const std::size_t len = w.dim(1);
  double best = -1, best_k = 0;
  for (std::size_t k = 1; k <= len / 2; ++k) {
    double re = 0, im = 0;
    for (std::size_t t = 0; t < len; ++t) {
      const double a = 2.0 * std::numbers::pi * static_cast<double>(k * t) / static_cast<double>(len);
      re += w.at(ch, t) * std::cos(a);
      im -= w.at(ch, t) * std::sin(a);
    }
    const double mag = re * re + im * im;
    if (mag > best) {
      best = mag;
      best_k = static_cast<double>(k);
    }
  }
  return best_k;
}

}  // namespace

TEST_CASE("group split: 10 groups at 0.7 gives 7/3, disjoint and deterministic") {
  const auto data = generate_synthetic(small_spec());
  const auto [train, test] = group_split(data, {0.7, 3});
  CHECK(train.distinct_groups().size() == 7);
  CHECK(test.distinct_groups().size() == 3);
  CHECK(train.size() + test.size() == data.size());
  std::set<std::uint16_t> a(train.groups.begin(), train.groups.end());
  for (auto g : test.groups) CHECK(a.count(g) == 0);
  const auto [train2, test2] = group_split(data, {0.7, 3});
  CHECK(train2.groups == train.groups);
  CHECK(test2.groups == test.groups);
  const auto [train3, test3] = group_split(data, {0.7, 4});
  CHECK(train3.distinct_groups() != train.distinct_groups());
}

TEST_CASE("group split: extreme fractions keep both sides non-empty; one group is rejected") {
  const auto data = generate_synthetic(small_spec());
  CHECK(group_split(data, {0.01, 1}).first.distinct_groups().size() == 1);
  CHECK(group_split(data, {0.99, 1}).second.distinct_groups().size() == 1);
  CHECK_THROWS_AS(group_split(data, {1.0, 1}), ConfigError);
  auto one = data;
  for (auto& g : one.groups) g = 4;
  CHECK_THROWS(group_split(one, {0.7, 1}));
}

TEST_CASE("synthetic generator: size, balance, determinism") {
  SynthSpec spec;
  const auto d = generate_synthetic(spec);
  CHECK(d.size() == 600);
  std::vector<int> counts(6, 0);
  for (auto l : d.labels) ++counts[l];
  for (int c : counts) CHECK(c == 100);
  CHECK(d.windows[0].shape() == Shape{3, 400});
  CHECK(d.distinct_groups().size() == 10);
  const auto d2 = generate_synthetic(spec);
  expect_same(d, d2);
  spec.seed = 1;
  CHECK_FALSE(generate_synthetic(spec).windows[0] == d.windows[0]);
  spec.num_classes = 1;
  CHECK_THROWS_AS(generate_synthetic(spec), ConfigError);
}

TEST_CASE("synthetic generator: without noise, windows of one class and group are identical") {
  auto spec = small_spec();
  spec.noise_std = 0.0;
  const auto d = generate_synthetic(spec);
  for (std::size_t i = 0; i < d.size(); ++i) {
    for (std::size_t j = i + 1; j < d.size(); ++j) {
      if (d.labels[i] == d.labels[j] && d.groups[i] == d.groups[j]) CHECK(d.windows[i] == d.windows[j]);
    }
  }
}

TEST_CASE("synthetic generator: spectral-peak nearest-centroid classifier separates classes") {
  SynthSpec spec;  // noise_std 0.1
  const auto data = generate_synthetic(spec);
  const auto [train, test] = group_split(data, {0.7, 0});
  auto features = [](const Tensor<float>& w) {
    std::vector<double> f;
    for (std::size_t c = 0; c < w.dim(0); ++c) f.push_back(peak_bin(w, c));
    return f;
  };
  std::vector<std::vector<double>> centroid(6, std::vector<double>(3, 0.0));
  std::vector<double> n(6, 0.0);
  for (std::size_t i = 0; i < train.size(); ++i) {
    const auto f = features(train.windows[i]);
    for (std::size_t c = 0; c < 3; ++c) centroid[train.labels[i]][c] += f[c];
    n[train.labels[i]] += 1;
  }
  for (std::size_t k = 0; k < 6; ++k) {
    for (auto& v : centroid[k]) v /= n[k];
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto f = features(test.windows[i]);
    std::size_t best = 0;
    double best_d = 1e300;
    for (std::size_t k = 0; k < 6; ++k) {
      double d = 0;
      for (std::size_t c = 0; c < 3; ++c) d += (f[c] - centroid[k][c]) * (f[c] - centroid[k][c]);
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    correct += best == test.labels[i];
  }
  const double acc = static_cast<double>(correct) / static_cast<double>(test.size());
  INFO("spectral oracle accuracy " << acc);
  CHECK(acc > 0.9);
}

TEST_CASE("channel normalization: train statistics only, zero train mean, constant channel") {
  auto data = generate_synthetic(small_spec());
  auto [train, test] = group_split(data, {0.7, 0});
  for (auto& w : train.windows) {
    for (std::size_t t = 0; t < w.dim(1); ++t) w.at(2, t) = 3.5f;
  }
  const auto test_before = test;
  const auto stats = channel_normalize(train, test);
  const auto after = compute_channel_stats(train);
  for (std::size_t c = 0; c < 3; ++c) CHECK(std::abs(after.mean[c]) < 1e-6);
  for (std::size_t c = 0; c < 2; ++c) CHECK(after.stddev[c] == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(stats.stddev[2] == 1.0);
  for (const auto& w : train.windows) {
    for (std::size_t t = 0; t < w.dim(1); ++t) CHECK(w.at(2, t) == 0.0f);
  }
  // Test split uses the train transform, not its own statistics.
  for (std::size_t i = 0; i < test.size(); ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      const float expected =
          static_cast<float>((test_before.windows[i].at(c, 7) - stats.mean[c]) / stats.stddev[c]);
      CHECK(test.windows[i].at(c, 7) == expected);
    }
  }
  // Re-fitting on normalized data is (numerically) the identity.
  auto again = train;
  auto empty_test = test;
  channel_normalize(again, empty_test);
  for (std::size_t i = 0; i < train.size(); ++i) {
    for (std::size_t j = 0; j < train.windows[i].size(); ++j) {
      CHECK(std::abs(again.windows[i][j] - train.windows[i][j]) < 1e-5);
    }
  }
}

TEST_CASE("channel statistics reject mismatched channel counts and window shapes") {
  auto data = generate_synthetic(small_spec());
  const auto stats = compute_channel_stats(data);
  auto bad = data;
  bad.windows[1] = Tensor<float>({2, data.meta.window_length});
  CHECK_THROWS_AS(apply_channel_stats(bad, stats), ShapeError);
  auto fewer = stats;
  fewer.mean.pop_back();
  CHECK_THROWS_AS(apply_channel_stats(data, fewer), ShapeError);
}

TEST_CASE("windows file: bit-exact round trip with metadata") {
  auto d = generate_synthetic(small_spec());
  d.meta.sample_rate = 100.0;
  d.meta.class_names[2] = "walking, fast";
  d.windows[3][5] = -0.0f;
  d.windows[4][6] = std::numeric_limits<float>::denorm_min();
  const auto path = temp_path("roundtrip.cetd");
  save_windows_file(d, path);
  const auto back = load_windows_file(path);
  expect_same(d, back);
  CHECK(std::signbit(back.windows[3][5]));
}

TEST_CASE("windows file: corruption, truncation, bad magic and bad labels are rejected") {
  const auto d = generate_synthetic(small_spec());
  const auto path = temp_path("corrupt.cetd");
  save_windows_file(d, path);
  const auto size = std::filesystem::file_size(path);
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(100);
    f.put('\x7f');
  }
  CHECK_THROWS_WITH_AS(load_windows_file(path), doctest::Contains("checksum"), FormatError);

  save_windows_file(d, path);
  std::filesystem::resize_file(path, size / 2);
  CHECK_THROWS_WITH_AS(load_windows_file(path), doctest::Contains("truncated"), FormatError);

  std::ofstream(path, std::ios::binary) << "NOPE0000000000000000000000000000";
  CHECK_THROWS_WITH_AS(load_windows_file(path), doctest::Contains("magic"), FormatError);

  auto bad = d;
  bad.labels[0] = 6;
  CHECK_THROWS(save_windows_file(bad, path));
  CHECK_THROWS(load_windows_file(temp_path("does_not_exist.cetd")));
}

TEST_CASE("windows file: a label >= num_classes inside the file is rejected") {
  // Build a valid file, then patch the first label and fix the checksum.
  auto d = generate_synthetic(small_spec());
  const auto path = temp_path("badlabel.cetd");
  save_windows_file(d, path);
  std::ifstream in(path, std::ios::binary);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), {});
  in.close();
  const std::size_t header = 4 + 4 * 6;
  const std::size_t label0 = header + d.size() * 3 * 120 * 4;
  bytes[label0] = 9;
  bytes[label0 + 1] = 0;
  // CRC-32 (IEEE) recomputed independently of the library.
  std::uint32_t crc = 0xffffffffu;
  for (std::size_t i = 0; i + 4 < bytes.size(); ++i) {
    crc ^= static_cast<std::uint8_t>(bytes[i]);
    for (int k = 0; k < 8; ++k) crc = (crc >> 1) ^ (0xedb88320u & (0u - (crc & 1u)));
  }
  crc ^= 0xffffffffu;
  for (int i = 0; i < 4; ++i) bytes[bytes.size() - 4 + i] = static_cast<char>(crc >> (8 * i));
  std::ofstream(path, std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  CHECK_THROWS_WITH_AS(load_windows_file(path), doctest::Contains("num_classes"), FormatError);
}

TEST_CASE("csv loading: well-formed rows, ragged rows and non-numeric fields") {
  DatasetMeta meta;
  meta.num_classes = 3;
  meta.channels = 2;
  meta.window_length = 3;
  const auto path = temp_path("two.csv");
  std::ofstream(path) << "# group,label,values\n0,1,1,2,3,4,5,6\n\n1,2,0.5,-1e-3,7,8,9,10\n";
  const auto d = load_csv(path, meta);
  CHECK(d.size() == 2);
  CHECK(d.labels == std::vector<std::uint16_t>{1, 2});
  CHECK(d.groups == std::vector<std::uint16_t>{0, 1});
  CHECK(d.windows[0].at(1, 0) == 4.0f);
  CHECK(d.windows[1].at(0, 1) == -1e-3f);

  const auto rt = temp_path("two.cetd");
  save_windows_file(d, rt);
  expect_same(d, load_windows_file(rt));

  std::ofstream(path) << "0,1,1,2,3,4,5,6\n0,1,1,2,3,4,5\n";
  CHECK_THROWS_WITH_AS(load_csv(path, meta), doctest::Contains("row 2"), FormatError);
  std::ofstream(path) << "0,1,1,2,x,4,5,6\n";
  CHECK_THROWS_WITH_AS(load_csv(path, meta), doctest::Contains("row 1"), FormatError);
  std::ofstream(path) << "0,3,1,2,3,4,5,6\n";
  CHECK_THROWS_WITH_AS(load_csv(path, meta), doctest::Contains("num_classes"), FormatError);
  std::ofstream(path) << "# nothing\n";
  CHECK_THROWS(load_csv(path, meta));
}

TEST_CASE("dataset validation and subsets") {
  auto d = generate_synthetic(small_spec());
  CHECK_NOTHROW(d.validate());
  std::vector<std::size_t> idx = {5, 1};
  const auto s = d.subset(idx);
  CHECK(s.size() == 2);
  CHECK(s.windows[0] == d.windows[5]);
  d.windows[2] = Tensor<float>({3, 119});
  CHECK_THROWS_AS(d.validate(), ShapeError);
  WindowedDataset empty;
  empty.meta.num_classes = 2;
  CHECK_THROWS(empty.validate());
}
