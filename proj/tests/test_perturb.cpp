#include <cmath>
#include <map>
#include <random>

#include "cetx/perturb.hpp"
#include "doctest.h"

using namespace cetx;

namespace {

Tensor<float> ramp(std::size_t c, std::size_t len) {
  Tensor<float> x({c, len});
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t t = 0; t < len; ++t) x.at(ch, t) = std::sin(0.05f * static_cast<float>(t)) + static_cast<float>(ch) + 1.5f;
  }
  return x;
}

double mean_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

TEST_CASE("additive noise: zero sigma is the identity; moments of the noise") {
  const auto x = ramp(3, 400);
  Rng rng(1);
  CHECK(additive_noise(x, 0.0, rng) == x);

  // 10^5 elements: 250 windows of 1 x 400.
  std::vector<double> diffs;
  Rng r2(2);
  for (int i = 0; i < 250; ++i) {
    const auto w = ramp(1, 400);
    const auto y = additive_noise(w, 0.2, r2);
    CHECK(y.shape() == w.shape());
    for (std::size_t j = 0; j < w.size(); ++j) diffs.push_back(static_cast<double>(y[j]) - w[j]);
  }
  REQUIRE(diffs.size() == 100000);
  CHECK(std::abs(std_of(diffs) - 0.2) < 0.01);
  CHECK(std::abs(mean_of(diffs)) < 0.005);  // 4 standard errors
}

TEST_CASE("multiplicative scale: one scalar per channel with mean 1") {
  const auto x = ramp(3, 50);
  Rng rng(3);
  CHECK(multiplicative_scale(x, 0.0, rng) == x);

  Tensor<float> c({1, 20}, 2.0f);
  Rng r2(4);
  const auto y = multiplicative_scale(c, 0.2, r2);
  for (std::size_t t = 1; t < 20; ++t) CHECK(y.at(0, t) == y.at(0, 0));

  Rng r3(5);
  const auto z = multiplicative_scale(x, 0.2, r3);
  for (std::size_t ch = 0; ch < 3; ++ch) {
    const double ratio = static_cast<double>(z.at(ch, 0)) / x.at(ch, 0);
    for (std::size_t t = 1; t < 50; ++t) {
      CHECK(static_cast<double>(z.at(ch, t)) / x.at(ch, t) == doctest::Approx(ratio).epsilon(1e-5));
    }
  }

  std::vector<double> scales;
  Tensor<float> ones({1, 1}, 1.0f);
  Rng r4(6);
  for (int i = 0; i < 20000; ++i) scales.push_back(multiplicative_scale(ones, 0.2, r4)[0]);
  CHECK(std::abs(mean_of(scales) - 1.0) < 0.006);
  CHECK(std::abs(std_of(scales) - 0.2) < 0.006);
}

TEST_CASE("time warp: positions are strictly increasing with fixed endpoints") {
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    Rng rng(seed);
    const double sigma = seed % 2 ? 0.3 : 1.5;  // large sigma exercises the positive clamp
    const std::size_t knots = 2 + seed % 6;
    const auto pos = warp_positions(400, sigma, knots, rng);
    REQUIRE(pos.size() == 400);
    CHECK(pos.front() == 0.0);
    CHECK(pos.back() == 399.0);
    bool increasing = true;
    for (std::size_t t = 1; t < pos.size(); ++t) increasing = increasing && pos[t] > pos[t - 1];
    CHECK(increasing);
  }
}

TEST_CASE("time warp: zero sigma is an exact identity; constants are preserved") {
  const auto x = ramp(3, 400);
  Rng rng(7);
  CHECK(time_warp(x, 0.0, 4, rng) == x);
  Rng r2(8);
  const auto pos = warp_positions(400, 0.0, 4, r2);
  for (std::size_t t = 0; t < 400; ++t) CHECK(pos[t] == static_cast<double>(t));

  Tensor<float> c({2, 300}, -0.75f);
  Rng r3(9);
  const auto y = time_warp(c, 0.3, 4, r3);
  CHECK(y.shape() == c.shape());
  for (auto v : y.data()) CHECK(v == doctest::Approx(-0.75f).epsilon(1e-6));

  Rng r4(10);
  const auto z = time_warp(x, 0.3, 4, r4);
  CHECK(z.shape() == x.shape());
  CHECK_FALSE(z == x);
  // Endpoints map to endpoints.
  for (std::size_t ch = 0; ch < 3; ++ch) {
    CHECK(z.at(ch, 0) == x.at(ch, 0));
    CHECK(z.at(ch, 399) == x.at(ch, 399));
  }
}

TEST_CASE("time warp: each channel gets its own curve") {
  Tensor<float> x({2, 200});
  for (std::size_t t = 0; t < 200; ++t) x.at(0, t) = x.at(1, t) = static_cast<float>(t);
  Rng rng(11);
  const auto y = time_warp(x, 0.3, 4, rng);
  bool differs = false;
  for (std::size_t t = 0; t < 200; ++t) differs = differs || y.at(0, t) != y.at(1, t);
  CHECK(differs);
}

TEST_CASE("mask: exactly mask_length steps zeroed in every channel, rest untouched") {
  const auto x = ramp(3, 400);
  for (std::size_t len : {1u, 100u, 399u}) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      Rng rng(seed);
      const auto y = mask_segment(x, len, rng);
      std::size_t zeros = 0, changed = 0;
      std::vector<std::size_t> zero_cols;
      for (std::size_t ch = 0; ch < 3; ++ch) {
        for (std::size_t t = 0; t < 400; ++t) {
          if (y.at(ch, t) == 0.0f) {
            ++zeros;
            if (ch == 0) zero_cols.push_back(t);
          } else if (y.at(ch, t) != x.at(ch, t)) {
            ++changed;
          }
        }
      }
      CHECK(zeros == 3 * len);
      CHECK(changed == 0);
      REQUIRE(zero_cols.size() == len);
      CHECK(zero_cols.back() - zero_cols.front() == len - 1);  // contiguous
      for (std::size_t ch = 1; ch < 3; ++ch) {
        for (auto t : zero_cols) CHECK(y.at(ch, t) == 0.0f);  // shared start
      }
    }
  }
  Rng rng(0);
  CHECK_THROWS(mask_segment(x, 400, rng));
  CHECK_THROWS(mask_segment(x, 0, rng));
}

TEST_CASE("config validation names the field") {
  PerturbationConfig cfg;
  CHECK_NOTHROW(cfg.validate(400));
  CHECK_THROWS_WITH_AS(cfg.validate(100), doctest::Contains("perturb.mask_length"), ConfigError);
  cfg.enabled.clear();
  CHECK_THROWS_WITH_AS(cfg.validate(400), doctest::Contains("perturb.enabled"), ConfigError);
  cfg = {};
  cfg.warp_sigma = -1;
  CHECK_THROWS_AS(cfg.validate(400), ConfigError);
  CHECK(parse_perturb_kind("warp") == PerturbKind::warp);
  CHECK_THROWS_AS(parse_perturb_kind("jitter"), ConfigError);
}

TEST_CASE("random_perturb: selection frequencies are uniform over enabled kinds") {
  PerturbationConfig cfg;
  cfg.mask_length = 10;
  std::map<PerturbKind, int> counts;
  const Tensor<float> x({1, 20}, 1.0f);
  for (std::uint64_t i = 0; i < 10000; ++i) {
    PerturbKind k{};
    perturb_example(x, cfg, 42, 3, i, &k);
    ++counts[k];
  }
  REQUIRE(counts.size() == 4);
  for (const auto& [kind, n] : counts) {
    INFO(to_string(kind));
    CHECK(std::abs(n / 10000.0 - 0.25) <= 0.02);
  }
}

TEST_CASE("random_perturb: deterministic per (seed, epoch, index) and order-preserving") {
  PerturbationConfig cfg;
  std::vector<Tensor<float>> batch;
  for (int i = 0; i < 8; ++i) batch.push_back(ramp(3, 400));
  std::vector<PerturbKind> k1, k2;
  const auto a = random_perturb(batch, cfg, 7, 2, 100, &k1);
  const auto b = random_perturb(batch, cfg, 7, 2, 100, &k2);
  CHECK(a == b);
  CHECK(k1 == k2);
  // Example i only depends on its own index.
  for (std::size_t i = 0; i < batch.size(); ++i) CHECK(a[i] == perturb_example(batch[i], cfg, 7, 2, 100 + i));
  const auto c = random_perturb(batch, cfg, 7, 3, 100);
  CHECK_FALSE(a == c);

  cfg.enabled = {PerturbKind::additive};
  std::vector<PerturbKind> kinds;
  random_perturb(batch, cfg, 1, 0, 0, &kinds);
  for (auto k : kinds) CHECK(k == PerturbKind::additive);
}
