#include <cmath>
#include <numeric>
#include <random>

#include "cetx/gradcheck.hpp"
#include "cetx/ops.hpp"
#include "doctest.h"

using namespace cetx;

namespace {

Tensor<double> random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data()) v = u(rng);
  return t;
}

Parameter<double> param(const char* name, Tensor<double> v) { return {name, std::move(v), false}; }

}  // namespace

TEST_CASE("conv1d: zero input and zero bias give zero output") {
  Tape<float> tape;
  auto x = tape.constant(Tensor<float>({2, 10}));
  auto w = tape.constant(Tensor<float>({3, 2, 4}, 0.7f));
  auto b = tape.constant(Tensor<float>({3}));
  auto y = conv1d(x, w, b);
  for (auto v : y.value().data()) CHECK(v == 0.0f);
}

TEST_CASE("conv1d: delta kernel at tap K/2 reproduces the input") {
  for (std::size_t k : {1u, 3u, 4u, 5u}) {
    Tape<double> tape;
    auto xv = random_tensor({1, 17}, 3);
    Tensor<double> wv({1, 1, k});
    wv[k / 2] = 1.0;
    auto y = conv1d(tape.constant(xv), tape.constant(wv), tape.constant(Tensor<double>({1})));
    CHECK(y.value() == xv);
  }
}

TEST_CASE("conv1d: same padding keeps length; channel mismatch is rejected") {
  Tape<float> tape;
  auto y = conv1d(tape.constant(Tensor<float>({6, 400})), tape.constant(Tensor<float>({8, 6, 4})),
                  tape.constant(Tensor<float>({8})));
  CHECK(y.shape() == Shape{8, 400});
  CHECK_THROWS_AS(conv1d(tape.constant(Tensor<float>({5, 400})), tape.constant(Tensor<float>({8, 6, 4})),
                         tape.constant(Tensor<float>({8}))),
                  ShapeError);
}

TEST_CASE("conv1d matches a direct padded-sum oracle") {
  const std::size_t cin = 2, cout = 3, k = 4, len = 9;
  auto xv = random_tensor({cin, len}, 11);
  auto wv = random_tensor({cout, cin, k}, 12);
  auto bv = random_tensor({cout}, 13);
  Tape<double> tape;
  auto y = conv1d(tape.constant(xv), tape.constant(wv), tape.constant(bv)).value();
  for (std::size_t c = 0; c < cout; ++c) {
    for (std::size_t i = 0; i < len; ++i) {
      double s = bv[c];
      for (std::size_t j = 0; j < cin; ++j) {
        for (std::size_t kk = 0; kk < k; ++kk) {
          const long src = static_cast<long>(i + kk) - static_cast<long>(k / 2);
          if (src >= 0 && src < static_cast<long>(len)) s += wv[(c * cin + j) * k + kk] * xv[j * len + src];
        }
      }
      CHECK(y[c * len + i] == doctest::Approx(s).epsilon(1e-12));
    }
  }
}

TEST_CASE("max_pool1d: ceil-mode lengths and window maximum") {
  Tape<float> tape;
  CHECK(max_pool1d(tape.constant(Tensor<float>({1, 400})), 4, 4).shape() == Shape{1, 100});
  CHECK(max_pool1d(tape.constant(Tensor<float>({1, 25})), 4, 4).shape() == Shape{1, 7});
  auto y = max_pool1d(tape.constant(Tensor<float>({1, 4}, {1, 3, 2, 0})), 4, 4);
  CHECK(y.value()[0] == 3.0f);
  CHECK_THROWS_AS(max_pool1d(tape.constant(Tensor<float>({1, 0})), 4, 4), ShapeError);
}

TEST_CASE("max_pool1d: backward conserves gradient mass and breaks ties to lowest index") {
  Tape<double> tape;
  auto x = tape.leaf(Tensor<double>({1, 6}, {2, 5, 5, 1, 7, 7}));
  auto y = max_pool1d(x, 4, 4);
  auto g = random_tensor(y.shape(), 5, 0.1, 2.0);
  auto loss = sum(mul(y, tape.constant(g)));
  tape.backward(loss);
  const auto& gx = tape.grad(x);
  CHECK(gx[1] == g[0]);
  CHECK(gx[2] == 0.0);
  CHECK(gx[4] == g[1]);
  CHECK(gx[5] == 0.0);
  const double in_mass = std::accumulate(gx.data().begin(), gx.data().end(), 0.0);
  const double out_mass = std::accumulate(g.data().begin(), g.data().end(), 0.0);
  CHECK(in_mass == doctest::Approx(out_mass).epsilon(1e-15));
}

TEST_CASE("global_avg_pool") {
  Tape<double> tape;
  auto x = tape.leaf(Tensor<double>({2, 2}, {5, 5, 1, 3}));
  auto y = global_avg_pool(x);
  CHECK(y.value()[0] == 5.0);
  CHECK(y.value()[1] == 2.0);
  tape.backward(sum(y));
  for (auto g : tape.grad(x).data()) CHECK(g == 0.5);
}

TEST_CASE("dense: identity and bias-only cases") {
  Tape<double> tape;
  auto xv = random_tensor({4}, 1);
  Tensor<double> eye({4, 4});
  for (std::size_t i = 0; i < 4; ++i) eye.at(i, i) = 1.0;
  CHECK(dense(tape.constant(xv), tape.constant(eye), tape.constant(Tensor<double>({4}))).value() == xv);
  auto b = random_tensor({3}, 2);
  CHECK(dense(tape.constant(xv), tape.constant(Tensor<double>({3, 4})), tape.constant(b)).value() == b);
  auto y = dense(tape.constant(Tensor<double>({64})), tape.constant(Tensor<double>({32, 64})),
                 tape.constant(Tensor<double>({32})));
  CHECK(y.shape() == Shape{32});
  CHECK_THROWS_AS(dense(tape.constant(Tensor<double>({63})), tape.constant(Tensor<double>({32, 64})),
                        tape.constant(Tensor<double>({32}))),
                  ShapeError);
}

TEST_CASE("prelu values and slope derivative") {
  Tape<double> tape;
  auto x = tape.constant(Tensor<double>({2}, {2.0, -2.0}));
  auto a = tape.leaf(Tensor<double>({2}, 0.25));
  auto y = prelu(x, a);
  CHECK(y.value()[0] == 2.0);
  CHECK(y.value()[1] == -0.5);
  tape.backward(sum(y));
  CHECK(tape.grad(a)[0] == 0.0);
  CHECK(tape.grad(a)[1] == -2.0);
}

TEST_CASE("normalize: standardization per mode") {
  Tape<double> tape;
  auto ones = tape.constant(Tensor<double>({2}, 1.0));
  auto zeros = tape.constant(Tensor<double>({2}));

  auto c = normalize(tape.constant(Tensor<double>({2, 8}, 3.0)), NormMode::instance, ones, zeros);
  for (auto v : c.value().data()) CHECK(v == 0.0);

  // Channel with mean 5 and std 2.
  Tensor<double> xv({2, 4}, {3, 7, 3, 7, 1, 2, 3, 4});
  auto y = normalize(tape.constant(xv), NormMode::instance, ones, zeros).value();
  double m = 0, v = 0;
  for (int i = 0; i < 4; ++i) m += y[i] / 4;
  for (int i = 0; i < 4; ++i) v += (y[i] - m) * (y[i] - m) / 4;
  CHECK(std::abs(m) <= 1e-6);
  CHECK(std::abs(v - 1.0) <= 1e-4);

  auto xl = random_tensor({3, 20}, 9, -4, 9);
  auto yl = normalize(tape.constant(xl), NormMode::layer, tape.constant(Tensor<double>({3}, 1.0)),
                      tape.constant(Tensor<double>({3}))).value();
  double ml = 0;
  for (auto e : yl.data()) ml += e / 60.0;
  CHECK(std::abs(ml) <= 1e-6);
}

TEST_CASE("dropout: identity cases and drop rate concentration") {
  Tape<float> tape;
  Rng rng(1);
  auto x = tape.constant(Tensor<float>({100000}, 1.0f));
  CHECK(dropout(x, 0.0, true, rng).value() == x.value());
  CHECK(dropout(x, 0.5, false, rng).value() == x.value());
  auto y = dropout(x, 0.1, true, rng).value();
  std::size_t zeros = 0;
  for (auto v : y.data()) {
    if (v == 0.0f) {
      ++zeros;
    } else {
      CHECK(v == doctest::Approx(1.0 / 0.9));
    }
  }
  CHECK(std::abs(static_cast<double>(zeros) / 1e5 - 0.1) <= 0.01);
}

TEST_CASE("softmax: uniform, shift invariance, closed form") {
  Tape<double> tape;
  auto u = softmax(tape.constant(Tensor<double>({4}, 2.0))).value();
  for (auto v : u.data()) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
  auto lv = random_tensor({6}, 4, -3, 3);
  auto shifted = lv;
  for (auto& v : shifted.data()) v += 100.0;
  auto p = softmax_values(lv);
  auto q = softmax_values(shifted);
  double total = 0;
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(p[i] == doctest::Approx(q[i]).epsilon(1e-12));
    total += p[i];
  }
  CHECK(std::abs(total - 1.0) <= 1e-6);
  auto two = softmax_values(Tensor<double>({2}, {0.0, std::log(3.0)}));
  CHECK(two[0] == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(two[1] == doctest::Approx(0.75).epsilon(1e-14));
}

TEST_CASE("cross_entropy_with_logits: closed forms and p - y gradient") {
  Tape<double> tape;
  Tensor<double> target({6});
  target[2] = 1.0;
  auto uni = cross_entropy_with_logits(tape.constant(Tensor<double>({6})), target);
  CHECK(uni.value().item() == doctest::Approx(std::log(6.0)).epsilon(1e-14));
  Tensor<double> strong({6});
  strong[2] = 60.0;
  CHECK(cross_entropy_with_logits(tape.constant(strong), target).value().item() < 1e-20);

  auto lv = random_tensor({6}, 8, -2, 2);
  auto logits = tape.leaf(lv);
  tape.backward(cross_entropy_with_logits(logits, target));
  auto p = softmax_values(lv);
  for (std::size_t i = 0; i < 6; ++i) CHECK(tape.grad(logits)[i] == doctest::Approx(p[i] - target[i]).epsilon(1e-12));
}

TEST_CASE("backward: sum of squares, unused parameters, non-scalar rejection") {
  Tape<double> tape;
  auto xv = random_tensor({5}, 21);
  Parameter<double> used("used", xv, false);
  Parameter<double> unused("unused", Tensor<double>({3}, 1.0), false);
  auto x = tape.param(used);
  tape.param(unused);
  tape.backward(sum_squares(x));
  tape.accumulate_param_grads();
  for (std::size_t i = 0; i < 5; ++i) CHECK(used.grad[i] == 2 * xv[i]);
  for (auto g : unused.grad.data()) CHECK(g == 0.0);
  CHECK_THROWS_AS(tape.backward(x), ShapeError);
}

TEST_CASE("backward: accumulation over repeated use of one parameter") {
  Tape<double> tape;
  Parameter<double> p("p", Tensor<double>({2}, {1.5, -2.0}), false);
  auto a = tape.param(p);
  auto b = tape.param(p);
  tape.backward(sum(add(mul(a, a), scale(b, 3.0))));
  tape.accumulate_param_grads();
  CHECK(p.grad[0] == 2 * 1.5 + 3.0);
  CHECK(p.grad[1] == 2 * -2.0 + 3.0);
}

TEST_CASE("tape replay is deterministic") {
  auto run = [] {
    Tape<float> tape;
    Rng rng(99);
    Parameter<float> w("w", Tensor<float>({4, 3, 4}, 0.1f), true);
    Tensor<float> x({3, 32});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::sin(static_cast<float>(i));
    auto y = dropout(conv1d(tape.constant(x), tape.param(w), tape.constant(Tensor<float>({4}))), 0.3, true, rng);
    auto loss = sum_squares(y);
    tape.backward(loss);
    tape.accumulate_param_grads();
    return std::make_pair(loss.value().item(), w.grad);
  };
  auto a = run();
  auto b = run();
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
}

TEST_CASE("gradient checks for every differentiable op and a 3-block network (64-bit)") {
  const auto reports = gradcheck_suite();
  CHECK(reports.size() >= 18);
  for (const auto& r : reports) {
    INFO(r.subject << " max rel error " << r.max_rel_error());
    CHECK(r.passed);
    CHECK(r.max_rel_error() < 1e-4);
  }
}

TEST_CASE("gradcheck suite fails when a fault is injected") {
  const auto reports = gradcheck_suite(true);
  CHECK_FALSE(reports.back().passed);
  for (std::size_t i = 0; i + 1 < reports.size(); ++i) CHECK(reports[i].passed);
}

TEST_CASE("grad_check detects a corrupted backward rule") {
  auto broken = [](Tape<double>& tape, const std::vector<Var<double>>& v) {
    auto x = v[0];
    Tensor<double> out(x.value().shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.value()[i] * x.value()[i];
    return tape.push(std::move(out), {x}, [x](Tape<double>& tp, const Tensor<double>& g) {
      auto* gx = tp.grad_sink(x);
      // Wrong: derivative of x^2 is 2x.
      for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i] * tp.value(x)[i];
    });
  };
  auto r = grad_check_op("broken_square", {param("x", random_tensor({5}, 3))}, broken);
  CHECK_FALSE(r.passed);
  CHECK(r.max_rel_error() > 0.1);
}

TEST_CASE("grad_check reports non-finite values with their location") {
  auto log_op = [](Tape<double>& tape, const std::vector<Var<double>>& v) {
    auto x = v[0];
    Tensor<double> out(x.value().shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(x.value()[i]);
    return tape.push(std::move(out), {x}, [x](Tape<double>& tp, const Tensor<double>& g) {
      auto* gx = tp.grad_sink(x);
      for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i] / tp.value(x)[i];
    });
  };
  auto r = grad_check_op("log", {param("x", Tensor<double>({2}, {1.0, -1.0}))}, log_op);
  CHECK_FALSE(r.passed);
  CHECK(r.failure.find("non-finite") != std::string::npos);
}
