#include <random>

#include "cetx/gradcheck.hpp"
#include "cetx/model.hpp"
#include "cetx/ops.hpp"

namespace cetx {

namespace {

using V = std::vector<Var<double>>;

Tensor<double> random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(derive_seed(seed, {0x6c}));
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data()) v = u(rng);
  return t;
}

Parameter<double> input(const char* name, Tensor<double> v) { return {name, std::move(v), false}; }

GradCheckReport network_check(const GradCheckOptions& opts) {
  ModelConfig cfg;
  cfg.channels_in = 2;
  cfg.length_in = 64;
  cfg.num_classes = 3;
  cfg.hidden_units = 6;
  cfg.l2_rate = 1e-2;
  cfg.seed = 11;
  cfg.blocks = {{4, 4, 4, 0.0}, {6, 3, 2, 0.2}, {8, 4, 2, 0.0}};
  BasicMultiExitNet<double> net(cfg);
  // Non-trivial values for parameters that start at constants.
  std::uint64_t s = 100;
  for (auto& p : net.parameters()) {
    if (p.name.find("gain") != std::string::npos) p.value = random_tensor(p.value.shape(), ++s, 0.5, 1.5);
    if (p.name.find("shift") != std::string::npos || p.name.find("bias") != std::string::npos) {
      p.value = random_tensor(p.value.shape(), ++s, -0.3, 0.3);
    }
    if (p.name.find("slope") != std::string::npos) p.value = random_tensor(p.value.shape(), ++s, 0.1, 0.4);
  }
  const auto x = random_tensor({2, 64}, 1, -2.0, 2.0);
  std::vector<Parameter<double>*> params;
  for (auto& p : net.parameters()) params.push_back(&p);
  auto loss_fn = [&net, &x](Tape<double>& tape) {
    Rng rng(3);
    auto logits = net.forward_all_exits(tape, x, true, &rng);
    Var<double> total = net.l2_penalty(tape);
    for (std::size_t e = 0; e < logits.size(); ++e) total = add(total, cross_entropy_with_label(logits[e], e % 3));
    return total;
  };
  return grad_check_params("multi_exit_network(3 blocks)", params, loss_fn, opts);
}

}  // namespace

std::vector<GradCheckReport> gradcheck_suite(bool inject_fault, const GradCheckOptions& opts) {
  std::vector<GradCheckReport> r;
  r.push_back(grad_check_op("conv1d",
                            {input("x", random_tensor({3, 13}, 1)), input("w", random_tensor({4, 3, 4}, 2)),
                             input("b", random_tensor({4}, 3))},
                            [](Tape<double>&, const V& v) { return conv1d(v[0], v[1], v[2]); }, opts));
  r.push_back(grad_check_op("dense",
                            {input("x", random_tensor({7}, 4)), input("w", random_tensor({5, 7}, 5)),
                             input("b", random_tensor({5}, 6))},
                            [](Tape<double>&, const V& v) { return dense(v[0], v[1], v[2]); }, opts));
  r.push_back(grad_check_op("max_pool1d", {input("x", random_tensor({2, 11}, 7))},
                            [](Tape<double>&, const V& v) { return max_pool1d(v[0], 4, 4); }, opts));
  r.push_back(grad_check_op("global_avg_pool", {input("x", random_tensor({3, 9}, 8))},
                            [](Tape<double>&, const V& v) { return global_avg_pool(v[0]); }, opts));
  r.push_back(grad_check_op("prelu",
                            {input("x", random_tensor({3, 9}, 9)), input("a", random_tensor({3}, 10, 0.1, 0.4))},
                            [](Tape<double>&, const V& v) { return prelu(v[0], v[1]); }, opts));
  for (auto mode : {NormMode::layer, NormMode::instance}) {
    r.push_back(grad_check_op(mode == NormMode::layer ? "layer_norm" : "instance_norm",
                              {input("x", random_tensor({3, 10}, 11, -2, 3)),
                               input("gain", random_tensor({3}, 12, 0.5, 1.5)), input("shift", random_tensor({3}, 13))},
                              [mode](Tape<double>&, const V& v) { return normalize(v[0], mode, v[1], v[2]); }, opts));
  }
  r.push_back(grad_check_op("dropout", {input("x", random_tensor({2, 50}, 14))},
                            [](Tape<double>&, const V& v) {
                              Rng rng(5);
                              return dropout(v[0], 0.3, true, rng);
                            },
                            opts));
  r.push_back(grad_check_op("softmax", {input("x", random_tensor({6}, 15, -2, 2))},
                            [](Tape<double>&, const V& v) { return softmax(v[0]); }, opts));
  r.push_back(grad_check_op("log_softmax", {input("x", random_tensor({6}, 16, -2, 2))},
                            [](Tape<double>&, const V& v) { return log_softmax(v[0]); }, opts));
  r.push_back(grad_check_op("cross_entropy_with_logits", {input("x", random_tensor({6}, 17, -2, 2))},
                            [](Tape<double>&, const V& v) {
                              Tensor<double> t({6}, {0.1, 0.2, 0.3, 0.2, 0.1, 0.1});
                              return cross_entropy_with_logits(v[0], t);
                            },
                            opts));
  r.push_back(grad_check_op("cross_entropy_with_label", {input("x", random_tensor({6}, 18, -2, 2))},
                            [](Tape<double>&, const V& v) { return cross_entropy_with_label(v[0], 4); }, opts));
  r.push_back(grad_check_op("add", {input("a", random_tensor({4}, 19)), input("b", random_tensor({4}, 20))},
                            [](Tape<double>&, const V& v) { return add(v[0], v[1]); }, opts));
  r.push_back(grad_check_op("mul", {input("a", random_tensor({4}, 21)), input("b", random_tensor({4}, 22))},
                            [](Tape<double>&, const V& v) { return mul(v[0], v[1]); }, opts));
  r.push_back(grad_check_op("scale", {input("a", random_tensor({4}, 23))},
                            [](Tape<double>&, const V& v) { return scale(v[0], -1.7); }, opts));
  r.push_back(grad_check_op("sum", {input("a", random_tensor({2, 3}, 24))},
                            [](Tape<double>&, const V& v) { return sum(v[0]); }, opts));
  r.push_back(grad_check_op("sum_squares", {input("a", random_tensor({2, 3}, 25))},
                            [](Tape<double>&, const V& v) { return sum_squares(v[0]); }, opts));
  r.push_back(network_check(opts));

  if (inject_fault) {
    auto broken = [](Tape<double>& tape, const V& v) {
      auto x = v[0];
      Tensor<double> out(x.value().shape());
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.value()[i] * x.value()[i];
      return tape.push(std::move(out), {x}, [x](Tape<double>& tp, const Tensor<double>& g) {
        auto* gx = tp.grad_sink(x);
        for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i] * tp.value(x)[i];  // should be 2x
      });
    };
    r.push_back(grad_check_op("injected_fault(square)", {input("x", random_tensor({5}, 26))}, broken, opts));
  }
  return r;
}

}  // namespace cetx
