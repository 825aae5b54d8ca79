#include "cetx/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>

#include "cetx/ops.hpp"

namespace cetx {

double GradCheckReport::max_rel_error() const {
  double m = 0;
  for (const auto& g : groups) m = std::max(m, g.max_rel_error);
  return m;
}

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

namespace {

double eval_loss(const std::function<Var<double>(Tape<double>&)>& loss_fn) {
  Tape<double> tape;
  tape.set_recording(false);
  return loss_fn(tape).value().item();
}

}  // namespace

GradCheckReport grad_check_params(std::string subject, std::vector<Parameter<double>*> params,
                                  const std::function<Var<double>(Tape<double>&)>& loss_fn,
                                  const GradCheckOptions& opts) {
  GradCheckReport report;
  report.subject = std::move(subject);
  report.tolerance = opts.tolerance;

  for (auto* p : params) p->zero_grad();
  {
    Tape<double> tape;
    auto loss = loss_fn(tape);
    if (!std::isfinite(loss.value().item())) {
      report.passed = false;
      report.failure = report.subject + ": non-finite loss";
      return report;
    }
    tape.backward(loss);
    tape.accumulate_param_grads();
  }

  for (auto* p : params) {
    GradCheckGroup group{p->name, 0.0, 0, p->value.size()};
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double orig = p->value[i];
      p->value[i] = orig + opts.step;
      const double up = eval_loss(loss_fn);
      p->value[i] = orig - opts.step;
      const double down = eval_loss(loss_fn);
      p->value[i] = orig;
      const double numeric = (up - down) / (2.0 * opts.step);
      const double analytic = p->grad[i];
      if (!std::isfinite(numeric) || !std::isfinite(analytic)) {
        report.passed = false;
        report.failure = report.subject + ": non-finite gradient at " + p->name + "[" +
                         std::to_string(i) + "]";
        group.max_rel_error = INFINITY;
        group.worst_index = i;
        break;
      }
      const double err = relative_error(analytic, numeric);
      if (err > group.max_rel_error) {
        group.max_rel_error = err;
        group.worst_index = i;
      }
    }
    if (group.max_rel_error >= opts.tolerance) report.passed = false;
    report.groups.push_back(group);
  }
  return report;
}

GradCheckReport grad_check_op(
    std::string subject, std::vector<Parameter<double>> inputs,
    const std::function<Var<double>(Tape<double>&, const std::vector<Var<double>>&)>& op,
    const GradCheckOptions& opts) {
  // Output weights are fixed on the first evaluation and reused afterwards.
  auto weights = std::make_shared<Tensor<double>>();
  auto wrapped = [&inputs, &op, weights, &opts](Tape<double>& tape) {
    std::vector<Var<double>> vars;
    vars.reserve(inputs.size());
    for (auto& p : inputs) vars.push_back(tape.param(p));
    auto out = op(tape, vars);
    if (out.value().size() == 1 && out.value().rank() == 0) return out;
    if (weights->empty()) {
      Rng rng(opts.seed);
      std::uniform_real_distribution<double> u(0.5, 1.5);
      *weights = Tensor<double>(out.value().shape());
      for (auto& w : weights->data()) w = u(rng);
    }
    return sum(mul(out, tape.constant(*weights)));
  };
  std::vector<Parameter<double>*> ptrs;
  for (auto& p : inputs) ptrs.push_back(&p);
  return grad_check_params(std::move(subject), std::move(ptrs), wrapped, opts);
}

}  // namespace cetx
