#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cetx/autograd.hpp"

namespace cetx {

struct GradCheckGroup {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
};

struct GradCheckReport {
  std::string subject;
  double tolerance = 1e-4;
  std::vector<GradCheckGroup> groups;
  bool passed = true;
  std::string failure;  // empty unless a non-finite value was found

  double max_rel_error() const;
};

struct GradCheckOptions {
  double tolerance = 1e-4;
  double step = 1e-5;
  std::uint64_t seed = 7;
};

/// |a - n| / max(|a|, |n|, 1e-8)
double relative_error(double analytic, double numeric);

/// Central-difference check of every element of `params` against the
/// gradient produced by `loss_fn`, which must build a scalar on the given
/// tape and bind parameters through Tape::param.
GradCheckReport grad_check_params(std::string subject, std::vector<Parameter<double>*> params,
                                  const std::function<Var<double>(Tape<double>&)>& loss_fn,
                                  const GradCheckOptions& opts = {});

/// Checks an operation on explicit inputs. A non-scalar output is reduced to
/// a scalar with fixed pseudo-random weights so that every output element
/// contributes.
GradCheckReport grad_check_op(
    std::string subject, std::vector<Parameter<double>> inputs,
    const std::function<Var<double>(Tape<double>&, const std::vector<Var<double>>&)>& op,
    const GradCheckOptions& opts = {});

}  // namespace cetx

namespace cetx {

/// Every differentiable op plus a small 3-block multi-exit network, all in
/// double precision. `inject_fault` adds an op with a deliberately wrong
/// backward rule (for testing the checker end to end).
std::vector<GradCheckReport> gradcheck_suite(bool inject_fault = false, const GradCheckOptions& opts = {});

}  // namespace cetx
