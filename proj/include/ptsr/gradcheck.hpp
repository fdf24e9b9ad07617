#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ptsr/params.hpp"
#include "ptsr/tensor.hpp"

namespace ptsr {

struct GradCheckOptions {
    double step = 1e-4;  // central-difference step h
    /// Entries per tensor to probe (0 = all). Probed entries are drawn
    /// without replacement from a seeded generator.
    std::size_t max_entries = 0;
    std::uint64_t seed = 7;
    /// Denominator floor: |a - n| / max(|a|, |n|, floor).
    double floor = 1e-6;
};

struct GradCheckResult {
    std::string name;
    double max_rel_error = 0.0;
    double analytic_at_max = 0.0;
    double numeric_at_max = 0.0;
    std::size_t checked = 0;
};

double relative_error(double analytic, double numeric, double floor);

/// Compares `analytic` (gradient of f w.r.t. `values`) with central finite
/// differences of the scalar function `f`, perturbing `values` in place and
/// restoring it afterwards.
GradCheckResult check_gradient(const std::string& name, Tensor& values, const Tensor& analytic,
                               const std::function<double()>& f,
                               const GradCheckOptions& opt = {});

/// Runs check_gradient on every trainable parameter (using Parameter::grad
/// as the analytic gradient).
std::vector<GradCheckResult> check_parameter_gradients(const ParamRefs& params,
                                                       const std::function<double()>& f,
                                                       const GradCheckOptions& opt = {});

double max_error(const std::vector<GradCheckResult>& results);

}  // namespace ptsr
