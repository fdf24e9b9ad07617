#include "ptsr/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace ptsr {

double relative_error(double analytic, double numeric, double floor) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
    return std::abs(analytic - numeric) / denom;
}

GradCheckResult check_gradient(const std::string& name, Tensor& values, const Tensor& analytic,
                               const std::function<double()>& f, const GradCheckOptions& opt) {
    if (analytic.shape() != values.shape()) {
        throw ShapeError("check_gradient: analytic gradient shape mismatch for " + name);
    }
    std::vector<std::size_t> idx(values.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (opt.max_entries != 0 && opt.max_entries < idx.size()) {
        Rng rng(opt.seed);
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(opt.max_entries);
        std::sort(idx.begin(), idx.end());
    }
    GradCheckResult res{name};
    for (std::size_t i : idx) {
        const double saved = values[i];
        values[i] = saved + opt.step;
        const double fp = f();
        values[i] = saved - opt.step;
        const double fm = f();
        values[i] = saved;
        const double numeric = (fp - fm) / (2.0 * opt.step);
        const double err = relative_error(analytic[i], numeric, opt.floor);
        if (err >= res.max_rel_error) {
            res.max_rel_error = err;
            res.analytic_at_max = analytic[i];
            res.numeric_at_max = numeric;
        }
        ++res.checked;
    }
    return res;
}

std::vector<GradCheckResult> check_parameter_gradients(const ParamRefs& params,
                                                       const std::function<double()>& f,
                                                       const GradCheckOptions& opt) {
    std::vector<GradCheckResult> out;
    for (Parameter* p : params) {
        if (!p->trainable) continue;
        const Tensor analytic = p->grad;
        out.push_back(check_gradient(p->name, p->value, analytic, f, opt));
    }
    return out;
}

double max_error(const std::vector<GradCheckResult>& results) {
    double m = 0.0;
    for (const auto& r : results) m = std::max(m, r.max_rel_error);
    return m;
}

}  // namespace ptsr
