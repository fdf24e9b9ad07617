#include "ptsr/params.hpp"

#include <cmath>

#include <fmt/format.h>

namespace ptsr {

Manifest make_manifest(const ConstParamRefs& params) {
    Manifest m;
    m.reserve(params.size());
    for (const Parameter* p : params) m.push_back({p->name, p->value.shape(), p->trainable});
    return m;
}

std::size_t parameter_count(const Manifest& manifest) {
    std::size_t total = 0;
    for (const auto& e : manifest)
        if (e.trainable) total += shape_numel(e.shape);
    return total;
}

std::string manifest_text(const Manifest& manifest) {
    std::string out;
    for (const auto& e : manifest)
        out += fmt::format("{} {}{}\n", e.name, shape_str(e.shape), e.trainable ? "" : " buffer");
    return out;
}

void zero_grads(const ParamRefs& params) {
    for (Parameter* p : params) p->zero_grad();
}

void zero_values(const ParamRefs& params) {
    for (Parameter* p : params) p->value.fill(0.0);
}

double grad_norm(const Parameter& p) {
    double s = 0.0;
    for (double g : p.grad.data()) s += g * g;
    return std::sqrt(s);
}

Tensor normal_tensor(Shape shape, double stddev, Rng& rng) {
    Tensor t(std::move(shape));
    std::normal_distribution<double> dist(0.0, stddev);
    for (double& v : t.data()) v = dist(rng);
    return t;
}

}  // namespace ptsr
