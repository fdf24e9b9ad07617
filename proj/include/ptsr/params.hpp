#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "ptsr/tensor.hpp"

namespace ptsr {

/// A named tensor owned by a model. Buffers (trainable == false) are saved in
/// checkpoints but never touched by the optimizer.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
    bool trainable = true;

    Parameter() = default;
    Parameter(std::string n, Tensor v, bool train = true)
        : name(std::move(n)), value(std::move(v)), grad(value.shape()), trainable(train) {}

    void zero_grad() { grad = Tensor(value.shape()); }
};

using ParamRefs = std::vector<Parameter*>;
using ConstParamRefs = std::vector<const Parameter*>;

struct ManifestEntry {
    std::string name;
    Shape shape;
    bool trainable;
    friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};
using Manifest = std::vector<ManifestEntry>;

Manifest make_manifest(const ConstParamRefs& params);
/// Total scalar count over trainable entries.
std::size_t parameter_count(const Manifest& manifest);
std::string manifest_text(const Manifest& manifest);

void zero_grads(const ParamRefs& params);
void zero_values(const ParamRefs& params);
double grad_norm(const Parameter& p);

/// Seeded source for all weight initialization.
using Rng = std::mt19937_64;

Tensor normal_tensor(Shape shape, double stddev, Rng& rng);

}  // namespace ptsr
