#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ptsr/data.hpp"
#include "ptsr/discriminator.hpp"
#include "ptsr/generator.hpp"
#include "ptsr/losses.hpp"
#include "ptsr/metrics.hpp"

namespace ptsr {

struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct TrainConfig {
    double lr0 = 2e-4;
    double beta1 = 0.0;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::size_t plateau_patience = 30;
    double plateau_factor = 0.2;
    double plateau_tolerance = 1e-6;
    std::size_t batch_size = 4;
    std::size_t max_epochs = 200;
    std::size_t steps_per_epoch = 0;  // 0: one pass over the training images
    std::size_t max_steps = 0;        // 0: unlimited
    double clip_norm = 0.0;           // 0: off
    std::size_t checkpoint_every = 10;  // epochs
    std::uint64_t seed = 0;

    void validate() const;
};

struct DataConfig {
    std::string train_split = "train";
    std::string val_split;  // empty: validate on center crops of the training images
    PairMode pair_mode = PairMode::A;
    Augment augment;
};

/// Every tunable of a run. Text form is one `section.key=value` per line.
struct ExperimentConfig {
    int scale = 2;
    ComposeMode compose = ComposeMode::frozen;
    GeneratorConfig generator;
    DiscriminatorConfig discriminator;
    LossConfig loss;
    TrainConfig train;
    DataConfig data;
    MetricOptions metrics;

    ExperimentConfig();

    /// Scale of the pairs the optimizer sees: 2 unless scale 4 is trained
    /// jointly through both passes.
    int training_scale() const { return compose == ComposeMode::joint ? scale : 2; }
    /// The discriminator sees training-scale HR crops.
    void sync_discriminator_geometry();

    void validate() const;
};

using KeyValues = std::map<std::string, std::string>;

KeyValues to_key_values(const ExperimentConfig& cfg);
/// Applies `kv` on top of `base`; unknown keys and malformed values throw
/// ConfigError naming the key.
ExperimentConfig apply_key_values(ExperimentConfig base, const KeyValues& kv);

/// Parses `key=value` lines ('#' comments, blank lines ignored).
KeyValues parse_config_text(const std::string& text);
KeyValues parse_override(const std::string& assignment);
std::string config_text(const ExperimentConfig& cfg);
/// Only the keys that fix parameter shapes and model behaviour.
std::string architecture_text(const ExperimentConfig& cfg);

std::uint64_t fnv1a64(const std::string& bytes);

}  // namespace ptsr
