#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <limits>
#include <stdexcept>
#include <vector>

#include "ptsr/config.hpp"
#include "ptsr/data.hpp"

namespace ptsr {

/// A loss or gradient went non-finite; the message names the step and batch.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct AdamMoments {
    std::vector<Tensor> m, v;  // one per trainable parameter, in collect order
    std::uint64_t t = 0;
};

void adam_update(const ParamRefs& params, AdamMoments& state, double lr, const TrainConfig& cfg);

/// Everything needed to continue a run exactly where it stopped.
struct TrainState {
    ExperimentConfig config;
    Generator gen;
    Discriminator disc;
    AdamMoments adam_g, adam_d;
    std::uint64_t epoch = 0;       // completed epochs
    std::uint64_t epoch_step = 0;  // steps done inside the current epoch
    std::uint64_t step = 0;        // total optimizer steps
    double lr = 0.0;
    double best_val = std::numeric_limits<double>::infinity();
    std::uint64_t since_improvement = 0;
    std::uint64_t triggers = 0;
    Rng rng;

    static TrainState create(const ExperimentConfig& cfg);
};

struct StepLosses {
    double l_d = 0.0;
    double l_g = 0.0;  // adversarial generator term
    double l_r = 0.0;
    double total_g = 0.0;
};

/// One discriminator update on (clamped, detached) Y_S vs Y_R, then one
/// generator update on w_adv * L_G + w_rec * L_R. Batch means throughout.
StepLosses train_step(TrainState& state, const std::vector<PairedSample>& batch);

/// Mean reconstruction loss over `pairs` without gradient recording.
double validation_loss(Generator& gen, const std::vector<PairedSample>& pairs, int scale,
                       const LossConfig& loss);

/// Records `val` for one epoch; returns true if the learning rate dropped.
/// Improvement means val < best - tolerance.
bool plateau_schedule(TrainState& state, double val);

/// Fixed validation pairs: one center crop of the generator geometry per
/// image (images smaller than a crop are skipped).
std::vector<PairedSample> validation_pairs(const std::vector<CorpusImage>& images,
                                           const ExperimentConfig& cfg);

struct TrainLoopHooks {
    std::ostream* step_log = nullptr;   // CSV: step,epoch,L_D,L_G,L_R,lr
    std::ostream* epoch_log = nullptr;  // CSV: epoch,val_L_R,lr,improved
    /// Called after each checkpoint-worthy epoch and when the best validation improves.
    std::function<void(const TrainState&, bool is_best)> checkpoint;
};

void write_step_log_header(std::ostream& os);
void write_epoch_log_header(std::ostream& os);

/// Runs epochs until train.max_epochs or train.max_steps. Resumes from the
/// counters in `state`. On a fresh state the epoch-0 validation loss becomes
/// the baseline for the plateau rule.
void run_training(TrainState& state, const PairSampler& sampler,
                  const std::vector<PairedSample>& val, const TrainLoopHooks& hooks = {});

// ---- checkpoints ----

struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Versioned binary: magic, version, config text + hash, architecture hash,
/// counters, RNG state, named tensors (parameters, buffers, Adam moments),
/// trailing checksum. Written to a temporary file and renamed into place.
void save_checkpoint(const TrainState& state, const std::filesystem::path& path);

/// Rebuilds the state from the embedded config. If `expected` is given the
/// stored tensors must fit a model built from it (shape mismatch otherwise)
/// and the architecture keys must agree (mismatching keys are named).
TrainState load_checkpoint(const std::filesystem::path& path,
                           const ExperimentConfig* expected = nullptr);

}  // namespace ptsr
