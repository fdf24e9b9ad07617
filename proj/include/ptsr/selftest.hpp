#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "ptsr/config.hpp"

namespace ptsr::selftest {

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
    double seconds = 0.0;
};

/// merge(split(x)) == x bit-exactly on `images_per_size` random images for
/// each side in {8, 16, 64, 256}, k = 8.
CheckResult patch_roundtrip(std::size_t images_per_size = 250);

/// Central differences (h = 1e-4) against analytic gradients for a tiny
/// transformer stack, patch translator, generator (2x and 4x),
/// discriminator and the total generator loss.
CheckResult gradients();

/// L_R invariance to X_up, L_R(Y, Y) = 0, BCE(0.5) = ln 2, 0.4/0.6 weighting.
CheckResult loss_identities();

/// Zeroed translator stacks: 2x is clamped bilinear, 4x is bilinear twice.
CheckResult residual_identity();

/// One parameter set serves both scales; 4x is 2x applied twice.
CheckResult weight_sharing();

/// 128 -> 256 -> 512 with F1..F4 at H, H/2, H, 2H.
CheckResult shape_manifest();

/// PSNR/SSIM fixed points and agreement with scalar-loop oracles.
CheckResult metric_oracles();

/// Flat validation stream: lr 2e-4 -> 4e-5 at epoch 30, 8e-6 at epoch 60.
CheckResult plateau_schedule();

/// Single-thread fixed-seed repeatability and checkpoint resume over
/// `steps` steps, using files under `scratch`.
CheckResult determinism_and_resume(const std::filesystem::path& scratch, std::size_t steps = 10);

/// 64 x 64 synthetic test card: smooth shading, a disk, diagonal stripes.
Image test_card();

struct OverfitReport {
    double first_l_r = 0.0;
    double last_l_r = 0.0;
    double psnr_db = 0.0;
    double bicubic_psnr_db = 0.0;
    double seconds = 0.0;
};

/// Trains on a single HR image (one aligned pair, batch 1) for `steps` steps.
OverfitReport overfit(const ExperimentConfig& cfg, const Image& hr, std::size_t steps,
                      const std::function<void(std::size_t, double)>& progress = {});

/// Every check above except the overfit run.
std::vector<CheckResult> run_all(const std::filesystem::path& scratch,
                                 const std::function<void(const CheckResult&)>& report = {});

}  // namespace ptsr::selftest
