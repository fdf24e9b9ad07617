// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <unistd.h>

#include "ptsr/config.hpp"
#include "ptsr/selftest.hpp"

namespace fs = std::filesystem;
namespace st = ptsr::selftest;

namespace {

struct Criterion {
    int id;
    std::string title;
    double limit_s;  // 0: no wall-clock limit
    std::function<st::CheckResult()> run;
};

// Single 64x64 image, scale 2, depth 3, batch 1, default (fixed) seeds.
st::CheckResult overfit_check() {
    ptsr::ExperimentConfig cfg;
    cfg.generator.transformer.depth = 3;
    cfg.scale = 2;
    cfg.train.batch_size = 1;
    cfg.train.lr0 = 1e-3;
    cfg.sync_discriminator_geometry();
    cfg.validate();
    const std::size_t steps = 300;
    const auto rep = st::overfit(cfg, st::test_card(), steps, [](std::size_t s, double l_r) {
        if (s == 1 || s % 50 == 0) std::cerr << fmt::format("  overfit step {:3d}  L_R {:.5f}\n", s, l_r);
    });
    const double drop = 1.0 - rep.last_l_r / rep.first_l_r;
    const double gain = rep.psnr_db - rep.bicubic_psnr_db;
    st::CheckResult r;
    r.name = "overfit";
    r.passed = drop >= 0.5 && gain >= 3.0;
    r.detail = fmt::format("L_R {:.5f} -> {:.5f} ({:.1f}% drop, need 50%); PSNR {:.2f} dB vs bicubic "
                           "{:.2f} dB ({:+.2f} dB, need +3)",
                           rep.first_l_r, rep.last_l_r, 100.0 * drop, rep.psnr_db,
                           rep.bicubic_psnr_db, gain);
    r.seconds = rep.seconds;
    return r;
}

}  // namespace

int main(int argc, char** argv) {
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

    const fs::path scratch = fs::temp_directory_path() / fmt::format("ptsr_acceptance_{}", ::getpid());
    fs::create_directories(scratch);

    const std::vector<Criterion> criteria = {
        {1, "patch roundtrip", 10.0, [] { return st::patch_roundtrip(250); }},
        {2, "gradient correctness", 120.0, [] { return st::gradients(); }},
        {3, "loss identities", 0.0, [] { return st::loss_identities(); }},
        {4, "residual identity", 0.0, [] { return st::residual_identity(); }},
        {5, "weight sharing", 0.0, [] { return st::weight_sharing(); }},
        {6, "shape manifest", 0.0, [] { return st::shape_manifest(); }},
        {7, "overfit smoke test", 600.0, overfit_check},
        {8, "metric oracles", 0.0, [] { return st::metric_oracles(); }},
        {9, "plateau schedule", 0.0, [] { return st::plateau_schedule(); }},
        {10, "determinism and resume", 0.0, [&] { return st::determinism_and_resume(scratch, 10); }},
    };

    int failed = 0;
    for (const auto& c : criteria) {
        if (!only.empty() && !only.contains(c.id)) continue;
        st::CheckResult r;
        try {
            r = c.run();
        } catch (const std::exception& e) {
            r.passed = false;
            r.detail = fmt::format("threw: {}", e.what());
        }
        std::string detail = r.detail;
        if (c.limit_s > 0 && r.seconds >= c.limit_s) {
            r.passed = false;
            detail += fmt::format("; over the {:.0f} s budget", c.limit_s);
        }
        if (!r.passed) ++failed;
        std::cout << fmt::format("criterion {:2d} {}: {} ({:.2f} s) {}\n", c.id, c.title,
                                 r.passed ? "PASS" : "FAIL", r.seconds, detail)
                  << std::flush;
    }
    std::error_code ec;
    fs::remove_all(scratch, ec);
    std::cout << (failed == 0 ? "all criteria passed\n"
                              : fmt::format("{} criterion(s) failed\n", failed));
    return failed == 0 ? 0 : 1;
}
