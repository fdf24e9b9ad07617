#include "ptsr/selftest.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>

#include <fmt/format.h>
#include <omp.h>

#include "ptsr/gradcheck.hpp"
#include "ptsr/patch_ops.hpp"
#include "ptsr/training.hpp"

namespace ptsr::selftest {

namespace {

using Clock = std::chrono::steady_clock;

Tensor uniform(Shape shape, Rng& rng, double lo = 0.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    std::uniform_real_distribution<double> dist(lo, hi);
    for (double& v : t.data()) v = dist(rng);
    return t;
}

void randomize(const ParamRefs& params, double stddev, std::uint64_t seed) {
    Rng rng(seed);
    for (Parameter* p : params)
        if (p->trainable) p->value = normal_tensor(p->value.shape(), stddev, rng);
}

/// Collects failures; a check passes when none were recorded.
class Failures {
public:
    void expect(bool ok, const std::string& what) {
        if (!ok) msgs_.push_back(what);
    }
    bool empty() const { return msgs_.empty(); }
    std::string text() const {
        std::string out;
        for (const auto& m : msgs_) out += (out.empty() ? "" : "; ") + m;
        return out;
    }

private:
    std::vector<std::string> msgs_;
};

template <typename Body>
CheckResult timed(const std::string& name, Body body) {
    const auto t0 = Clock::now();
    CheckResult r{name, false, {}, 0.0};
    try {
        body(r);
    } catch (const std::exception& e) {
        r.passed = false;
        r.detail = fmt::format("exception: {}", e.what());
    }
    r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    return r;
}

TransformerConfig mini_transformer(std::size_t depth = 1) {
    TransformerConfig cfg;
    cfg.depth = depth;
    cfg.heads = 3;
    cfg.mlp_ratio = 1.0;
    return cfg;
}

GeneratorConfig mini_generator() {
    GeneratorConfig cfg;
    cfg.lr_height = cfg.lr_width = 4;
    cfg.k = 2;
    cfg.transformer = mini_transformer();
    cfg.seed = 3;
    return cfg;
}

ExperimentConfig mini_experiment() {
    ExperimentConfig cfg;
    cfg.generator.lr_height = cfg.generator.lr_width = 4;
    cfg.generator.k = 2;
    cfg.generator.transformer.depth = 2;
    cfg.generator.transformer.heads = 3;
    cfg.generator.transformer.mlp_ratio = 1.0;
    cfg.discriminator.k = 4;
    cfg.discriminator.encoder.dim = 8;
    cfg.discriminator.encoder.heads = 2;
    cfg.discriminator.encoder.depth = 1;
    cfg.discriminator.encoder.mlp_ratio = 2.0;
    cfg.train.batch_size = 2;
    cfg.train.steps_per_epoch = 3;
    cfg.train.seed = 11;
    cfg.sync_discriminator_geometry();
    return cfg;
}

double weighted_sum(const ad::Var& y, const Tensor& w) {
    return ad::sum(ad::mul(y, ad::constant(w))).value()[0];
}

/// Runs the parameter and input checks for `forward` and folds the worst
/// relative error into `worst`.
void fd_check(const std::string& label, const ParamRefs& params, Tensor& x,
              const std::function<ad::Var(const ad::Var&)>& forward, const Tensor& w,
              std::size_t max_entries, Failures& fail, double& worst) {
    zero_grads(params);
    auto xv = ad::input(x);
    ad::backward(ad::sum(ad::mul(forward(xv), ad::constant(w))));
    const Tensor gx = xv.grad();
    auto f = [&] {
        ad::NoGradGuard g;
        return weighted_sum(forward(ad::constant(x)), w);
    };
    GradCheckOptions opt;
    opt.max_entries = max_entries;
    auto results = check_parameter_gradients(params, f, opt);
    results.push_back(check_gradient("input", x, gx, f, opt));
    for (const auto& r : results) {
        worst = std::max(worst, r.max_rel_error);
        fail.expect(r.max_rel_error < 1e-4,
                    fmt::format("{} {}: rel err {:.3g}", label, r.name, r.max_rel_error));
    }
}

double loop_psnr(const Tensor& a, const Tensor& b) {
    double se = 0;
    for (std::size_t i = 0; i < a.size(); ++i) se += (a[i] - b[i]) * (a[i] - b[i]);
    return 10.0 * std::log10(1.0 / (se / static_cast<double>(a.size())));
}

// Direct 2-D windowed SSIM with an explicit 11x11 Gaussian.
double loop_ssim(const Tensor& a, const Tensor& b) {
    constexpr int n = 11;
    double wgt[n][n], wsum = 0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            wgt[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / (2 * 1.5 * 1.5));
            wsum += wgt[i][j];
        }
    const double c1 = 1e-4, c2 = 9e-4;
    const std::size_t h = a.dim(0), w = a.dim(1), ch = a.dim(2);
    double total = 0;
    for (std::size_t c = 0; c < ch; ++c) {
        double sum = 0;
        std::size_t count = 0;
        for (std::size_t y = 0; y + n <= h; ++y)
            for (std::size_t x = 0; x + n <= w; ++x) {
                double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < n; ++j) {
                        const double g = wgt[i][j] / wsum;
                        const double va = a.at(y + i, x + j, c), vb = b.at(y + i, x + j, c);
                        ma += g * va;
                        mb += g * vb;
                        saa += g * va * va;
                        sbb += g * vb * vb;
                        sab += g * va * vb;
                    }
                sum += (2 * ma * mb + c1) * (2 * (sab - ma * mb) + c2) /
                       ((ma * ma + mb * mb + c1) * (saa - ma * ma + sbb - mb * mb + c2));
                ++count;
            }
        total += sum / static_cast<double>(count);
    }
    return total / static_cast<double>(ch);
}

// Independent bilinear (half-pixel centres, edge clamp) for the identity checks.
Tensor reference_bilinear(const Tensor& img, std::size_t oh, std::size_t ow) {
    const std::size_t ih = img.dim(0), iw = img.dim(1), ch = img.dim(2);
    auto src = [](std::size_t o, std::size_t in, std::size_t out) {
        double s = (static_cast<double>(o) + 0.5) * (static_cast<double>(in) / static_cast<double>(out)) - 0.5;
        s = std::max(s, 0.0);
        auto i0 = std::min(static_cast<std::size_t>(s), in - 1);
        return std::tuple{i0, std::min(i0 + 1, in - 1), s - static_cast<double>(i0)};
    };
    Tensor out({oh, ow, ch});
    for (std::size_t y = 0; y < oh; ++y) {
        const auto [y0, y1, fy] = src(y, ih, oh);
        for (std::size_t x = 0; x < ow; ++x) {
            const auto [x0, x1, fx] = src(x, iw, ow);
            for (std::size_t c = 0; c < ch; ++c) {
                const double top = img.at(y0, x0, c) * (1 - fx) + img.at(y0, x1, c) * fx;
                const double bot = img.at(y1, x0, c) * (1 - fx) + img.at(y1, x1, c) * fx;
                out.at(y, x, c) = top * (1 - fy) + bot * fy;
            }
        }
    }
    return out;
}

std::vector<double> flatten(const ParamRefs& params) {
    std::vector<double> out;
    for (const Parameter* p : params)
        out.insert(out.end(), p->value.data().begin(), p->value.data().end());
    return out;
}

bool same_state(TrainState& a, TrainState& b) {
    if (flatten(a.gen.parameters()) != flatten(b.gen.parameters())) return false;
    if (flatten(a.disc.parameters()) != flatten(b.disc.parameters())) return false;
    if (a.step != b.step || a.lr != b.lr || a.rng != b.rng) return false;
    for (std::size_t i = 0; i < a.adam_g.m.size(); ++i)
        if (!std::ranges::equal(a.adam_g.m[i].data(), b.adam_g.m[i].data()) ||
            !std::ranges::equal(a.adam_g.v[i].data(), b.adam_g.v[i].data()))
            return false;
    return true;
}

}  // namespace

CheckResult patch_roundtrip(std::size_t images_per_size) {
    return timed("patch roundtrip", [&](CheckResult& r) {
        Rng rng(1);
        std::size_t checked = 0, bad = 0;
        for (std::size_t side : {8, 16, 64, 256}) {
            for (std::size_t i = 0; i < images_per_size; ++i) {
                const Tensor img = uniform({side, side, 3}, rng);
                if (!(merge_patches(split_into_patches(img, 8), side, side) == img)) ++bad;
                ++checked;
            }
        }
        r.passed = bad == 0;
        r.detail = fmt::format("{} images, {} mismatched", checked, bad);
    });
}

CheckResult gradients() {
    return timed("gradient check", [&](CheckResult& r) {
        Failures fail;
        double worst = 0;
        {
            TransformerConfig tc;
            tc.depth = 2;
            tc.dim = 8;
            tc.heads = 2;
            tc.mlp_ratio = 2.0;
            Rng rng(8);
            TransformerStack stack("s", tc, rng);
            ParamRefs params;
            stack.collect(params);
            randomize(params, 0.3, 99);
            Tensor v = uniform({4, 8}, rng, -1, 1);
            const Tensor pe = uniform({4, 8}, rng, -1, 1), w = uniform({4, 8}, rng, -1, 1);
            fd_check("transformer", params, v,
                     [&](const ad::Var& x) { return stack.forward(x, ad::constant(pe)); }, w, 0,
                     fail, worst);
        }
        {
            Rng rng(5);
            PatchTranslator pt("pt", 16, 16, 4, mini_transformer(), rng);
            ParamRefs params;
            pt.collect(params);
            randomize(params, 0.05, 6);
            Tensor x = uniform({16, 16, 3}, rng);
            const Tensor w = uniform({16, 16, 3}, rng, -1, 1);
            fd_check("translator", params, x, [&](const ad::Var& v) { return pt.forward(v); }, w,
                     24, fail, worst);
        }
        for (int scale : {2, 4}) {
            Generator gen(mini_generator());
            ParamRefs params = gen.parameters();
            randomize(params, 0.05, 15);
            Rng rng(16);
            for (int i = 1; i <= 4; ++i) {
                Parameter& wpe = gen.translator(i).embedding().w_pe();
                wpe.value = normal_tensor(wpe.value.shape(), 0.005, rng);
            }
            Tensor x = uniform({4, 4, 3}, rng, 0.35, 0.65);
            const std::size_t out = 4 * static_cast<std::size_t>(scale);
            const Tensor w = uniform({out, out, 3}, rng, -1, 1);
            fd_check(fmt::format("generator {}x", scale), params, x,
                     [&](const ad::Var& v) { return gen.forward(v, scale); }, w,
                     scale == 2 ? 24 : 6, fail, worst);
        }
        {
            DiscriminatorConfig dc;
            dc.height = dc.width = 16;
            dc.k = 4;
            dc.encoder.depth = 2;
            dc.encoder.dim = 16;
            dc.encoder.heads = 2;
            dc.encoder.mlp_ratio = 2.0;
            Discriminator d(dc);
            ParamRefs params = d.parameters();
            randomize(params, 0.2, 32);
            Rng rng(33);
            Tensor x = uniform({16, 16, 6}, rng);
            fd_check("discriminator", params, x, [&](const ad::Var& v) { return d.logit(v); },
                     Tensor({1}, 1.0), 48, fail, worst);
        }
        {
            DiscriminatorConfig dc;
            dc.height = dc.width = 8;
            dc.k = 4;
            dc.encoder.depth = 1;
            dc.encoder.dim = 8;
            dc.encoder.heads = 2;
            dc.encoder.mlp_ratio = 2.0;
            Discriminator d(dc);
            randomize(d.parameters(), 0.3, 8);
            Rng rng(9);
            const Tensor yr = uniform({8, 8, 3}, rng), xu = uniform({8, 8, 3}, rng);
            Tensor ys = uniform({8, 8, 3}, rng);
            const LossConfig lc;
            auto total = [&](const ad::Var& y) {
                const auto xv = ad::constant(xu);
                return total_generator_loss(
                    generator_adv_loss(d.forward(concat_condition(xv, y)), lc),
                    reconstruction_loss(ad::constant(yr), y, xv, lc), lc);
            };
            fd_check("total loss", {}, ys, total, Tensor({1}, 1.0), 0, fail, worst);
        }
        r.passed = fail.empty();
        r.detail = r.passed ? fmt::format("max rel err {:.2e}", worst) : fail.text();
    });
}

CheckResult loss_identities() {
    return timed("loss identities", [&](CheckResult& r) {
        Failures fail;
        Rng rng(4);
        const Tensor yr = uniform({8, 8, 3}, rng), ys = uniform({8, 8, 3}, rng);
        const LossConfig lc;
        const double base = reconstruction_loss(yr, ys, uniform({8, 8, 3}, rng), lc);
        double drift = 0;
        for (int i = 0; i < 10; ++i)
            drift = std::max(drift, std::abs(reconstruction_loss(yr, ys, uniform({8, 8, 3}, rng, -3, 3), lc) - base));
        fail.expect(drift <= 1e-9, fmt::format("X_up drift {:.3g}", drift));
        fail.expect(reconstruction_loss(yr, yr, ys, lc) == 0.0, "L_R(Y,Y) != 0");
        const double bce = generator_adv_loss(std::vector<double>{0.5}, lc);
        fail.expect(std::abs(bce - std::numbers::ln2) < 1e-6, fmt::format("BCE(0.5) = {}", bce));
        const double adv = 0.73, rec = 0.19;
        fail.expect(total_generator_loss(adv, rec, lc) == 0.4 * adv + 0.6 * rec, "0.4/0.6 weighting");
        r.passed = fail.empty();
        r.detail = r.passed ? fmt::format("X_up drift {:.1e}", drift) : fail.text();
    });
}

CheckResult residual_identity() {
    return timed("residual identity", [&](CheckResult& r) {
        Failures fail;
        GeneratorConfig cfg;
        cfg.lr_height = cfg.lr_width = 16;
        cfg.transformer = mini_transformer();
        Generator gen(cfg);
        gen.zero_parameters();
        Rng rng(2);
        const Tensor x = uniform({16, 16, 3}, rng, -0.1, 1.1);
        auto clamp01 = [](Tensor t) {
            for (double& v : t.data()) v = std::clamp(v, 0.0, 1.0);
            return t;
        };
        const Tensor up2 = clamp01(reference_bilinear(x, 32, 32));
        const Tensor up4c = clamp01(reference_bilinear(up2, 64, 64));
        const double e2 = max_abs_diff(gen.upscale(x, 2), up2);
        const double e4 = max_abs_diff(gen.upscale(x, 4), up4c);
        fail.expect(e2 == 0.0, fmt::format("2x differs by {:.3g}", e2));
        fail.expect(e4 == 0.0, fmt::format("4x differs by {:.3g}", e4));
        r.passed = fail.empty();
        r.detail = r.passed ? "2x and 4x exact" : fail.text();
    });
}

CheckResult weight_sharing() {
    return timed("weight sharing", [&](CheckResult& r) {
        Failures fail;
        ExperimentConfig two;
        two.generator.transformer = mini_transformer();
        ExperimentConfig four = apply_key_values(two, {{"model.scale", "4"}});
        Generator g2(two.generator), g4(four.generator);
        fail.expect(manifest_text(g2.manifest()) == manifest_text(g4.manifest()),
                     "manifests differ");
        fail.expect(flatten(g2.parameters()) == flatten(g4.parameters()), "initial values differ");
        Generator gen(mini_generator());
        randomize(gen.parameters(), 0.2, 17);
        Rng rng(18);
        const Tensor x = uniform({4, 4, 3}, rng);
        const std::size_t before = gen.parameters().size();
        fail.expect(gen.upscale(x, 4) == gen.upscale(gen.upscale(x, 2), 2), "4x != 2x twice");
        fail.expect(gen.parameters().size() == before, "4x created parameters");
        r.passed = fail.empty();
        r.detail = r.passed ? fmt::format("{} tensors, {} scalars shared", g2.manifest().size(),
                                          parameter_count(g2.manifest()))
                            : fail.text();
    });
}

CheckResult shape_manifest() {
    return timed("shape manifest", [&](CheckResult& r) {
        Failures fail;
        GeneratorConfig cfg;
        cfg.lr_height = cfg.lr_width = 128;
        cfg.transformer = mini_transformer();
        Generator gen(cfg);
        ad::NoGradGuard g;
        Rng rng(3);
        GeneratorTrace t1, t2;
        const auto y2 = gen.forward_2x(ad::constant(uniform({128, 128, 3}, rng)), {}, &t1);
        gen.forward_2x(y2, {}, &t2);
        auto hw = [](const Shape& s) { return fmt::format("{}x{}", s[0], s[1]); };
        const std::string got = fmt::format("{} -> {} -> {} -> {} -> {} -> {}", hw(t1.input), hw(t1.f1),
                                            hw(t1.f2), hw(t1.f3), hw(t1.f4), hw(t1.output));
        fail.expect(got == "128x128 -> 128x128 -> 64x64 -> 128x128 -> 256x256 -> 256x256", got);
        fail.expect(t2.input == (Shape{256, 256, 3}) && t2.output == (Shape{512, 512, 3}),
                     "second pass not 256 -> 512");
        r.passed = fail.empty();
        r.detail = r.passed ? "128 -> 256 -> 512; H, H/2, H, 2H" : fail.text();
    });
}

CheckResult metric_oracles() {
    return timed("metric oracles", [&](CheckResult& r) {
        Failures fail;
        const Image a = make_image(32, 32, 0.3), b = make_image(32, 32, 0.4);
        fail.expect(std::abs(psnr(a, b) - 20.0) <= 1e-6, fmt::format("uniform 0.1 -> {} dB", psnr(a, b)));
        Rng rng(5);
        const Tensor c = uniform({24, 24, 3}, rng);
        fail.expect(ssim(c, c) == 1.0, "SSIM(a,a) != 1");
        double worst = 0;
        for (int i = 0; i < 20; ++i) {
            const Tensor x = uniform({24, 20, 3}, rng), y = uniform({24, 20, 3}, rng);
            worst = std::max({worst, std::abs(psnr(x, y) - loop_psnr(x, y)),
                              std::abs(ssim(x, y) - loop_ssim(x, y))});
        }
        fail.expect(worst <= 1e-6, fmt::format("oracle gap {:.3g}", worst));
        r.passed = fail.empty();
        r.detail = r.passed ? fmt::format("20 pairs, max oracle gap {:.1e}", worst) : fail.text();
    });
}

CheckResult plateau_schedule() {
    return timed("plateau schedule", [&](CheckResult& r) {
        TrainState st;
        st.lr = st.config.train.lr0;
        st.best_val = 0.25;  // epoch-0 baseline
        std::vector<std::string> drops;
        for (int epoch = 1; epoch <= 90; ++epoch)
            if (ptsr::plateau_schedule(st, 0.25)) drops.push_back(fmt::format("{}:{:.3g}", epoch, st.lr));
        const std::string got = fmt::format("{}", fmt::join(drops, " "));
        r.passed = got == "30:4e-05 60:8e-06 90:1.6e-06";
        r.detail = "drops at " + got;
    });
}

CheckResult determinism_and_resume(const std::filesystem::path& scratch, std::size_t steps) {
    return timed("determinism and resume", [&](CheckResult& r) {
        const int threads = omp_get_max_threads();
        omp_set_num_threads(1);
        Failures fail;
        auto cfg = mini_experiment();
        cfg.train.max_steps = steps;
        Rng rng(12);
        std::vector<CorpusImage> images;
        for (int i = 0; i < 3; ++i)
            images.push_back({fmt::format("img{}", i), {}, uniform({12, 12, 3}, rng)});
        const PairSampler sampler(images, 2, 4);
        const auto val = validation_pairs(images, cfg);

        auto a = TrainState::create(cfg);
        auto b = TrainState::create(cfg);
        run_training(a, sampler, val);
        run_training(b, sampler, val);
        fail.expect(same_state(a, b), "repeat run differs");

        auto first = TrainState::create(cfg);
        first.config.train.max_steps = steps / 2;
        run_training(first, sampler, val);
        std::filesystem::create_directories(scratch);
        const auto path = scratch / "resume.ckpt";
        save_checkpoint(first, path);
        auto resumed = load_checkpoint(path, &cfg);
        resumed.config.train.max_steps = steps;
        run_training(resumed, sampler, val);
        std::filesystem::remove(path);
        fail.expect(same_state(a, resumed), "resumed run differs");
        fail.expect(a.step == steps, fmt::format("ran {} steps", a.step));
        omp_set_num_threads(threads);
        r.passed = fail.empty();
        r.detail = r.passed ? fmt::format("{} steps, resume at {}", steps, steps / 2) : fail.text();
    });
}

Image test_card() {
    Image img({64, 64, 3});
    for (std::size_t y = 0; y < 64; ++y)
        for (std::size_t x = 0; x < 64; ++x) {
            const double fx = static_cast<double>(x), fy = static_cast<double>(y);
            const double base = 0.5 + 0.25 * std::sin(fx * 0.35) * std::cos(fy * 0.21);
            const double disk = std::hypot(fy - 30, fx - 34) < 14 ? 0.3 : 0.0;
            const double stripes = static_cast<double>((x / 3 + y / 5) % 2) * 0.15;
            img.at(y, x, 0) = std::clamp(base + disk - stripes, 0.0, 1.0);
            img.at(y, x, 1) = std::clamp(0.6 * base + stripes, 0.0, 1.0);
            img.at(y, x, 2) = std::clamp(0.9 - base * 0.5 + disk * 0.5, 0.0, 1.0);
        }
    return img;
}

OverfitReport overfit(const ExperimentConfig& cfg, const Image& hr, std::size_t steps,
                      const std::function<void(std::size_t, double)>& progress) {
    const auto t0 = Clock::now();
    const int scale = cfg.training_scale();
    PairedSample p;
    p.hr = hr;
    p.lr = synthesize_lr(hr, scale);
    p.scale = scale;
    p.source_id = "overfit";
    auto st = TrainState::create(cfg);
    OverfitReport rep;
    for (std::size_t s = 1; s <= steps; ++s) {
        const double l_r = train_step(st, {p}).l_r;
        if (s == 1) rep.first_l_r = l_r;
        rep.last_l_r = l_r;
        if (progress) progress(s, l_r);
    }
    rep.psnr_db = psnr(st.gen.upscale(p.lr, scale), hr);
    rep.bicubic_psnr_db = psnr(bicubic_upscale(p.lr, scale), hr);
    rep.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    return rep;
}

std::vector<CheckResult> run_all(const std::filesystem::path& scratch,
                                 const std::function<void(const CheckResult&)>& report) {
    std::vector<CheckResult> out;
    auto add = [&](CheckResult r) {
        if (report) report(r);
        out.push_back(std::move(r));
    };
    add(patch_roundtrip());
    add(gradients());
    add(loss_identities());
    add(residual_identity());
    add(weight_sharing());
    add(shape_manifest());
    add(metric_oracles());
    add(plateau_schedule());
    add(determinism_and_resume(scratch));
    return out;
}

}  // namespace ptsr::selftest
