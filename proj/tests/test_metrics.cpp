#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "ptsr/metrics.hpp"
#include "test_util.hpp"

namespace ptsr {
namespace {

using test::random_image;

double loop_psnr(const Tensor& a, const Tensor& b) {
    double se = 0;
    for (std::size_t i = 0; i < a.size(); ++i) se += (a[i] - b[i]) * (a[i] - b[i]);
    return 10.0 * std::log10(1.0 / (se / static_cast<double>(a.size())));
}

// Direct 2-D windowed SSIM with explicitly built 11x11 Gaussian weights.
double loop_ssim(const Tensor& a, const Tensor& b) {
    const int n = 11;
    double wgt[n][n], wsum = 0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            wgt[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / (2 * 1.5 * 1.5));
            wsum += wgt[i][j];
        }
    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
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
                const double num = (2 * ma * mb + c1) * (2 * (sab - ma * mb) + c2);
                const double den = (ma * ma + mb * mb + c1) * (saa - ma * ma + sbb - mb * mb + c2);
                sum += num / den;
                ++count;
            }
        total += sum / static_cast<double>(count);
    }
    return total / static_cast<double>(ch);
}

TEST(Psnr, UniformOffsetIsTwentyDecibels) {
    const Image a = make_image(16, 16, 0.3), b = make_image(16, 16, 0.4);
    EXPECT_NEAR(psnr(a, b), 20.0, 1e-6);
}

TEST(Psnr, IdenticalIsInfiniteAndCapped) {
    Rng rng(1);
    const Image a = random_image(8, 8, rng);
    EXPECT_TRUE(std::isinf(psnr(a, a)));
    EXPECT_EQ(psnr_capped(psnr(a, a)), 100.0);
    EXPECT_EQ(psnr_capped(31.5), 31.5);
}

TEST(Psnr, MatchesLoopOracle) {
    Rng rng(2);
    for (int i = 0; i < 20; ++i) {
        const Image a = random_image(13, 17, rng), b = random_image(13, 17, rng);
        EXPECT_NEAR(psnr(a, b), loop_psnr(a, b), 1e-9);
    }
}

TEST(Psnr, StrictlyDecreasingInError) {
    const Image a = make_image(8, 8, 0.5);
    double prev = std::numeric_limits<double>::infinity();
    for (double d : {0.01, 0.02, 0.05, 0.1, 0.3}) {
        const double v = psnr(a, make_image(8, 8, 0.5 + d));
        EXPECT_LT(v, prev);
        prev = v;
    }
    EXPECT_THROW(psnr(a, make_image(8, 9, 0.5)), ShapeError);
}

TEST(Ssim, IdenticalIsExactlyOne) {
    Rng rng(3);
    for (int i = 0; i < 5; ++i) {
        const Image a = random_image(20, 23, rng);
        EXPECT_EQ(ssim(a, a), 1.0);
    }
}

TEST(Ssim, MatchesDirectWindowOracle) {
    Rng rng(4);
    for (int i = 0; i < 20; ++i) {
        const Image a = random_image(16, 19, rng);
        Image b = a;
        std::normal_distribution<double> noise(0.0, 0.1 * (i + 1) / 20.0);
        for (double& v : b.data()) v = std::clamp(v + noise(rng), 0.0, 1.0);
        EXPECT_NEAR(ssim(a, b), loop_ssim(a, b), 1e-6);
    }
}

TEST(Ssim, CheckerboardAgainstInverseIsNegative) {
    Image a({16, 16, 3}), inv({16, 16, 3});
    for (std::size_t y = 0; y < 16; ++y)
        for (std::size_t x = 0; x < 16; ++x)
            for (std::size_t c = 0; c < 3; ++c) {
                a.at(y, x, c) = static_cast<double>((x + y) % 2);
                inv.at(y, x, c) = 1.0 - a.at(y, x, c);
            }
    const double v = ssim(a, inv);
    EXPECT_LT(v, 0.0);
    EXPECT_NEAR(v, loop_ssim(a, inv), 1e-9);
}

TEST(Ssim, Symmetric) {
    Rng rng(5);
    for (int i = 0; i < 5; ++i) {
        const Image a = random_image(12, 12, rng), b = random_image(12, 12, rng);
        EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-9);
    }
}

TEST(Ssim, RejectsSmallImages) {
    EXPECT_THROW(ssim(make_image(10, 20, 0.1), make_image(10, 20, 0.1)), ShapeError);
}

TEST(GaussianWindow, NormalizedAndSymmetric) {
    const auto w = gaussian_window(11, 1.5);
    double s = 0;
    for (double v : w) s += v;
    EXPECT_NEAR(s, 1.0, 1e-15);
    for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(w[i], w[10 - i]);
    EXPECT_NEAR(w[5] / w[6], std::exp(1.0 / (2 * 2.25)), 1e-12);
}

TEST(MetricSpace, LumaEndpoints) {
    EXPECT_NEAR(rgb_to_y(make_image(1, 1, 0.0))[0], 16.0 / 255.0, 1e-12);
    EXPECT_NEAR(rgb_to_y(make_image(1, 1, 1.0))[0], 235.0 / 255.0, 1e-12);
    EXPECT_EQ(metric_space_from_string("y"), MetricSpace::y);
    EXPECT_THROW(metric_space_from_string("lab"), std::invalid_argument);
}

TEST(MetricSpace, ShaveAndEvaluate) {
    Rng rng(6);
    const Image a = random_image(20, 24, rng), b = random_image(20, 24, rng);
    const Tensor s = shave(a, 2);
    EXPECT_EQ(s.shape(), (Shape{16, 20, 3}));
    EXPECT_EQ(s.at(0, 0, 1), a.at(2, 2, 1));
    const auto rgb = evaluate_pair(a, b);
    EXPECT_NEAR(rgb.psnr_db, loop_psnr(a, b), 1e-9);
    EXPECT_NEAR(rgb.ssim, loop_ssim(a, b), 1e-6);
    const auto y = evaluate_pair(a, b, {MetricSpace::y, 4});
    EXPECT_NEAR(y.psnr_db, loop_psnr(shave(rgb_to_y(a), 4), shave(rgb_to_y(b), 4)), 1e-9);
    EXPECT_EQ(evaluate_pair(a, a).psnr_db, 100.0);
}

TEST(MetricReport, CsvLayout) {
    std::vector<MetricRow> rows{{"baby", 2, 30.0, 0.9, MetricSpace::rgb, 0},
                                {"bird", 2, 32.0, 0.8, MetricSpace::rgb, 0}};
    std::ostringstream os;
    write_metric_csv(os, rows);
    EXPECT_EQ(os.str(),
              "image_id,scale,psnr_db,ssim,metric_space,shave\n"
              "baby,2,30.0000000000,0.9000000000,rgb,0\n"
              "bird,2,32.0000000000,0.8000000000,rgb,0\n"
              "mean,2,31.0000000000,0.8500000000,rgb,0\n");
}

TEST(ActivationMap, ZeroGradientGivesZeros) {
    EXPECT_EQ(activation_from_gradient(Tensor({4, 5, 3})), Tensor({4, 5, 1}));
}

TEST(ActivationMap, ChannelMaxThenMinMax) {
    Tensor g({1, 3, 2});
    g.at(0, 0, 0) = -2;  // |.| max 2
    g.at(0, 0, 1) = 1;
    g.at(0, 1, 1) = 0.5;  // 0.5
    g.at(0, 2, 0) = 1.25;  // 1.25
    const Tensor m = activation_from_gradient(g);
    EXPECT_EQ(m.shape(), (Shape{1, 3, 1}));
    EXPECT_DOUBLE_EQ(m[0], 1.0);
    EXPECT_DOUBLE_EQ(m[1], 0.0);
    EXPECT_DOUBLE_EQ(m[2], 0.5);
}

TEST(ActivationMap, InvariantToPositiveScaling) {
    Rng rng(7);
    const Tensor g = test::uniform_tensor({6, 7, 3}, rng, -1, 1);
    Tensor g2 = g;
    for (double& v : g2.data()) v *= 8.0;
    EXPECT_EQ(activation_from_gradient(g), activation_from_gradient(g2));
    Tensor g3 = g;
    for (double& v : g3.data()) v *= 0.37;
    EXPECT_LT(max_abs_diff(activation_from_gradient(g), activation_from_gradient(g3)), 1e-12);
}

TEST(VisualActivationMap, ShapeRangeDeterminism) {
    GeneratorConfig cfg;
    cfg.lr_height = cfg.lr_width = 4;
    cfg.k = 2;
    cfg.transformer.depth = 1;
    cfg.transformer.mlp_ratio = 1.0;
    Generator gen(cfg);
    ParamRefs params = gen.parameters();
    test::randomize(params, 0.05, 8);
    Rng rng(9);
    const Image x = random_image(4, 4, rng), y = random_image(8, 8, rng);
    const Tensor m = visual_activation_map(gen, x, y, 2);
    EXPECT_EQ(m.shape(), (Shape{4, 4, 1}));
    double lo = 1, hi = 0;
    for (double v : m.data()) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    EXPECT_EQ(lo, 0.0);
    EXPECT_EQ(hi, 1.0);
    EXPECT_EQ(visual_activation_map(gen, x, y, 2), m);
    for (const Parameter* p : params) EXPECT_EQ(grad_norm(*p), 0.0) << p->name;
    EXPECT_THROW(visual_activation_map(gen, x, random_image(12, 12, rng), 2), ShapeError);
}

}  // namespace
}  // namespace ptsr
