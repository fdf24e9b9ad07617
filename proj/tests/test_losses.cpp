#include <gtest/gtest.h>

#include <cmath>

#include "ptsr/discriminator.hpp"
#include "ptsr/gradcheck.hpp"
#include "ptsr/losses.hpp"
#include "test_util.hpp"

namespace ptsr {
namespace {

using test::random_image;

// Scalar-loop oracle: (1/N)(sum |d| + sqrt(sum d^2)) on d = a - b.
double loop_reconstruction(const Tensor& a, const Tensor& b) {
    double l1 = 0, sq = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        l1 += std::abs(d);
        sq += d * d;
    }
    return (l1 + std::sqrt(sq)) / static_cast<double>(a.size());
}

TEST(LearnableFeature, ElementwiseAgainstLoop) {
    Rng rng(1);
    const Image y = random_image(5, 4, rng), x = random_image(5, 4, rng);
    const Tensor f = learnable_feature(y, x);
    for (std::size_t i = 0; i < f.size(); ++i) EXPECT_EQ(f[i], y[i] - x[i]);
    EXPECT_EQ(learnable_feature(y, y), Tensor({5, 4, 3}));
    EXPECT_THROW(learnable_feature(y, random_image(4, 5, rng)), ShapeError);
}

TEST(LearnableFeature, Linear) {
    Rng rng(2);
    const Image y = random_image(3, 3, rng), x = random_image(3, 3, rng);
    Tensor ys = y, xs = x;
    for (double& v : ys.data()) v *= 2.5;
    for (double& v : xs.data()) v *= 2.5;
    const Tensor a = learnable_feature(ys, xs), b = learnable_feature(y, x);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], 2.5 * b[i], 1e-15);
}

TEST(ReconstructionLoss, ZeroOnPerfectReconstruction) {
    Rng rng(3);
    const Image y = random_image(4, 4, rng), x = random_image(4, 4, rng);
    EXPECT_EQ(reconstruction_loss(y, y, x, {}), 0.0);
}

TEST(ReconstructionLoss, ToyValue) {
    Image yr({1, 1, 3}), ys({1, 1, 3}), xu({1, 1, 3});
    yr[0] = 0.8;
    ys[0] = 0.5;
    EXPECT_NEAR(reconstruction_loss(yr, ys, xu, {}), 0.2, 1e-12);
}

TEST(ReconstructionLoss, InvariantToUpsampledInput) {
    Rng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        const Image yr = random_image(6, 8, rng), ys = random_image(6, 8, rng);
        const double oracle = loop_reconstruction(yr, ys);
        for (int j = 0; j < 3; ++j) {
            Tensor xu = test::uniform_tensor({6, 8, 3}, rng, -5, 5);
            EXPECT_NEAR(reconstruction_loss(yr, ys, xu, {}), oracle, 1e-9);
        }
    }
}

TEST(ReconstructionLoss, VariantsSplitTerms) {
    Rng rng(5);
    const Image yr = random_image(4, 6, rng), ys = random_image(4, 6, rng), xu = random_image(4, 6, rng);
    double l1 = 0, sq = 0;
    for (std::size_t i = 0; i < yr.size(); ++i) {
        l1 += std::abs(yr[i] - ys[i]);
        sq += (yr[i] - ys[i]) * (yr[i] - ys[i]);
    }
    const double n = static_cast<double>(yr.size());
    LossConfig cfg;
    cfg.variant = LossVariant::R1;
    const double r1 = reconstruction_loss(yr, ys, xu, cfg);
    cfg.variant = LossVariant::R2;
    const double r2 = reconstruction_loss(yr, ys, xu, cfg);
    cfg.variant = LossVariant::R;
    const double r = reconstruction_loss(yr, ys, xu, cfg);
    EXPECT_NEAR(r1, l1 / n, 1e-12);
    EXPECT_NEAR(r2, std::sqrt(sq) / n, 1e-12);
    EXPECT_NEAR(r, r1 + r2, 1e-12);
    cfg.squared_l2 = true;
    cfg.variant = LossVariant::R2;
    EXPECT_NEAR(reconstruction_loss(yr, ys, xu, cfg), sq / n, 1e-12);
    for (auto v : {LossVariant::R, LossVariant::R1, LossVariant::R2})
        EXPECT_EQ(loss_variant_from_string(to_string(v)), v);
    EXPECT_THROW(loss_variant_from_string("L3"), std::invalid_argument);
}

TEST(ReconstructionLoss, RejectsShapeMismatch) {
    Rng rng(6);
    EXPECT_THROW(reconstruction_loss(random_image(2, 2, rng), random_image(2, 3, rng),
                                     random_image(2, 2, rng), {}),
                 ShapeError);
}

TEST(AdversarialLoss, FixedPoints) {
    EXPECT_NEAR(generator_adv_loss(std::vector<double>{0.5}), std::log(2.0), 1e-6);
    EXPECT_NEAR(generator_adv_loss(std::vector<double>{0.5}), 0.693147, 1e-6);
    EXPECT_NEAR(generator_adv_loss(std::vector<double>{1.0}), 0.0, 1e-6);
    EXPECT_NEAR(generator_adv_loss(std::vector<double>{0.9, 0.1}), 1.203973, 1e-6);
    EXPECT_NEAR(generator_adv_loss(std::vector<double>{0.9, 0.1}),
                0.5 * (-std::log(0.9) - std::log(0.1)), 1e-12);
}

TEST(AdversarialLoss, EpsilonKeepsZeroFinite) {
    const double v = generator_adv_loss(std::vector<double>{0.0});
    EXPECT_TRUE(std::isfinite(v));
    EXPECT_NEAR(v, -std::log(1e-7), 1e-9);
}

TEST(AdversarialLoss, RejectsNonProbabilities) {
    EXPECT_THROW(generator_adv_loss(std::vector<double>{1.2}), std::domain_error);
    EXPECT_THROW(discriminator_loss(std::vector<double>{0.5}, std::vector<double>{-0.1}),
                 std::domain_error);
    EXPECT_THROW(generator_adv_loss(std::vector<double>{std::nan("")}), std::domain_error);
}

TEST(DiscriminatorLoss, FixedPoints) {
    EXPECT_NEAR(discriminator_loss(std::vector<double>{0.0}, std::vector<double>{1.0}), 0.0, 1e-6);
    EXPECT_NEAR(discriminator_loss(std::vector<double>{0.5}, std::vector<double>{0.5}),
                std::log(2.0), 1e-6);
    // 0.5 * (0.3566749 + 0.2231436)
    EXPECT_NEAR(discriminator_loss(std::vector<double>{0.3}, std::vector<double>{0.8}), 0.2899093,
                1e-6);
}

TEST(FusedLogits, AgreeWithProbabilityPath) {
    for (double z : {-3.0, -0.4, 0.0, 1.1, 4.0}) {
        const double p = 1.0 / (1.0 + std::exp(-z));
        ad::NoGradGuard g;
        const auto zl = ad::constant(Tensor({1}, {z}));
        EXPECT_NEAR(generator_adv_loss_logits(zl).value()[0],
                    generator_adv_loss(std::vector<double>{p}), 1e-6);
        EXPECT_NEAR(discriminator_loss_logits(zl, zl).value()[0],
                    discriminator_loss(std::vector<double>{p}, std::vector<double>{p}), 1e-6);
    }
    ad::NoGradGuard g;
    const double big = generator_adv_loss_logits(ad::constant(Tensor({1}, {-800.0}))).value()[0];
    EXPECT_NEAR(big, 800.0, 1e-9);
}

TEST(TotalLoss, Weighting) {
    EXPECT_EQ(total_generator_loss(0.0, 0.0), 0.0);
    EXPECT_NEAR(total_generator_loss(1.0, 1.0), 1.0, 1e-15);
    EXPECT_NEAR(total_generator_loss(0.6931, 0.2), 0.39724, 1e-12);
    LossConfig cfg;
    EXPECT_EQ(cfg.w_adv, 0.4);
    EXPECT_EQ(cfg.w_rec, 0.6);
    EXPECT_EQ(total_generator_loss(2.0, 3.0), 0.4 * 2.0 + 0.6 * 3.0);
    cfg.w_adv = 0.5;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(Losses, NonNegative) {
    Rng rng(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 50; ++i) {
        const Image yr = random_image(3, 3, rng), ys = random_image(3, 3, rng), xu = random_image(3, 3, rng);
        EXPECT_GE(reconstruction_loss(yr, ys, xu, {}), 0.0);
        EXPECT_GE(generator_adv_loss(std::vector<double>{u(rng)}), 0.0);
        EXPECT_GE(discriminator_loss(std::vector<double>{u(rng)}, std::vector<double>{u(rng)}), 0.0);
    }
}

// Full generator objective through a tiny discriminator, differentiated
// with respect to Y_S.
TEST(TotalLoss, GradientWrtSuperResolvedMatchesFiniteDifferences) {
    DiscriminatorConfig dc;
    dc.height = dc.width = 8;
    dc.k = 4;
    dc.encoder.depth = 1;
    dc.encoder.dim = 8;
    dc.encoder.heads = 2;
    dc.encoder.mlp_ratio = 2.0;
    Discriminator d(dc);
    ParamRefs dparams = d.parameters();
    test::randomize(dparams, 0.3, 8);
    Rng rng(9);
    const Image yr = random_image(8, 8, rng), xu = random_image(8, 8, rng);
    Tensor ys = random_image(8, 8, rng);
    const LossConfig cfg;
    auto objective = [&](const ad::Var& y) {
        const auto xv = ad::constant(xu);
        const auto adv = generator_adv_loss(d.forward(concat_condition(xv, y)), cfg);
        const auto rec = reconstruction_loss(ad::constant(yr), y, xv, cfg);
        return total_generator_loss(adv, rec, cfg);
    };
    auto yv = ad::input(ys);
    ad::backward(objective(yv));
    const Tensor analytic = yv.grad();
    auto f = [&] {
        ad::NoGradGuard g;
        return objective(ad::constant(ys)).value()[0];
    };
    EXPECT_LT(check_gradient("Y_S", ys, analytic, f).max_rel_error, 1e-4);
}

}  // namespace
}  // namespace ptsr
