#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "ptsr/patch_ops.hpp"
#include "test_util.hpp"

namespace ptsr {
namespace {

TEST(PatchOps, DefaultGeometry) {
    const auto seq = split_into_patches(make_image(256, 256, 0.25), 8);
    EXPECT_EQ(seq.n(), 1024u);
    EXPECT_EQ(seq.d(), 192u);
    EXPECT_EQ(seq.vectors.shape(), (Shape{1024, 192}));
}

TEST(PatchOps, ConstantImageSingleRow) {
    const auto seq = split_into_patches(make_image(8, 8, 0.5), 8);
    ASSERT_EQ(seq.vectors.shape(), (Shape{1, 192}));
    for (double v : seq.vectors.data()) EXPECT_EQ(v, 0.5);
}

// Brute-force pixel oracle: row r, entry e maps to pixel
// (pr*k + e / (k*3), pc*k + (e/3) % k, e % 3).
TEST(PatchOps, RowMajorLayoutMatchesPixelOracle) {
    Rng rng(1);
    const Image img = test::random_image(16, 16, rng);
    const auto seq = split_into_patches(img, 8);
    ASSERT_EQ(seq.n(), 4u);
    for (std::size_t r = 0; r < 4; ++r) {
        const std::size_t pr = r / 2, pc = r % 2;
        for (std::size_t e = 0; e < 192; ++e) {
            const std::size_t y = pr * 8 + e / 24, x = pc * 8 + (e / 3) % 8, c = e % 3;
            ASSERT_EQ(seq.vectors.at(r, e), img.at(y, x, c)) << "row " << r << " entry " << e;
        }
    }
    EXPECT_EQ(merge_patches(seq, 16, 16), img);
}

TEST(PatchOps, RoundTripAndCountProperty) {
    Rng rng(2);
    for (auto [h, w, k] : {std::array<std::size_t, 3>{8, 8, 8},
                           {16, 24, 8},
                           {6, 9, 3},
                           {64, 32, 16},
                           {4, 4, 1}}) {
        const Image img = test::random_image(h, w, rng);
        const auto seq = split_into_patches(img, k);
        EXPECT_EQ(seq.n() * seq.d(), h * w * 3);
        EXPECT_EQ(merge_patches(seq, h, w), img);
    }
}

TEST(PatchOps, ZeroRowMergesToZeroImage) {
    PatchSequence seq{Tensor({1, 192}), 1, 1, 8, 3};
    EXPECT_EQ(merge_patches(seq, 8, 8), make_image(8, 8, 0.0));
}

// Permutation oracle: of all 24 orderings of the 4 rows, only the identity
// merges back to the original image.
TEST(PatchOps, OnlyIdentityPermutationRoundTrips) {
    Rng rng(3);
    const Image img = test::random_image(16, 16, rng);
    const auto seq = split_into_patches(img, 8);
    std::array<std::size_t, 4> perm{0, 1, 2, 3};
    int matches = 0;
    do {
        PatchSequence shuffled = seq;
        for (std::size_t r = 0; r < 4; ++r)
            for (std::size_t e = 0; e < 192; ++e)
                shuffled.vectors.at(r, e) = seq.vectors.at(perm[r], e);
        const bool identity = std::is_sorted(perm.begin(), perm.end());
        const bool same = merge_patches(shuffled, 16, 16) == img;
        EXPECT_EQ(same, identity);
        matches += same;
    } while (std::next_permutation(perm.begin(), perm.end()));
    EXPECT_EQ(matches, 1);
}

TEST(PatchOps, RejectsIndivisibleDimensionsNamingThem) {
    try {
        split_into_patches(make_image(16, 20), 8);
        FAIL();
    } catch (const ShapeError& e) {
        EXPECT_NE(std::string(e.what()).find("width 20"), std::string::npos) << e.what();
    }
    EXPECT_THROW(split_into_patches(make_image(12, 16), 8), ShapeError);
}

TEST(PatchOps, MergeRejectsGeometryMismatch) {
    const auto seq = split_into_patches(make_image(16, 16), 8);
    EXPECT_THROW(merge_patches(seq, 8, 32), ShapeError);
    EXPECT_THROW(merge_patches(seq, 16, 24), ShapeError);
}

TEST(PositionalEmbedding, IdentityProjectionReturnsRv) {
    auto pe = make_positional_embedding(5, 4, 42);
    Tensor eye({4, 4});
    for (std::size_t i = 0; i < 4; ++i) eye.at(i, i) = 1.0;
    pe.w_pe().value = eye;
    EXPECT_EQ(pe.table(), pe.rv());
}

TEST(PositionalEmbedding, SeededAndDeterministic) {
    const auto a = make_positional_embedding(6, 12, 9);
    const auto b = make_positional_embedding(6, 12, 9);
    const auto c = make_positional_embedding(6, 12, 10);
    EXPECT_EQ(a.rv(), b.rv());
    EXPECT_EQ(a.w_pe().value, b.w_pe().value);
    EXPECT_NE(a.rv(), c.rv());
    EXPECT_TRUE(a.w_pe().trainable);
}

TEST(PositionalEmbedding, HandWorkedProduct) {
    // [1 2 3; 4 5 6] * [1 0 2; 0 1 0; 1 1 1] = [4 5 5; 10 11 14]
    const auto pe = PositionalEmbedding::from_parts(Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6}),
                                                    Tensor::matrix(3, 3, {1, 0, 2, 0, 1, 0, 1, 1, 1}));
    EXPECT_EQ(pe.table(), Tensor::matrix(2, 3, {4, 5, 5, 10, 11, 14}));
}

TEST(PositionalEmbedding, LinearInProjection) {
    auto pe = make_positional_embedding(7, 6, 3);
    const Tensor base = pe.table();
    const Tensor w = pe.w_pe().value;
    for (double alpha : {2.0, 0.5, -4.0, 3.0}) {
        for (std::size_t i = 0; i < w.size(); ++i) pe.w_pe().value[i] = alpha * w[i];
        const Tensor scaled = pe.table();
        for (std::size_t i = 0; i < base.size(); ++i) {
            if (alpha == 3.0)  // not a power of two: equal up to rounding
                EXPECT_NEAR(scaled[i], alpha * base[i], 1e-12);
            else
                EXPECT_EQ(scaled[i], alpha * base[i]);
        }
    }
}

TEST(PositionalEmbedding, RejectsEmptyShape) {
    EXPECT_THROW(make_positional_embedding(0, 3, 1), std::invalid_argument);
    EXPECT_THROW(make_positional_embedding(3, 0, 1), std::invalid_argument);
}

}  // namespace
}  // namespace ptsr
