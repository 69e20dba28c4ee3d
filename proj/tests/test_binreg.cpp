// Binarization regularizer: the hinge map H, the combined L1 + hinge-MSE
// loss with its analytic gradient, and configuration validation.

#include <catch2/catch_amalgamated.hpp>

#include <irpatch/binreg.hpp>
#include <irpatch/rng.hpp>

#include "support/finite_diff.hpp"

using namespace irpatch;

namespace {

Mask mask2x2(double a, double b, double c, double d) {
    Grid g(2, 2, 0.0);
    g.at(0, 0) = a;
    g.at(0, 1) = b;
    g.at(1, 0) = c;
    g.at(1, 1) = d;
    return Mask(std::move(g), MaskKind::continuous);
}

} // namespace

TEST_CASE("hinge map branches", "[binreg]") {
    Mask m = mask2x2(0.2, 0.8, 0.0, 1.0);
    Grid h = h_map(m, 0.5);
    REQUIRE(h.at(0, 0) == 1.0); // below threshold: reads as satisfied
    REQUIRE(h.at(0, 1) == 0.8); // above: passes through
    REQUIRE(h.at(1, 0) == 1.0);
    REQUIRE(h.at(1, 1) == 1.0);

    // Exactly at the threshold the first branch wins.
    Mask at = mask2x2(0.5, 0.5, 0.5, 0.5);
    Grid ha = h_map(at, 0.5);
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c) REQUIRE(ha.at(r, c) == 1.0);

    // Nudged just above, values pass through instead.
    Mask above = mask2x2(0.5001, 0.5001, 0.5001, 0.5001);
    REQUIRE(h_map(above, 0.5).at(0, 0) == 0.5001);
}

TEST_CASE("binary loss worked example", "[binreg]") {
    // Mask [0.2 0.8; 0.0 1.0] with threshold 0.5 and alpha 4:
    // L1 = 2.0, only 0.8 is above threshold so MSE = (1/4)(0.8-1)^2 = 0.01,
    // loss = 2.0 + 4*0.01 = 2.04.
    Mask m = mask2x2(0.2, 0.8, 0.0, 1.0);
    BinaryLoss l = loss_binary(m, BinRegConfig(0.5, 4.0));
    REQUIRE_THAT(l.l1, Catch::Matchers::WithinAbs(2.0, 1e-15));
    REQUIRE_THAT(l.mse, Catch::Matchers::WithinAbs(0.01, 1e-15));
    REQUIRE_THAT(l.value, Catch::Matchers::WithinAbs(2.04, 1e-15));

    // Gradient: constant 1 from the L1 term everywhere; the hinge only adds
    // 4 * 2 * (1/4) * (0.8 - 1) = -0.4 at the 0.8 entry.
    REQUIRE(l.grad.at(0, 0) == 1.0);
    REQUIRE_THAT(l.grad.at(0, 1), Catch::Matchers::WithinAbs(0.6, 1e-15));
    REQUIRE(l.grad.at(1, 0) == 1.0);
    REQUIRE(l.grad.at(1, 1) == 1.0); // v = 1 is above threshold but d = 0
}

TEST_CASE("binary loss limiting cases", "[binreg]") {
    SECTION("binary masks carry no hinge penalty") {
        Grid g(3, 3, 0.0);
        g.at(0, 0) = 1.0;
        g.at(2, 2) = 1.0;
        BinaryLoss l = loss_binary(Mask(g, MaskKind::binary), BinRegConfig(0.5, 7.0));
        REQUIRE(l.l1 == 2.0);
        REQUIRE(l.mse == 0.0);
        REQUIRE(l.value == 2.0);
    }
    SECTION("empty mask") {
        BinaryLoss l = loss_binary(Mask::zeros(4, 4));
        REQUIRE(l.value == 0.0);
        REQUIRE(l.l1 == 0.0);
        REQUIRE(l.mse == 0.0);
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < 4; ++c) REQUIRE(l.grad.at(r, c) == 1.0);
    }
    SECTION("alpha scales only the hinge part, of both value and gradient") {
        Mask m = mask2x2(0.2, 0.8, 0.0, 1.0);
        BinaryLoss a1 = loss_binary(m, BinRegConfig(0.5, 1.0));
        BinaryLoss a2 = loss_binary(m, BinRegConfig(0.5, 2.0));
        REQUIRE(a1.l1 == a2.l1);
        REQUIRE(a1.mse == a2.mse);
        REQUIRE_THAT(a2.value - a2.l1,
                     Catch::Matchers::WithinAbs(2.0 * (a1.value - a1.l1), 1e-15));
        REQUIRE_THAT(a2.grad.at(0, 1) - 1.0,
                     Catch::Matchers::WithinAbs(2.0 * (a1.grad.at(0, 1) - 1.0), 1e-15));
    }
    SECTION("alpha zero reduces to plain L1") {
        Mask m = mask2x2(0.3, 0.9, 0.6, 0.1);
        BinaryLoss l = loss_binary(m, BinRegConfig(0.5, 0.0));
        REQUIRE_THAT(l.value, Catch::Matchers::WithinAbs(1.9, 1e-15));
        for (int r = 0; r < 2; ++r)
            for (int c = 0; c < 2; ++c) REQUIRE(l.grad.at(r, c) == 1.0);
    }
}

TEST_CASE("binary loss gradient agrees with finite differences away from the kink",
          "[binreg]") {
    // The hinge is non-differentiable only at v = v_thre; sample entries at
    // least 0.05 away from it on either side, and keep them strictly inside
    // [0,1] so the +/- 1e-4 probes stay within the valid mask range.
    Rng rng(5150);
    BinRegConfig cfg(0.5, 4.0);
    for (int t = 0; t < 20; ++t) {
        Grid g(8, 8, 0.0);
        for (int r = 0; r < 8; ++r)
            for (int c = 0; c < 8; ++c) {
                double u = rng.uniform01();
                g.at(r, c) = u < 0.5 ? 0.01 + 0.43 * u / 0.5
                                     : 0.56 + 0.40 * (u - 0.5) / 0.5;
            }
        Mask m(g, MaskKind::continuous);
        BinaryLoss l = loss_binary(m, cfg);
        Grid fd = testsupport::fd_gradient(
            [&](const Grid& gg) {
                return loss_binary(Mask(gg, MaskKind::continuous), cfg).value;
            },
            m.grid(), 1e-4);
        REQUIRE(testsupport::max_relative_error(l.grad, fd) <= 1e-4);
    }
}

TEST_CASE("regularizer configuration validation", "[binreg]") {
    REQUIRE_NOTHROW(BinRegConfig(0.5, 1.0));
    REQUIRE_NOTHROW(BinRegConfig(0.01, 0.0));
    REQUIRE_THROWS_AS(BinRegConfig(0.0, 1.0), ParameterError);
    REQUIRE_THROWS_AS(BinRegConfig(1.0, 1.0), ParameterError);
    REQUIRE_THROWS_AS(BinRegConfig(-0.2, 1.0), ParameterError);
    REQUIRE_THROWS_AS(BinRegConfig(1.7, 1.0), ParameterError);
    REQUIRE_THROWS_AS(BinRegConfig(0.5, -0.1), ParameterError);

    BinRegConfig def;
    REQUIRE(def.v_thre == 0.5);
    REQUIRE(def.alpha == 1.0);
}
