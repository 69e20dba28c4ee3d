// Soft clustering-coefficient aggregation: ring geometry, the literal
// kernel/decay composition versus the fast edge-product form, the exact
// graph-counting oracle, reporting means, and the aggregation loss with its
// analytic gradient.

#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cmath>

#include <irpatch/aggreg.hpp>
#include <irpatch/rng.hpp>

#include "support/finite_diff.hpp"

using namespace irpatch;

namespace {

// Build a 3x3 window from row-major values.
Grid window3(std::array<double, 9> v) {
    Grid g(3, 3, 0.0);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) g.at(r, c) = v[static_cast<std::size_t>(3 * r + c)];
    return g;
}

Mask random_binary_mask(int h, int w, Rng& rng, double p_on = 0.5) {
    Grid g(h, w, 0.0);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) g.at(r, c) = rng.uniform01() < p_on ? 1.0 : 0.0;
    return Mask(std::move(g), MaskKind::binary);
}

// Values kept strictly inside [0,1] so finite-difference probes of +/- 1e-4
// stay within the valid mask range.
Mask random_soft_mask(int h, int w, Rng& rng) {
    Grid g(h, w, 0.0);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) g.at(r, c) = 0.01 + 0.98 * rng.uniform01();
    return Mask(std::move(g), MaskKind::continuous);
}

} // namespace

TEST_CASE("neighbour ring geometry", "[aggreg]") {
    STATIC_REQUIRE(ring::offsets.size() == 8);
    STATIC_REQUIRE(ring::edges.size() == 12);
    REQUIRE(ring::denom == 56.0);

    // Every listed edge joins two distinct ring vertices that are themselves
    // 8-neighbours, and the list carries no duplicates.
    for (std::size_t i = 0; i < ring::edges.size(); ++i) {
        auto [a, b] = ring::edges[i];
        REQUIRE(a >= 0);
        REQUIRE(b < 8);
        REQUIRE(a < b);
        REQUIRE(ring::touching(ring::offsets[static_cast<std::size_t>(a)],
                               ring::offsets[static_cast<std::size_t>(b)]));
        for (std::size_t j = i + 1; j < ring::edges.size(); ++j)
            REQUIRE(ring::edges[i] != ring::edges[j]);
    }

    // The list is complete: counting touching pairs directly gives 12, i.e.
    // a total vertex degree of 24 (corners touch 2 vertices, edge-centres 4).
    int touching_pairs = 0;
    for (std::size_t a = 0; a < 8; ++a)
        for (std::size_t b = a + 1; b < 8; ++b)
            if (ring::touching(ring::offsets[a], ring::offsets[b])) ++touching_pairs;
    REQUIRE(touching_pairs == 12);

    int degree_sum = 0;
    for (std::size_t a = 0; a < 8; ++a) {
        int deg = 0;
        for (std::size_t b = 0; b < 8; ++b)
            if (a != b && ring::touching(ring::offsets[a], ring::offsets[b])) ++deg;
        bool corner = ring::offsets[a].first != 0 && ring::offsets[a].second != 0;
        REQUIRE(deg == (corner ? 2 : 4));
        degree_sum += deg;
    }
    REQUIRE(degree_sum == 24);
}

TEST_CASE("decay matrix of a window", "[aggreg]") {
    SECTION("all-ones window: every ring factor is 1, centre unused") {
        Grid alpha = decay_matrix(window3({1, 1, 1, 1, 1, 1, 1, 1, 1}));
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) {
                if (r == 1 && c == 1)
                    REQUIRE(alpha.at(r, c) == 0.0);
                else
                    REQUIRE(alpha.at(r, c) == 1.0);
            }
    }
    SECTION("a lone corner decays to zero: no lit ring neighbours") {
        Grid alpha = decay_matrix(window3({1, 0, 0, 0, 0, 0, 0, 0, 0}));
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) REQUIRE(alpha.at(r, c) == 0.0);
    }
    SECTION("corner with one lit neighbour: half of its neighbour mean") {
        // NW and N lit: alpha_NW = 1 * (1 + 0)/2, alpha_N = 1 * (1+0+0+0)/4.
        Grid alpha = decay_matrix(window3({1, 1, 0, 0, 0, 0, 0, 0, 0}));
        REQUIRE(alpha.at(0, 0) == 0.5);
        REQUIRE(alpha.at(0, 1) == 0.25);
        REQUIRE(alpha.at(0, 2) == 0.0);
        REQUIRE(alpha.at(1, 1) == 0.0);
    }
    SECTION("window must be 3x3") {
        REQUIRE_THROWS_AS(decay_matrix(Grid(4, 4, 1.0)), DimensionError);
        REQUIRE_THROWS_AS(decay_matrix(Grid(3, 4, 1.0)), DimensionError);
    }
}

TEST_CASE("literal composition equals the edge-product fast path", "[aggreg]") {
    SECTION("exhaustively over all 256 binary ring configurations") {
        for (int bits = 0; bits < 256; ++bits) {
            for (double centre : {0.0, 1.0}) {
                Grid w(3, 3, 0.0);
                w.at(1, 1) = centre;
                for (std::size_t j = 0; j < 8; ++j) {
                    auto p = ring::offsets[j];
                    w.at(p.first + 1, p.second + 1) = (bits >> j) & 1 ? 1.0 : 0.0;
                }
                double lit = window_coefficient_literal(w);
                double fast = window_coefficient(w);
                REQUIRE_THAT(fast, Catch::Matchers::WithinAbs(lit, 1e-12));
                // The centre value must not influence the coefficient.
                REQUIRE(fast <= 3.0 / 7.0 + 1e-15);
            }
        }
    }
    SECTION("on 1000 random soft windows") {
        Rng rng(20260819);
        for (int t = 0; t < 1000; ++t) {
            Grid w(3, 3, 0.0);
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c) w.at(r, c) = rng.uniform01();
            REQUIRE_THAT(window_coefficient(w),
                         Catch::Matchers::WithinAbs(window_coefficient_literal(w), 1e-12));
        }
    }
    SECTION("shape is validated") {
        REQUIRE_THROWS_AS(window_coefficient(Grid(5, 5, 1.0)), DimensionError);
    }
}

TEST_CASE("hand-computed window coefficients", "[aggreg]") {
    // Fully lit ring: 12 edges -> 24/56 = 3/7, exactly.
    REQUIRE(window_coefficient(window3({1, 1, 1, 1, 1, 1, 1, 1, 1})) == 3.0 / 7.0);
    // A 2x2 block seen from its top-left pixel: ring holds E, S, SE with the
    // three edges E-S, E-SE, S-SE -> 6/56 = 3/28.
    REQUIRE(window_coefficient(window3({0, 0, 0, 0, 1, 1, 0, 1, 1})) == 3.0 / 28.0);
    // Two adjacent ring pixels (N and NE): one edge -> 2/56 = 1/28.
    REQUIRE(window_coefficient(window3({0, 1, 1, 0, 0, 0, 0, 0, 0})) == 1.0 / 28.0);
    // A lone ring pixel has no edges.
    REQUIRE(window_coefficient(window3({0, 1, 0, 0, 0, 0, 0, 0, 0})) == 0.0);
    // Two opposite corners never touch.
    REQUIRE(window_coefficient(window3({1, 0, 0, 0, 0, 0, 0, 0, 1})) == 0.0);
    // The centre alone contributes nothing.
    REQUIRE(window_coefficient(window3({0, 0, 0, 0, 1, 0, 0, 0, 0})) == 0.0);
}

TEST_CASE("graph oracle matches the windowed coefficients on binary masks", "[aggreg]") {
    SECTION("random masks up to 12x12") {
        Rng rng(99);
        for (int t = 0; t < 40; ++t) {
            int h = 3 + static_cast<int>(rng.below(10));
            int w = 3 + static_cast<int>(rng.below(10));
            Mask m = random_binary_mask(h, w, rng);
            AggregationMap map = aggregation_map(m);
            for (int r = 0; r < h; ++r)
                for (int c = 0; c < w; ++c) {
                    RationalCoefficient rc = aggregation_oracle(m, r, c);
                    REQUIRE(rc.denominator == 56);
                    REQUIRE(rc.numerator % 2 == 0);
                    REQUIRE_THAT(map.c.at(r, c),
                                 Catch::Matchers::WithinAbs(rc.value(), 1e-12));
                }
        }
    }
    SECTION("all-ones mask: interior 3/7 exactly, border values fall off") {
        Mask ones(Grid(12, 12, 1.0), MaskKind::binary);
        AggregationMap map = aggregation_map(ones);
        for (int r = 1; r < 11; ++r)
            for (int c = 1; c < 11; ++c) REQUIRE(map.c.at(r, c) == 3.0 / 7.0);
        // Corner: ring holds E, S, SE -> 3 edges.
        REQUIRE(map.c.at(0, 0) == 3.0 / 28.0);
        REQUIRE(aggregation_oracle(ones, 0, 0).numerator == 6);
        // Top edge (non-corner): ring holds W, E, SW, S, SE -> 6 edges.
        REQUIRE(map.c.at(0, 5) == 3.0 / 14.0);
        REQUIRE(aggregation_oracle(ones, 0, 5).numerator == 12);
        // And the interior rational is exactly 24/56.
        REQUIRE(aggregation_oracle(ones, 5, 5).numerator == 24);
    }
    SECTION("oracle preconditions") {
        Mask soft(Grid(4, 4, 0.5), MaskKind::continuous);
        REQUIRE_THROWS_AS(aggregation_oracle(soft, 1, 1), PreconditionError);
        Mask bin(Grid(4, 4, 1.0), MaskKind::binary);
        REQUIRE_THROWS_AS(aggregation_oracle(bin, 4, 0), ParameterError);
        REQUIRE_THROWS_AS(aggregation_oracle(bin, 0, -1), ParameterError);
    }
}

TEST_CASE("aggregation map reporting means", "[aggreg]") {
    // A 2x2 block inside 5x5: each block pixel sees the 2x2-corner ring, so
    // C = 3/28 at the four block pixels and the literal mean is
    // (4 * 3/28) / 25 = 3/175.
    Grid g(5, 5, 0.0);
    for (int r = 1; r <= 2; ++r)
        for (int c = 1; c <= 2; ++c) g.at(r, c) = 1.0;
    Mask m(g, MaskKind::binary);

    AggregationMap whole = aggregation_map(m);
    REQUIRE_THAT(whole.mean_literal, Catch::Matchers::WithinAbs(3.0 / 175.0, 1e-15));
    REQUIRE(whole.mean_support == whole.mean_literal);

    SECTION("support mean over the block itself") {
        Mask obj(g, MaskKind::binary);
        AggregationMap map = aggregation_map(m, obj);
        REQUIRE_THAT(map.mean_support, Catch::Matchers::WithinAbs(3.0 / 28.0, 1e-15));
        REQUIRE_THAT(map.mean_literal, Catch::Matchers::WithinAbs(3.0 / 175.0, 1e-15));
    }
    SECTION("support mean over the full frame equals the literal mean") {
        Mask obj(Grid(5, 5, 1.0), MaskKind::binary);
        AggregationMap map = aggregation_map(m, obj);
        REQUIRE(map.mean_support == map.mean_literal);
    }
    SECTION("object mask validation") {
        REQUIRE_THROWS_AS(aggregation_map(m, Mask(Grid(5, 5, 0.5), MaskKind::continuous)),
                          PreconditionError);
        REQUIRE_THROWS_AS(aggregation_map(m, Mask::zeros(5, 5, MaskKind::binary)),
                          PreconditionError);
        REQUIRE_THROWS_AS(aggregation_map(m, Mask(Grid(4, 5, 1.0), MaskKind::binary)),
                          DimensionError);
    }
}

TEST_CASE("clustering grows with compactness at fixed area", "[aggreg]") {
    // A solid square of n pixels clusters; n isolated pixels (spaced apart)
    // do not cluster at all.
    for (int side : {2, 3, 4}) {
        const int n = side * side;
        Grid solid(16, 16, 0.0);
        for (int r = 0; r < side; ++r)
            for (int c = 0; c < side; ++c) solid.at(6 + r, 6 + c) = 1.0;
        Grid sparse(16, 16, 0.0);
        int placed = 0;
        for (int r = 0; r < 16 && placed < n; r += 2)
            for (int c = 0; c < 16 && placed < n; c += 2) {
                sparse.at(r, c) = 1.0;
                ++placed;
            }
        REQUIRE(placed == n);
        double dense_mean =
            aggregation_map(Mask(solid, MaskKind::binary)).mean_literal;
        double sparse_mean =
            aggregation_map(Mask(sparse, MaskKind::binary)).mean_literal;
        REQUIRE(sparse_mean == 0.0);
        REQUIRE(dense_mean > 0.0);
    }
}

TEST_CASE("aggregation loss values", "[aggreg]") {
    SECTION("empty mask: zero loss, zero gradient") {
        AggregationLoss l = loss_agg(Mask::zeros(9, 9, MaskKind::continuous));
        REQUIRE(l.value == 0.0);
        for (int r = 0; r < 9; ++r)
            for (int c = 0; c < 9; ++c) REQUIRE(l.grad.at(r, c) == 0.0);
    }
    SECTION("all-ones 8x8: the coefficient field sums to exactly 21") {
        // 36 interior pixels at 3/7, 24 border pixels at 3/14, 4 corners at
        // 3/28: 36*3/7 + 24*3/14 + 4*3/28 = 21, so the loss is -21/64.
        AggregationLoss l = loss_agg(Mask(Grid(8, 8, 1.0), MaskKind::binary));
        REQUIRE_THAT(l.value, Catch::Matchers::WithinAbs(-21.0 / 64.0, 1e-14));
        // Raising any pixel further would only increase clustering, so the
        // descent direction is negative everywhere.
        for (int r = 0; r < 8; ++r)
            for (int c = 0; c < 8; ++c) REQUIRE(l.grad.at(r, c) < 0.0);
        // Symmetry of the configuration is reflected in the gradient.
        for (int r = 0; r < 8; ++r)
            for (int c = 0; c < 8; ++c) {
                REQUIRE(l.grad.at(r, c) == l.grad.at(7 - r, c));
                REQUIRE(l.grad.at(r, c) == l.grad.at(r, 7 - c));
                REQUIRE(l.grad.at(r, c) == l.grad.at(c, r));
            }
    }
    SECTION("loss value matches the literal mean") {
        Rng rng(7);
        Mask m = random_soft_mask(10, 10, rng);
        AggregationLoss l = loss_agg(m);
        AggregationMap map = aggregation_map(m);
        REQUIRE_THAT(l.value, Catch::Matchers::WithinAbs(-map.mean_literal, 1e-15));
    }
}

TEST_CASE("aggregation loss gradient agrees with finite differences", "[aggreg]") {
    Rng rng(424242);
    for (int t = 0; t < 20; ++t) {
        Mask m = random_soft_mask(16, 16, rng);
        AggregationLoss l = loss_agg(m);
        Grid fd = testsupport::fd_gradient(
            [](const Grid& g) { return loss_agg(Mask(g, MaskKind::continuous)).value; },
            m.grid(), 1e-4);
        REQUIRE(testsupport::max_relative_error(l.grad, fd) <= 1e-4);
    }
}
