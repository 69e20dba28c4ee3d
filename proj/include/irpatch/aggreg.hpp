#pragma once

#include <array>
#include <optional>
#include <utility>

#include "image.hpp"
#include "kernels.hpp"

namespace irpatch {

// The 8-neighbourhood of a pixel, viewed as a ring of vertices. Two ring
// vertices are connected when they are themselves 8-neighbours: each corner
// touches 2 ring vertices, each edge-centre touches 4, so the ring carries
// 12 undirected edges and a total vertex degree of 24.
namespace ring {

constexpr std::array<std::pair<int, int>, 8> offsets = {{
    {-1, -1}, {-1, 0}, {-1, 1},
    { 0, -1},          { 0, 1},
    { 1, -1}, { 1, 0}, { 1, 1},
}};

constexpr bool touching(std::pair<int, int> a, std::pair<int, int> b) {
    int dr = a.first - b.first, dc = a.second - b.second;
    return (dr >= -1 && dr <= 1) && (dc >= -1 && dc <= 1);
}

// The 12 ring edges as index pairs into `offsets`.
constexpr std::array<std::pair<int, int>, 12> edges = {{
    {0, 1}, {0, 3}, {1, 2}, {1, 3}, {1, 4}, {2, 4},
    {3, 5}, {3, 6}, {4, 6}, {4, 7}, {5, 6}, {6, 7},
}};

// Degree normaliser k_i (k_i - 1) with k_i = 8 neighbours: the clustering
// coefficient denominator, fixed everywhere including borders.
constexpr double denom = 56.0;

} // namespace ring

// Per-vertex decay factors for one 3x3 window: the vertex value damped by the
// mean of its ring-adjacent values. The centre entry is unused downstream
// (the clustering kernel weights it zero) and is set to zero.
inline Grid decay_matrix(const Grid& window) {
    if (window.height() != 3 || window.width() != 3)
        throw DimensionError("decay_matrix expects a 3x3 window");
    Grid alpha(3, 3, 0.0);
    for (std::size_t j = 0; j < ring::offsets.size(); ++j) {
        auto pj = ring::offsets[j];
        double neigh_sum = 0.0;
        int neigh_count = 0;
        for (std::size_t k = 0; k < ring::offsets.size(); ++k) {
            if (k == j) continue;
            auto pk = ring::offsets[k];
            if (ring::touching(pj, pk)) {
                neigh_sum += window.at(pk.first + 1, pk.second + 1);
                ++neigh_count;
            }
        }
        alpha.at(pj.first + 1, pj.second + 1) =
            window.at(pj.first + 1, pj.second + 1) * (neigh_sum / neigh_count);
    }
    return alpha;
}

// Soft clustering coefficient of one window by the literal composition:
// clustering kernel dotted with the decay matrix, over the fixed denominator.
inline double window_coefficient_literal(const Grid& window) {
    Grid alpha = decay_matrix(window);
    Kernel3x3 k = Kernel3x3::clustering();
    double acc = 0.0;
    for (int dr = -1; dr <= 1; ++dr)
        for (int dc = -1; dc <= 1; ++dc)
            acc += k.at(dr, dc) * alpha.at(dr + 1, dc + 1);
    return acc / ring::denom;
}

// Fast path: the kernel-decay composition collapses to twice the sum of
// ring-edge products, so each window costs 12 multiplies.
inline double window_coefficient(const Grid& window) {
    if (window.height() != 3 || window.width() != 3)
        throw DimensionError("window_coefficient expects a 3x3 window");
    double acc = 0.0;
    for (auto [a, b] : ring::edges) {
        auto pa = ring::offsets[static_cast<std::size_t>(a)];
        auto pb = ring::offsets[static_cast<std::size_t>(b)];
        acc += window.at(pa.first + 1, pa.second + 1) * window.at(pb.first + 1, pb.second + 1);
    }
    return 2.0 * acc / ring::denom;
}

// Exact clustering coefficient of a binary mask pixel, kept as a rational.
// Counts connected vertex pairs among the on-pixels of the ring by the graph
// definition directly; independent of the kernel path.
struct RationalCoefficient {
    int numerator = 0;   // 2 * (number of on-on ring edges)
    int denominator = 56;

    double value() const { return static_cast<double>(numerator) / denominator; }
};

inline RationalCoefficient aggregation_oracle(const Mask& m, int r, int c) {
    if (!m.is_binary())
        throw PreconditionError("aggregation_oracle requires a binary mask");
    if (!m.grid().in_bounds(r, c))
        throw ParameterError("aggregation_oracle: pixel out of bounds");
    int edges = 0;
    for (std::size_t a = 0; a < ring::offsets.size(); ++a) {
        for (std::size_t b = a + 1; b < ring::offsets.size(); ++b) {
            auto pa = ring::offsets[a];
            auto pb = ring::offsets[b];
            if (!ring::touching(pa, pb)) continue;
            if (m.grid().at_or_zero(r + pa.first, c + pa.second) == 1.0 &&
                m.grid().at_or_zero(r + pb.first, c + pb.second) == 1.0)
                ++edges;
        }
    }
    return RationalCoefficient{2 * edges, 56};
}

// Per-pixel soft clustering coefficients of a mask, with the two reporting
// means: `mean_literal` averages C.*M over the full grid, `mean_support`
// over the pixels of a reference support (the object region when given).
struct AggregationMap {
    Grid c;
    double mean_literal = 0.0;
    double mean_support = 0.0;
};

namespace detail {

inline Grid coefficient_grid(const Grid& m) {
    Grid c(m.height(), m.width(), 0.0);
    for (int r = 0; r < m.height(); ++r)
        for (int col = 0; col < m.width(); ++col) {
            double acc = 0.0;
            for (auto [a, b] : ring::edges) {
                auto pa = ring::offsets[static_cast<std::size_t>(a)];
                auto pb = ring::offsets[static_cast<std::size_t>(b)];
                acc += m.at_or_zero(r + pa.first, col + pa.second) *
                       m.at_or_zero(r + pb.first, col + pb.second);
            }
            c.at(r, col) = 2.0 * acc / ring::denom;
        }
    return c;
}

} // namespace detail

inline AggregationMap aggregation_map(const Mask& m,
                                      const std::optional<Mask>& m_obj = std::nullopt) {
    AggregationMap out;
    out.c = detail::coefficient_grid(m.grid());
    double total = 0.0;
    for (int r = 0; r < m.height(); ++r)
        for (int c = 0; c < m.width(); ++c)
            total += out.c.at(r, c) * m.at(r, c);
    out.mean_literal = total / static_cast<double>(m.grid().size());
    if (m_obj) {
        m.grid().require_same_shape(m_obj->grid(), "aggregation_map");
        if (!m_obj->is_binary())
            throw PreconditionError("aggregation_map: object mask must be binary");
        double sup = 0.0;
        long count = 0;
        for (int r = 0; r < m.height(); ++r)
            for (int c = 0; c < m.width(); ++c)
                if (m_obj->at(r, c) == 1.0) {
                    sup += out.c.at(r, c) * m.at(r, c);
                    ++count;
                }
        if (count == 0)
            throw PreconditionError("aggregation_map: object mask has empty support");
        out.mean_support = sup / static_cast<double>(count);
    } else {
        out.mean_support = out.mean_literal;
    }
    return out;
}

struct AggregationLoss {
    double value = 0.0;
    Grid grad;
};

// L_agg = -(1/(h*w)) * sum C .* M, differentiated through the coefficients:
// d/dM_u picks up C_u from the literal factor plus every window whose edge
// products contain M_u.
inline AggregationLoss loss_agg(const Mask& m) {
    const Grid& g = m.grid();
    const int h = g.height(), w = g.width();
    Grid c(h, w, 0.0);
    Grid chain(h, w, 0.0); // sum_i M_i * dC_i/dM_u
    for (int r = 0; r < h; ++r)
        for (int col = 0; col < w; ++col) {
            const double mi = g.at(r, col);
            double acc = 0.0;
            for (auto [a, b] : ring::edges) {
                auto pa = ring::offsets[static_cast<std::size_t>(a)];
                auto pb = ring::offsets[static_cast<std::size_t>(b)];
                const int ra = r + pa.first, ca = col + pa.second;
                const int rb = r + pb.first, cb = col + pb.second;
                const double va = g.at_or_zero(ra, ca);
                const double vb = g.at_or_zero(rb, cb);
                acc += va * vb;
                if (mi != 0.0) {
                    if (g.in_bounds(ra, ca)) chain.at(ra, ca) += 2.0 * mi * vb / ring::denom;
                    if (g.in_bounds(rb, cb)) chain.at(rb, cb) += 2.0 * mi * va / ring::denom;
                }
            }
            c.at(r, col) = 2.0 * acc / ring::denom;
        }
    const double inv_n = 1.0 / static_cast<double>(g.size());
    AggregationLoss out;
    out.grad = Grid(h, w, 0.0);
    double total = 0.0;
    for (int r = 0; r < h; ++r)
        for (int col = 0; col < w; ++col) {
            total += c.at(r, col) * g.at(r, col);
            out.grad.at(r, col) = -inv_n * (c.at(r, col) + chain.at(r, col));
        }
    out.value = -inv_n * total;
    return out;
}

} // namespace irpatch
