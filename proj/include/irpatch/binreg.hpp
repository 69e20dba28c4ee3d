#pragma once

#include "image.hpp"

namespace irpatch {

struct BinRegConfig {
    double v_thre = 0.5; // hinge threshold separating "treat as off" from "drive to 1"
    double alpha = 1.0;  // weight of the squared hinge term against the L1 term

    BinRegConfig() = default;
    BinRegConfig(double v, double a) : v_thre(v), alpha(a) {
        if (!(v_thre > 0.0 && v_thre < 1.0))
            throw ParameterError("v_thre must lie strictly inside (0,1): " + std::to_string(v_thre));
        if (!(alpha >= 0.0))
            throw ParameterError("alpha must be non-negative: " + std::to_string(alpha));
    }
};

// Hinge map H: entries at or below the threshold read as already-satisfied
// (value 1 => zero squared error), entries above pass through unchanged.
// Values exactly at the threshold take the first branch, so the derivative
// there is 0.
inline Grid h_map(const Mask& m, double v_thre) {
    Grid out(m.height(), m.width(), 0.0);
    for (int r = 0; r < m.height(); ++r)
        for (int c = 0; c < m.width(); ++c) {
            double v = m.at(r, c);
            out.at(r, c) = (v <= v_thre) ? 1.0 : v;
        }
    return out;
}

struct BinaryLoss {
    double value = 0.0;
    double l1 = 0.0;
    double mse = 0.0;
    Grid grad;
};

// L_binary = |M|_1 + alpha * (1/(h*w)) * sum (H(M) - 1)^2. The L1 subgradient
// is taken as the constant 1 (mask entries are non-negative); the hinge
// contributes only above the threshold.
inline BinaryLoss loss_binary(const Mask& m, const BinRegConfig& cfg = BinRegConfig()) {
    const Grid& g = m.grid();
    const double inv_n = 1.0 / static_cast<double>(g.size());
    BinaryLoss out;
    out.grad = Grid(g.height(), g.width(), 0.0);
    for (int r = 0; r < g.height(); ++r)
        for (int c = 0; c < g.width(); ++c) {
            const double v = g.at(r, c);
            out.l1 += v;
            double grad = 1.0;
            if (v > cfg.v_thre) {
                const double d = v - 1.0;
                out.mse += d * d;
                grad += cfg.alpha * 2.0 * inv_n * d;
            }
            out.grad.at(r, c) = grad;
        }
    out.mse *= inv_n;
    out.value = out.l1 + cfg.alpha * out.mse;
    return out;
}

} // namespace irpatch
