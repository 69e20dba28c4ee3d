#pragma once

#include <array>
#include <cmath>

#include "grid.hpp"

namespace irpatch {

// Fixed 3x3 stencil weights, row-major.
class Kernel3x3 {
public:
    Kernel3x3() : w_{} {}
    explicit Kernel3x3(const std::array<double, 9>& w) : w_(w) {}

    double at(int dr, int dc) const { return w_[static_cast<std::size_t>((dr + 1) * 3 + dc + 1)]; }
    const std::array<double, 9>& weights() const { return w_; }

    // Neighbourhood-connectivity kernel: each entry is the number of other
    // 8-neighbours of the centre that the entry's position touches (corners
    // touch 2, edge-centres touch 4, the centre itself is excluded).
    static Kernel3x3 clustering() {
        return Kernel3x3({2, 4, 2,
                          4, 0, 4,
                          2, 4, 2});
    }

private:
    std::array<double, 9> w_;
};

// Convolution with zero padding; kernel must have odd height and width.
// Kernels used here are centro-symmetric, so no flip is applied.
inline Grid convolve(const Grid& img, const Grid& kernel) {
    if (kernel.height() % 2 == 0 || kernel.width() % 2 == 0)
        throw ParameterError("convolve: kernel dimensions must be odd, got " +
                             std::to_string(kernel.height()) + "x" +
                             std::to_string(kernel.width()));
    const int kr = kernel.height() / 2;
    const int kc = kernel.width() / 2;
    Grid out(img.height(), img.width(), 0.0);
    for (int r = 0; r < img.height(); ++r) {
        for (int c = 0; c < img.width(); ++c) {
            double acc = 0.0;
            for (int dr = -kr; dr <= kr; ++dr)
                for (int dc = -kc; dc <= kc; ++dc)
                    acc += kernel.at(dr + kr, dc + kc) * img.at_or_zero(r + dr, c + dc);
            out.at(r, c) = acc;
        }
    }
    return out;
}

inline Grid convolve3x3(const Grid& img, const Kernel3x3& k) {
    Grid kernel(3, 3, {k.weights()[0], k.weights()[1], k.weights()[2],
                       k.weights()[3], k.weights()[4], k.weights()[5],
                       k.weights()[6], k.weights()[7], k.weights()[8]});
    return convolve(img, kernel);
}

// Normalized Gaussian kernel; size must be odd and positive, sigma positive.
inline Grid gaussian_kernel(int size, double sigma) {
    if (size <= 0 || size % 2 == 0)
        throw ParameterError("gaussian_kernel: size must be odd and positive, got " +
                             std::to_string(size));
    if (!(sigma > 0.0))
        throw ParameterError("gaussian_kernel: sigma must be positive");
    Grid k(size, size, 0.0);
    const int half = size / 2;
    double total = 0.0;
    for (int r = -half; r <= half; ++r) {
        for (int c = -half; c <= half; ++c) {
            double v = std::exp(-(r * r + c * c) / (2.0 * sigma * sigma));
            k.at(r + half, c + half) = v;
            total += v;
        }
    }
    k *= 1.0 / total;
    return k;
}

// Min-max rescale to [0,1]. A constant grid maps to all ones so that using
// the result as a multiplicative gate leaves the other factor untouched.
inline Grid minmax_normalize(const Grid& g) {
    const double lo = g.min_value();
    const double hi = g.max_value();
    Grid out(g.height(), g.width(), 1.0);
    if (hi > lo) {
        const double inv = 1.0 / (hi - lo);
        for (int r = 0; r < g.height(); ++r)
            for (int c = 0; c < g.width(); ++c)
                out.at(r, c) = (g.at(r, c) - lo) * inv;
    }
    return out;
}

} // namespace irpatch
