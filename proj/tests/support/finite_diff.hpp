#pragma once

// Central finite-difference oracles shared by the gradient tests. Every
// analytic gradient in the library is validated against these, never against
// another analytic path.

#include <cmath>
#include <functional>

#include <irpatch/grid.hpp>

namespace testsupport {

// Central differences of a scalar function of a grid, probing every entry.
inline irpatch::Grid fd_gradient(const std::function<double(const irpatch::Grid&)>& f,
                                 const irpatch::Grid& at, double step) {
    irpatch::Grid g(at.height(), at.width(), 0.0);
    irpatch::Grid work = at;
    for (int r = 0; r < at.height(); ++r)
        for (int c = 0; c < at.width(); ++c) {
            const double v = at.at(r, c);
            work.at(r, c) = v + step;
            const double hi = f(work);
            work.at(r, c) = v - step;
            const double lo = f(work);
            work.at(r, c) = v;
            g.at(r, c) = (hi - lo) / (2.0 * step);
        }
    return g;
}

// Max relative error between two gradients, measured entrywise against
// max(|expected|, floor). The floor keeps near-zero entries from blowing up
// the ratio while still requiring them to be near zero.
inline double max_relative_error(const irpatch::Grid& actual, const irpatch::Grid& expected,
                                 double floor = 1e-8) {
    double worst = 0.0;
    for (int r = 0; r < actual.height(); ++r)
        for (int c = 0; c < actual.width(); ++c) {
            const double denom = std::max(std::abs(expected.at(r, c)), floor);
            worst = std::max(worst, std::abs(actual.at(r, c) - expected.at(r, c)) / denom);
        }
    return worst;
}

} // namespace testsupport
