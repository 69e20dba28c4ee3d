#pragma once

#include <string>
#include <utility>

#include "grid.hpp"

namespace irpatch {

// Grayscale intensity image; every entry must lie in [0,1].
class GrayImage {
public:
    GrayImage() = default;

    explicit GrayImage(Grid g) : grid_(std::move(g)) {
        for (int r = 0; r < grid_.height(); ++r)
            for (int c = 0; c < grid_.width(); ++c) {
                double v = grid_.at(r, c);
                if (!(v >= 0.0 && v <= 1.0))
                    throw ParameterError("image intensity out of [0,1] at (" +
                                         std::to_string(r) + "," + std::to_string(c) +
                                         "): " + std::to_string(v));
            }
    }

    GrayImage(int height, int width, double fill) : GrayImage(Grid(height, width, fill)) {}

    int height() const { return grid_.height(); }
    int width() const { return grid_.width(); }
    double at(int r, int c) const { return grid_.at(r, c); }
    const Grid& grid() const { return grid_; }

    bool operator==(const GrayImage& other) const { return grid_ == other.grid_; }

private:
    Grid grid_;
};

enum class MaskKind { continuous, binary };

// Patch mask over an image: continuous entries in [0,1] during optimization,
// exactly {0,1} once binarized.
class Mask {
public:
    Mask() : kind_(MaskKind::continuous) {}

    Mask(Grid g, MaskKind kind) : grid_(std::move(g)), kind_(kind) {
        for (int r = 0; r < grid_.height(); ++r)
            for (int c = 0; c < grid_.width(); ++c) {
                double v = grid_.at(r, c);
                if (kind_ == MaskKind::binary) {
                    if (v != 0.0 && v != 1.0)
                        throw ParameterError("binary mask entry not in {0,1} at (" +
                                             std::to_string(r) + "," + std::to_string(c) +
                                             "): " + std::to_string(v));
                } else if (!(v >= 0.0 && v <= 1.0)) {
                    throw ParameterError("mask entry out of [0,1] at (" +
                                         std::to_string(r) + "," + std::to_string(c) +
                                         "): " + std::to_string(v));
                }
            }
    }

    static Mask zeros(int height, int width, MaskKind kind = MaskKind::continuous) {
        return Mask(Grid(height, width, 0.0), kind);
    }

    int height() const { return grid_.height(); }
    int width() const { return grid_.width(); }
    double at(int r, int c) const { return grid_.at(r, c); }
    const Grid& grid() const { return grid_; }
    MaskKind kind() const { return kind_; }
    bool is_binary() const { return kind_ == MaskKind::binary; }

    double l1_norm() const { return grid_.l1_norm(); }

    bool operator==(const Mask& other) const {
        return kind_ == other.kind_ && grid_ == other.grid_;
    }

private:
    Grid grid_;
    MaskKind kind_;
};

// Uniform covering intensity for the occluding patch material.
struct CoverSpec {
    double value = 0.05;

    explicit CoverSpec(double v = 0.05) : value(v) {
        if (!(value >= 0.0 && value <= 1.0))
            throw ParameterError("cover value out of [0,1]: " + std::to_string(value));
    }
};

// x_adv = x .* (1 - M) + cover .* M, i.e. the patch replaces the scene
// wherever the mask is on. Entries are clamped to absorb rounding drift.
inline GrayImage compose_adversarial(const GrayImage& x, const CoverSpec& cover, const Mask& m) {
    x.grid().require_same_shape(m.grid(), "compose_adversarial");
    Grid out(x.height(), x.width(), 0.0);
    for (int r = 0; r < x.height(); ++r)
        for (int c = 0; c < x.width(); ++c) {
            double mv = m.at(r, c);
            out.at(r, c) = x.at(r, c) * (1.0 - mv) + cover.value * mv;
        }
    out.clamp(0.0, 1.0);
    return GrayImage(std::move(out));
}

} // namespace irpatch
