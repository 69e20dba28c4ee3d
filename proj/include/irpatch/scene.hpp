#pragma once

#include <cmath>
#include <utility>

#include "image.hpp"
#include "rng.hpp"

namespace irpatch {

// Synthetic infrared scene: a warm elliptical blob on a cooler uniform
// background, plus seeded per-pixel uniform noise.
struct SceneSpec {
    int height = 64;
    int width = 64;
    double background = 0.05;
    double blob_row = 32.0;
    double blob_col = 32.0;
    double blob_axis_r = 16.0; // vertical semi-axis in pixels
    double blob_axis_c = 3.4;  // horizontal semi-axis in pixels
    double blob_intensity = 0.85;
    double noise_amplitude = 0.01;
    std::uint64_t seed = 1;
};

struct Scene {
    GrayImage image;
    Mask object_mask; // binary, exactly the blob pixels
    SceneSpec spec;   // the parameters the scene was generated from
};

inline Scene generate_scene(const SceneSpec& spec) {
    if (spec.height <= 0 || spec.width <= 0)
        throw ParameterError("scene dimensions must be positive");
    if (!(spec.background >= 0.0 && spec.background <= 1.0))
        throw ParameterError("background intensity out of [0,1]");
    if (!(spec.blob_intensity >= 0.0 && spec.blob_intensity <= 1.0))
        throw ParameterError("blob intensity out of [0,1]");
    if (!(spec.blob_intensity > spec.background))
        throw ParameterError("blob must be warmer than the background");
    if (!(spec.blob_axis_r > 0.0 && spec.blob_axis_c > 0.0))
        throw ParameterError("blob axes must be positive");
    if (!(spec.noise_amplitude >= 0.0))
        throw ParameterError("noise amplitude must be non-negative");
    if (spec.blob_row - spec.blob_axis_r < 0.0 ||
        spec.blob_row + spec.blob_axis_r > spec.height - 1 ||
        spec.blob_col - spec.blob_axis_c < 0.0 ||
        spec.blob_col + spec.blob_axis_c > spec.width - 1)
        throw ParameterError("blob extends outside the frame");

    Grid img(spec.height, spec.width, 0.0);
    Grid obj(spec.height, spec.width, 0.0);
    Rng rng(spec.seed);
    for (int r = 0; r < spec.height; ++r)
        for (int c = 0; c < spec.width; ++c) {
            const double nr = (r - spec.blob_row) / spec.blob_axis_r;
            const double nc = (c - spec.blob_col) / spec.blob_axis_c;
            const bool inside = nr * nr + nc * nc <= 1.0;
            double v = inside ? spec.blob_intensity : spec.background;
            if (spec.noise_amplitude > 0.0)
                v += rng.uniform(-spec.noise_amplitude, spec.noise_amplitude);
            img.at(r, c) = std::clamp(v, 0.0, 1.0);
            if (inside) obj.at(r, c) = 1.0;
        }
    return Scene{GrayImage(std::move(img)), Mask(std::move(obj), MaskKind::binary), spec};
}

} // namespace irpatch
