#pragma once

#include <algorithm>
#include <optional>
#include <vector>

#include "image.hpp"
#include "victim.hpp"

namespace irpatch {

inline double iou(const DetBox& a, const DetBox& b) {
    const int r0 = std::max(a.row, b.row);
    const int c0 = std::max(a.col, b.col);
    const int r1 = std::min(a.row + a.height, b.row + b.height);
    const int c1 = std::min(a.col + a.width, b.col + b.width);
    const double inter = static_cast<double>(std::max(0, r1 - r0)) * std::max(0, c1 - c0);
    const double uni = static_cast<double>(a.height) * a.width +
                       static_cast<double>(b.height) * b.width - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

// One scored prediction. `gt_present` marks scenes that actually contain an
// object; `true_positive` marks predictions that matched that object.
struct ApRecord {
    double score = 0.0;
    bool gt_present = false;
    bool true_positive = false;
};

// Average precision: area under the precision-recall curve with all-point
// interpolation (precision at recall r is the maximum precision at any
// recall >= r). Tied scores enter the curve together, so a constant scorer
// yields the single point (recall 1, precision = positive fraction).
// Returns nothing when the record set holds no positives.
inline std::optional<double> compute_ap(std::vector<ApRecord> records) {
    long positives = 0;
    for (const ApRecord& r : records)
        if (r.gt_present) ++positives;
    if (positives == 0) return std::nullopt;

    std::sort(records.begin(), records.end(),
              [](const ApRecord& a, const ApRecord& b) { return a.score > b.score; });

    struct Point {
        double recall;
        double precision;
    };
    std::vector<Point> points;
    long tp = 0, n = 0;
    std::size_t i = 0;
    while (i < records.size()) {
        std::size_t j = i;
        while (j < records.size() && records[j].score == records[i].score) {
            if (records[j].true_positive) ++tp;
            ++n;
            ++j;
        }
        points.push_back({static_cast<double>(tp) / positives,
                          static_cast<double>(tp) / n});
        i = j;
    }

    // interpolate, then merge runs of equal precision so each recall span is
    // integrated with one multiply (keeps the pinned exact cases exact)
    for (std::size_t k = points.size(); k-- > 1;)
        points[k - 1].precision = std::max(points[k - 1].precision, points[k].precision);

    double ap = 0.0;
    double r_prev = 0.0;
    std::size_t k = 0;
    while (k < points.size()) {
        std::size_t j = k;
        double r_end = points[k].recall;
        while (j + 1 < points.size() && points[j + 1].precision == points[k].precision) {
            ++j;
            r_end = points[j].recall;
        }
        ap += (r_end - r_prev) * points[k].precision;
        r_prev = r_end;
        k = j + 1;
    }
    return ap;
}

// Median smoothing with the neighbourhood clipped at the borders (no
// padding), taking the lower median, so output values always come from the
// input and a constant image is a fixed point.
inline GrayImage median_filter(const GrayImage& img, int ksize) {
    if (ksize < 3 || ksize % 2 == 0)
        throw ParameterError("median_filter kernel must be odd and >= 3, got " +
                             std::to_string(ksize));
    const int half = ksize / 2;
    Grid out(img.height(), img.width(), 0.0);
    std::vector<double> window;
    window.reserve(static_cast<std::size_t>(ksize) * ksize);
    for (int r = 0; r < img.height(); ++r)
        for (int c = 0; c < img.width(); ++c) {
            window.clear();
            for (int dr = -half; dr <= half; ++dr)
                for (int dc = -half; dc <= half; ++dc) {
                    int nr = r + dr, nc = c + dc;
                    if (nr < 0 || nr >= img.height() || nc < 0 || nc >= img.width()) continue;
                    window.push_back(img.at(nr, nc));
                }
            std::size_t mid = (window.size() - 1) / 2;
            std::nth_element(window.begin(), window.begin() + static_cast<long>(mid),
                             window.end());
            out.at(r, c) = window[mid];
        }
    return GrayImage(std::move(out));
}

} // namespace irpatch
