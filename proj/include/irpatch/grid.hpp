#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "errors.hpp"

namespace irpatch {

// Dense row-major grid of doubles. The one data layout shared by scenes,
// masks, kernels and gradients; range invariants live in the wrapper types.
class Grid {
public:
    Grid() : height_(0), width_(0) {}

    Grid(int height, int width, double fill = 0.0)
        : height_(height), width_(width) {
        if (height <= 0 || width <= 0)
            throw DimensionError("grid dimensions must be positive, got " +
                                 std::to_string(height) + "x" + std::to_string(width));
        data_.assign(static_cast<std::size_t>(height) * width, fill);
    }

    Grid(int height, int width, std::vector<double> data)
        : height_(height), width_(width), data_(std::move(data)) {
        if (height <= 0 || width <= 0)
            throw DimensionError("grid dimensions must be positive");
        if (data_.size() != static_cast<std::size_t>(height) * width)
            throw DimensionError("grid data size " + std::to_string(data_.size()) +
                                 " does not match " + std::to_string(height) + "x" +
                                 std::to_string(width));
    }

    int height() const { return height_; }
    int width() const { return width_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& at(int r, int c) { return data_[static_cast<std::size_t>(r) * width_ + c]; }
    double at(int r, int c) const { return data_[static_cast<std::size_t>(r) * width_ + c]; }

    // Zero-padded read: out-of-bounds coordinates contribute nothing.
    double at_or_zero(int r, int c) const {
        if (r < 0 || r >= height_ || c < 0 || c >= width_) return 0.0;
        return at(r, c);
    }

    bool in_bounds(int r, int c) const {
        return r >= 0 && r < height_ && c >= 0 && c < width_;
    }

    const std::vector<double>& data() const { return data_; }
    std::vector<double>& data() { return data_; }

    bool same_shape(const Grid& other) const {
        return height_ == other.height_ && width_ == other.width_;
    }

    double sum() const {
        double s = 0.0;
        for (double v : data_) s += v;
        return s;
    }

    double l1_norm() const {
        double s = 0.0;
        for (double v : data_) s += std::abs(v);
        return s;
    }

    double min_value() const { return *std::min_element(data_.begin(), data_.end()); }
    double max_value() const { return *std::max_element(data_.begin(), data_.end()); }

    Grid& operator+=(const Grid& other) {
        require_same_shape(other, "operator+=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
        return *this;
    }

    Grid& operator-=(const Grid& other) {
        require_same_shape(other, "operator-=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
        return *this;
    }

    Grid& operator*=(double s) {
        for (double& v : data_) v *= s;
        return *this;
    }

    // Entrywise product.
    Grid& hadamard(const Grid& other) {
        require_same_shape(other, "hadamard");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] *= other.data_[i];
        return *this;
    }

    Grid& clamp(double lo, double hi) {
        for (double& v : data_) v = std::clamp(v, lo, hi);
        return *this;
    }

    bool operator==(const Grid& other) const {
        return height_ == other.height_ && width_ == other.width_ && data_ == other.data_;
    }

    void require_same_shape(const Grid& other, const char* where) const {
        if (!same_shape(other))
            throw DimensionError(std::string(where) + ": shape mismatch " +
                                 std::to_string(height_) + "x" + std::to_string(width_) +
                                 " vs " + std::to_string(other.height_) + "x" +
                                 std::to_string(other.width_));
    }

private:
    int height_;
    int width_;
    std::vector<double> data_;
};

inline Grid operator+(Grid a, const Grid& b) { a += b; return a; }
inline Grid operator-(Grid a, const Grid& b) { a -= b; return a; }
inline Grid operator*(Grid a, double s) { a *= s; return a; }
inline Grid operator*(double s, Grid a) { a *= s; return a; }

} // namespace irpatch
