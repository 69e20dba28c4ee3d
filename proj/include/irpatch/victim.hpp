#pragma once

#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <unistd.h>

#include "image.hpp"
#include "pnm.hpp"

namespace irpatch {

// Axis-aligned detection box in pixel coordinates.
struct DetBox {
    int row = 0;
    int col = 0;
    int height = 0;
    int width = 0;
};

struct Detection {
    DetBox box;
    double score = 0.0;
};

// All window responses of one image. `top1` indexes the highest score; on
// ties the smallest index wins, and detectors emit windows in row-major
// order, so the tie-break is the smallest row-major window.
struct DetectionSet {
    std::vector<Detection> detections;
    std::size_t top1 = 0;

    const Detection& top() const { return detections[top1]; }
};

inline std::size_t argmax_detection(const std::vector<Detection>& dets) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < dets.size(); ++i)
        if (dets[i].score > dets[best].score) best = i;
    return best;
}

// Scoring contract for attack targets. Implementations must be safe to call
// concurrently on distinct images.
class VictimModel {
public:
    virtual ~VictimModel() = default;
    virtual DetectionSet score(const GrayImage& x) const = 0;
    // Gradient of the top-1 score with respect to every pixel.
    virtual Grid grad_top1(const GrayImage& x) const = 0;
};

struct AttackLoss {
    double value = 0.0; // the top-1 confidence itself
    Grid grad;
};

inline AttackLoss loss_attack(const VictimModel& model, const GrayImage& x_adv) {
    DetectionSet det = model.score(x_adv);
    if (det.detections.empty())
        throw PreconditionError("loss_attack: victim produced an empty detection set");
    AttackLoss out;
    out.value = det.top().score;
    out.grad = model.grad_top1(x_adv);
    return out;
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Sliding-window matched filter: every window scores
// sigmoid(<weights, window> + bias). Linear-in-pixels inside the sigmoid, so
// the top-1 gradient is the weight pattern scaled by the sigmoid slope,
// spread over the winning window.
class TemplateDetector : public VictimModel {
public:
    TemplateDetector(Grid weights, double bias, int stride)
        : weights_(std::move(weights)), bias_(bias), stride_(stride) {
        if (stride_ < 1)
            throw ParameterError("template stride must be >= 1, got " + std::to_string(stride_));
    }

    const Grid& weights() const { return weights_; }
    double bias() const { return bias_; }
    int stride() const { return stride_; }

    DetectionSet score(const GrayImage& x) const override {
        require_fits(x);
        DetectionSet out;
        for (int r = 0; r + weights_.height() <= x.height(); r += stride_)
            for (int c = 0; c + weights_.width() <= x.width(); c += stride_) {
                double z = bias_;
                for (int dr = 0; dr < weights_.height(); ++dr)
                    for (int dc = 0; dc < weights_.width(); ++dc)
                        z += weights_.at(dr, dc) * x.at(r + dr, c + dc);
                out.detections.push_back(
                    {DetBox{r, c, weights_.height(), weights_.width()}, sigmoid(z)});
            }
        out.top1 = argmax_detection(out.detections);
        return out;
    }

    Grid grad_top1(const GrayImage& x) const override {
        DetectionSet det = score(x);
        const Detection& top = det.top();
        const double s = top.score;
        const double slope = s * (1.0 - s);
        Grid g(x.height(), x.width(), 0.0);
        for (int dr = 0; dr < weights_.height(); ++dr)
            for (int dc = 0; dc < weights_.width(); ++dc)
                g.at(top.box.row + dr, top.box.col + dc) = slope * weights_.at(dr, dc);
        return g;
    }

private:
    void require_fits(const GrayImage& x) const {
        if (weights_.height() > x.height() || weights_.width() > x.width())
            throw DimensionError("template " + std::to_string(weights_.height()) + "x" +
                                 std::to_string(weights_.width()) + " does not fit image " +
                                 std::to_string(x.height()) + "x" + std::to_string(x.width()));
    }

    Grid weights_;
    double bias_;
    int stride_;
};

// Construction recipe for the built-in warm-bar template. Its positive
// response lives on three short diagonal zigzag chains of hot pixels on the
// central column pair of a neutral stripe: one chain at the template centre
// and two distal ones near the ends of a row band. Consecutive zigzag cells
// touch only diagonally, so a mask covering exactly the hot cells has zero
// clustering everywhere — contiguity is a separate objective the optimizer
// has to choose to serve. Every other stripe cell is weightless: all the
// negative response sits in the stiff cold frame columns flanking the
// stripe, which keeps windows that catch the target off-centre cold, keeps
// the best window unique, and sets the score floor an attack bottoms out at.
// The distal chains sit beyond the vertical reach of any compact same-area
// shape placed at the centre — that is what makes the learned shape matter.
struct BarTemplateSpec {
    int rows = 64;
    int cols = 16;
    int band_r0 = 20, band_r1 = 44;   // half-open row band holding the chains
    int stripe_c0 = 5, stripe_c1 = 12; // half-open neutral column stripe
    int center_r = 32;                 // centre row of the middle zigzag
    int center_len = 3;                // rows in the middle zigzag
    int distal_len = 2;                // rows in each distal zigzag
    double w_hot_center = 1.20;
    double w_hot_distal = 0.55;
    double w_body = 0.0;  // zigzag-completing cells
    double w_glue = 0.0;  // remaining stripe cells
    double w_bg = -0.065; // frame columns outside the stripe
    double bias = -0.17;
    int stride = 4;
};

inline Grid make_bar_weights(const BarTemplateSpec& s) {
    if (s.rows <= 0 || s.cols <= 0)
        throw ParameterError("template dimensions must be positive");
    if (s.band_r0 < 0 || s.band_r1 > s.rows || s.band_r0 >= s.band_r1 ||
        s.stripe_c0 < 0 || s.stripe_c1 > s.cols || s.stripe_c0 >= s.stripe_c1)
        throw ParameterError("template band/stripe extents out of range");
    if (s.stripe_c1 - s.stripe_c0 < 3)
        throw ParameterError("stripe must be at least 3 columns wide");
    if (s.center_len < 2 || s.distal_len < 2)
        throw ParameterError("zigzag chains need at least 2 rows");
    const int c_a = (s.stripe_c0 + s.stripe_c1) / 2 - 1; // central column pair
    const int c_b = c_a + 1;                             // of the stripe
    const int center_r0 = s.center_r - s.center_len / 2;
    const int top_r0 = s.band_r0;
    const int bot_r0 = s.band_r1 - s.distal_len;
    if (top_r0 + s.distal_len > center_r0 || center_r0 + s.center_len > bot_r0)
        throw ParameterError("zigzag chains overlap; shrink them or widen the band");

    Grid w(s.rows, s.cols, s.w_bg);
    for (int r = 0; r < s.rows; ++r)
        for (int c = s.stripe_c0; c < s.stripe_c1; ++c) w.at(r, c) = s.w_glue;
    // chain = (r0, rows, phase, weight); phase flips which column is hot on
    // even rows so the two distal chains mirror each other.
    struct Chain {
        int r0, len, phase;
        double weight;
    };
    for (const Chain& ch : {Chain{center_r0, s.center_len, 0, s.w_hot_center},
                            Chain{top_r0, s.distal_len, 0, s.w_hot_distal},
                            Chain{bot_r0, s.distal_len, 1, s.w_hot_distal}})
        for (int k = 0; k < ch.len; ++k) {
            const int r = ch.r0 + k;
            const bool hot_on_a = (k % 2 == ch.phase);
            w.at(r, hot_on_a ? c_a : c_b) = ch.weight;
            w.at(r, hot_on_a ? c_b : c_a) = s.w_body;
        }
    return w;
}

inline TemplateDetector make_bar_detector(const BarTemplateSpec& s = BarTemplateSpec()) {
    return TemplateDetector(make_bar_weights(s), s.bias, s.stride);
}

// Black-box gradient adapter: central differences on the top-1 score, probed
// only on the support pixels. Steps shrink one-sidedly at the [0,1] walls so
// probe images stay valid intensities.
class FiniteDifferenceAdapter : public VictimModel {
public:
    using Scorer = std::function<DetectionSet(const GrayImage&)>;

    FiniteDifferenceAdapter(Scorer scorer, double step, Mask support)
        : scorer_(std::move(scorer)), step_(step), support_(std::move(support)) {
        if (!(step_ > 0.0))
            throw ParameterError("finite-difference step must be positive");
        if (!support_.is_binary())
            throw PreconditionError("finite-difference support mask must be binary");
    }

    DetectionSet score(const GrayImage& x) const override { return scorer_(x); }

    Grid grad_top1(const GrayImage& x) const override {
        x.grid().require_same_shape(support_.grid(), "FiniteDifferenceAdapter");
        Grid g(x.height(), x.width(), 0.0);
        Grid work = x.grid();
        for (int r = 0; r < x.height(); ++r)
            for (int c = 0; c < x.width(); ++c) {
                if (support_.at(r, c) != 1.0) continue;
                const double v = work.at(r, c);
                const double up = std::min(step_, 1.0 - v);
                const double down = std::min(step_, v);
                if (up + down == 0.0) continue;
                work.at(r, c) = v + up;
                const double s_hi = top1_of(work);
                work.at(r, c) = v - down;
                const double s_lo = top1_of(work);
                work.at(r, c) = v;
                g.at(r, c) = (s_hi - s_lo) / (up + down);
            }
        return g;
    }

private:
    double top1_of(const Grid& pixels) const {
        DetectionSet det = scorer_(GrayImage(pixels));
        if (det.detections.empty())
            throw PreconditionError("finite-difference scorer returned no detections");
        return det.top().score;
    }

    Scorer scorer_;
    double step_;
    Mask support_;
};

// Bridges an external command-line scorer: the image goes out as a temporary
// PGM, the command is run with that path appended, and stdout comes back as
// one detection per line, either "score" (whole-frame box) or
// "row col height width score".
class ExternalScorer {
public:
    explicit ExternalScorer(std::string command) : command_(std::move(command)) {
        if (command_.empty())
            throw ParameterError("external scorer command must not be empty");
    }

    DetectionSet operator()(const GrayImage& x) const {
        namespace fs = std::filesystem;
        static std::atomic<unsigned long> counter{0};
        fs::path tmp = fs::temp_directory_path() /
                       ("irpatch_scorer_" + std::to_string(::getpid()) + "_" +
                        std::to_string(counter.fetch_add(1)) + ".pgm");
        write_pgm(x, tmp.string());
        std::string cmd = command_ + " " + tmp.string();
        FILE* pipe = ::popen(cmd.c_str(), "r");
        if (!pipe) {
            fs::remove(tmp);
            throw IoError("cannot launch external scorer: " + cmd);
        }
        std::string output;
        char buf[512];
        while (std::fgets(buf, sizeof buf, pipe)) output += buf;
        int rc = ::pclose(pipe);
        fs::remove(tmp);
        if (rc != 0)
            throw IoError("external scorer exited with status " + std::to_string(rc));
        return parse(output, x);
    }

private:
    DetectionSet parse(const std::string& text, const GrayImage& x) const {
        DetectionSet out;
        std::size_t pos = 0;
        while (pos < text.size()) {
            std::size_t end = text.find('\n', pos);
            if (end == std::string::npos) end = text.size();
            std::string line = text.substr(pos, end - pos);
            pos = end + 1;
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            Detection d;
            int r, c, h, w;
            double s;
            if (std::sscanf(line.c_str(), "%d %d %d %d %lf", &r, &c, &h, &w, &s) == 5) {
                d.box = DetBox{r, c, h, w};
                d.score = s;
            } else if (std::sscanf(line.c_str(), "%lf", &s) == 1) {
                d.box = DetBox{0, 0, x.height(), x.width()};
                d.score = s;
            } else {
                throw IoError("external scorer produced unparseable line: '" + line + "'");
            }
            out.detections.push_back(d);
        }
        if (out.detections.empty())
            throw IoError("external scorer produced no detections");
        out.top1 = argmax_detection(out.detections);
        return out;
    }

    std::string command_;
};

} // namespace irpatch
