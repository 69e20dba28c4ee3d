#pragma once

#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "aggreg.hpp"
#include "binreg.hpp"
#include "image.hpp"
#include "kernels.hpp"
#include "rng.hpp"
#include "textio.hpp"
#include "victim.hpp"

namespace irpatch {

struct OptimConfig {
    double lambda1 = 0.01;   // weight of the binary regularizer
    double lambda2 = 240.0;  // weight of the aggregation regularizer
    double init_scale = 0.35; // initial mask values are uniform in [0, init_scale)
    double mu = 0.9;        // momentum decay
    double epsilon_step = 0.1;
    int max_iters = 1000;
    double s_thr = 0.5;     // confidence at or below which the object counts as hidden
    std::optional<double> epsilon_max; // patch budget; default 0.15 * |M_obj|_1
    double budget_fraction = 0.15;
    int gauss_size = 5;
    double gauss_sigma = 1.0;
    std::uint64_t seed = 7; // mask initialization stream
    int snapshot_every = 0; // 0 disables snapshot recording
    BinRegConfig binreg;

    void validate() const {
        if (!(lambda1 >= 0.0)) throw ParameterError("lambda1 must be non-negative");
        if (!(lambda2 >= 0.0)) throw ParameterError("lambda2 must be non-negative");
        if (!(init_scale > 0.0 && init_scale <= 1.0))
            throw ParameterError("init_scale must lie in (0,1]");
        if (!(mu >= 0.0 && mu < 1.0)) throw ParameterError("mu must lie in [0,1)");
        if (!(epsilon_step > 0.0)) throw ParameterError("epsilon_step must be positive");
        if (max_iters < 1) throw ParameterError("max_iters must be >= 1");
        if (!(s_thr > 0.0 && s_thr < 1.0)) throw ParameterError("s_thr must lie in (0,1)");
        if (epsilon_max && !(*epsilon_max > 0.0))
            throw ParameterError("epsilon_max must be positive");
        if (!(budget_fraction > 0.0)) throw ParameterError("budget_fraction must be positive");
        if (gauss_size <= 0 || gauss_size % 2 == 0)
            throw ParameterError("gauss_size must be odd and positive");
        if (!(gauss_sigma > 0.0)) throw ParameterError("gauss_sigma must be positive");
        if (snapshot_every < 0) throw ParameterError("snapshot_every must be non-negative");
        BinRegConfig check(binreg.v_thre, binreg.alpha);
        (void)check;
    }

    double resolve_budget(const Mask& m_obj) const {
        return epsilon_max ? *epsilon_max : budget_fraction * m_obj.l1_norm();
    }
};

struct TotalLoss {
    double total = 0.0;
    double attack = 0.0;
    double binary = 0.0;
    double agg = 0.0;
    Grid grad;
};

// L_obj = L_attack(x_adv(M)) + lambda1 * L_binary(M) + lambda2 * L_agg(M).
// The attack part reaches the mask through the composition, whose per-pixel
// derivative is (cover - x).
inline TotalLoss total_loss(const VictimModel& model, const GrayImage& x,
                            const CoverSpec& cover, const Mask& m,
                            const OptimConfig& cfg) {
    x.grid().require_same_shape(m.grid(), "total_loss");
    GrayImage x_adv = compose_adversarial(x, cover, m);
    AttackLoss att = loss_attack(model, x_adv);
    BinaryLoss bin = loss_binary(m, cfg.binreg);
    AggregationLoss agg = loss_agg(m);

    TotalLoss out;
    out.attack = att.value;
    out.binary = bin.value;
    out.agg = agg.value;
    out.total = att.value + cfg.lambda1 * bin.value + cfg.lambda2 * agg.value;
    out.grad = Grid(x.height(), x.width(), 0.0);
    for (int r = 0; r < x.height(); ++r)
        for (int c = 0; c < x.width(); ++c)
            out.grad.at(r, c) = att.grad.at(r, c) * (cover.value - x.at(r, c)) +
                                cfg.lambda1 * bin.grad.at(r, c) +
                                cfg.lambda2 * agg.grad.at(r, c);
    return out;
}

// g_{t+1} = mu * g_t + grad / |grad|_1; a zero gradient contributes nothing
// rather than dividing by zero.
inline Grid momentum_step(const Grid& g_prev, const Grid& grad, double mu) {
    g_prev.require_same_shape(grad, "momentum_step");
    Grid g = g_prev;
    g *= mu;
    const double l1 = grad.l1_norm();
    if (l1 > 0.0) {
        const double inv = 1.0 / l1;
        for (std::size_t i = 0; i < g.data().size(); ++i)
            g.data()[i] += grad.data()[i] * inv;
    }
    return g;
}

// Gate the momentum field by the min-max-normalized Gaussian blur of the
// previous mask, so updates concentrate where mass already lives.
inline Grid finetune_gradient(const Grid& g, const Mask& m_prev, const Grid& k_gau) {
    g.require_same_shape(m_prev.grid(), "finetune_gradient");
    Grid gate = minmax_normalize(convolve(m_prev.grid(), k_gau));
    Grid out = g;
    out.hadamard(gate);
    return out;
}

// M_{t+1} = clamp01((M_t - eps * g) .* M_obj): step, project onto the object
// support, clamp into the valid mask range.
inline Mask mask_update(const Mask& m, const Grid& g, double eps, const Mask& m_obj) {
    m.grid().require_same_shape(g, "mask_update");
    m.grid().require_same_shape(m_obj.grid(), "mask_update");
    if (!m_obj.is_binary())
        throw PreconditionError("mask_update: object mask must be binary");
    Grid next = m.grid();
    for (std::size_t i = 0; i < next.data().size(); ++i)
        next.data()[i] -= eps * g.data()[i];
    next.hadamard(m_obj.grid());
    next.clamp(0.0, 1.0);
    return Mask(std::move(next), MaskKind::continuous);
}

enum class StopReason { converged, budget_exceeded_at_T, max_iters };

inline const char* to_string(StopReason r) {
    switch (r) {
        case StopReason::converged: return "converged";
        case StopReason::budget_exceeded_at_T: return "budget_exceeded_at_T";
        default: return "max_iters";
    }
}

// One row per completed iteration, evaluated at the post-update mask.
struct HistoryRow {
    double loss_attack = 0.0;
    double loss_binary = 0.0;
    double loss_agg = 0.0;
    double top1_score = 0.0;
    double mask_l1 = 0.0;
    double mean_support = 0.0;
};

struct Snapshot {
    int iteration = 0;
    Mask mask;
};

struct OptimState {
    int iterations = 0;
    StopReason stop_reason = StopReason::max_iters;
    std::vector<HistoryRow> history;
    std::vector<Snapshot> snapshots;
};

struct RunResult {
    Mask m_star;
    GrayImage x_adv_star;
    OptimState state;
};

inline RunResult optimize_patch(const VictimModel& model, const GrayImage& x,
                                const CoverSpec& cover, const Mask& m_obj,
                                const OptimConfig& cfg) {
    cfg.validate();
    x.grid().require_same_shape(m_obj.grid(), "optimize_patch");
    if (!m_obj.is_binary())
        throw PreconditionError("optimize_patch: object mask must be binary");
    if (m_obj.l1_norm() == 0.0)
        throw PreconditionError("optimize_patch: object mask has empty support");

    const double budget = cfg.resolve_budget(m_obj);
    const Grid k_gau = gaussian_kernel(cfg.gauss_size, cfg.gauss_sigma);

    Rng rng(cfg.seed);
    Grid m0(x.height(), x.width(), 0.0);
    for (int r = 0; r < x.height(); ++r)
        for (int c = 0; c < x.width(); ++c)
            m0.at(r, c) = cfg.init_scale * rng.uniform01();
    m0.hadamard(m_obj.grid());
    Mask m(std::move(m0), MaskKind::continuous);

    Grid g(x.height(), x.width(), 0.0);
    OptimState state;
    if (cfg.snapshot_every > 0)
        state.snapshots.push_back({0, m});

    GrayImage x_adv = compose_adversarial(x, cover, m);
    bool converged = false;
    bool score_ok = false;

    for (int t = 0; t < cfg.max_iters; ++t) {
        TotalLoss tl = total_loss(model, x, cover, m, cfg);
        // The mask lives on the object support, so the optimization is over
        // that restricted domain: drop the off-support gradient components
        // before normalization or they dominate the step-size budget without
        // ever moving anything.
        tl.grad.hadamard(m_obj.grid());
        g = momentum_step(g, tl.grad, cfg.mu);
        g = finetune_gradient(g, m, k_gau);
        m = mask_update(m, g, cfg.epsilon_step, m_obj);
        x_adv = compose_adversarial(x, cover, m);

        DetectionSet det = model.score(x_adv);
        if (det.detections.empty())
            throw PreconditionError("optimize_patch: victim produced an empty detection set");
        const double s1 = det.top().score;
        const double l1 = m.l1_norm();

        HistoryRow row;
        row.loss_attack = s1;
        row.loss_binary = loss_binary(m, cfg.binreg).value;
        row.loss_agg = loss_agg(m).value;
        row.top1_score = s1;
        row.mask_l1 = l1;
        row.mean_support = aggregation_map(m, m_obj).mean_support;
        state.history.push_back(row);
        state.iterations = t + 1;

        if (cfg.snapshot_every > 0 && (t + 1) % cfg.snapshot_every == 0)
            state.snapshots.push_back({t + 1, m});

        score_ok = s1 <= cfg.s_thr;
        if (score_ok && l1 <= budget) {
            converged = true;
            break;
        }
    }

    state.stop_reason = converged ? StopReason::converged
                        : score_ok ? StopReason::budget_exceeded_at_T
                                   : StopReason::max_iters;
    return RunResult{std::move(m), std::move(x_adv), std::move(state)};
}

// Snapshots whose iteration index is a multiple of every_k (iteration 0
// always qualifies). Snapshot recording must have been enabled in the run.
inline std::vector<Snapshot> trace_masks(const OptimState& state, int every_k) {
    if (every_k < 1)
        throw ParameterError("trace_masks: every_k must be >= 1");
    std::vector<Snapshot> out;
    for (const Snapshot& s : state.snapshots)
        if (s.iteration % every_k == 0) out.push_back(s);
    return out;
}

inline void write_history_csv(const std::vector<HistoryRow>& history, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << "loss_attack,loss_binary,loss_agg,top1_score,mask_l1,aggregation_mean_support\n";
    for (const HistoryRow& r : history)
        out << fmt_g(r.loss_attack) << ',' << fmt_g(r.loss_binary) << ',' << fmt_g(r.loss_agg)
            << ',' << fmt_g(r.top1_score) << ',' << fmt_g(r.mask_l1) << ','
            << fmt_g(r.mean_support) << '\n';
    if (!out) throw IoError("write failed: " + path);
}

} // namespace irpatch
