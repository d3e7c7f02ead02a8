#pragma once

#include <cstdint>
#include <deque>
#include <string>
#include <vector>

#include "raql/risk.hpp"
#include "raql/rng.hpp"

namespace raql {

/// Start of the averaging window tau*(t), with 1 <= tau*(t) <= t.
struct WindowRule {
    enum class Kind { half, fixed_fraction, full };
    Kind kind = Kind::half;
    double fraction = 0.5;  // only for fixed_fraction, in (0, 1]

    static WindowRule half() { return {Kind::half, 0.5}; }
    static WindowRule fixed_fraction(double c);
    static WindowRule full() { return {Kind::full, 1.0}; }

    std::uint64_t tau_star(std::uint64_t t) const;
    std::string name() const;
    static WindowRule from_string(const std::string& name, double fraction = 0.5);

    bool operator==(const WindowRule&) const = default;
};

struct WindowBounds {
    std::uint64_t tau_star;
    std::uint64_t window_len;
};

/// (tau*(t), t - tau*(t) + 1).
WindowBounds window_bounds(const WindowRule& rule, std::uint64_t t);

struct SaspParams {
    double step_scale = 1.0;     // C
    double step_exponent = 0.5;  // alpha
    WindowRule window = WindowRule::half();
    double scale_y = 1.0;  // H_Y
    double scale_z = 1.0;  // H_Z
    bool use_moving_average = true;

    /// lambda_t = C t^{-alpha}.
    double step_size(std::uint64_t t) const;
    void validate() const;
};

/// Iterates of one saddle-point estimation problem.
///
/// Holds the current iterate (y_t, z_t), the iterates y_tau*(t) .. y_t needed
/// for the moving average, and the cached average. With the full window only a
/// running sum is kept.
class SaspState {
public:
    SaspState() = default;
    SaspState(SaddlePoint start, const WindowRule& rule);
    /// Starts at the support midpoint and the projected barycenter of Z.
    static SaspState at_center(const SaddleRiskMeasure& measure, const WindowRule& rule);

    const SaddlePoint& current() const { return current_; }
    const SaddlePoint& averaged() const { return averaged_; }
    std::uint64_t iteration() const { return t_; }
    std::size_t history_length() const { return rule_.kind == WindowRule::Kind::full ? t_ : window_.size(); }

    /// Resets the clock to t = 1 at the given point.
    void restart(SaddlePoint start);
    /// Appends y_{t+1}; averages over the window of t+1. Z feasibility is the caller's job.
    void advance(SaddlePoint next, const FeasibleSet& set_y, const FeasibleSet& set_z, bool average);

private:
    void recompute_sum();

    WindowRule rule_;
    SaddlePoint current_;
    SaddlePoint averaged_;
    std::uint64_t t_ = 0;
    std::deque<std::vector<double>> window_;  // (y, z...) packed
    std::vector<double> sum_;
    std::uint64_t pushes_since_resum_ = 0;
    std::uint64_t run_ = 1;  // trailing count of identical iterates
};

/// One projected primal-dual step driven by the sample x. The subgradients are
/// taken at the averaged point, or at the raw iterate when averaging is off.
void sasp_step(SaspState& state, const SaddleRiskMeasure& measure, double sample_x, const SaspParams& params);

struct GapRecord {
    std::uint64_t iteration;
    double gap;
    double bound_f;  // NaN at t = 1, where f is undefined
};

struct SaspRunResult {
    SaddlePoint averaged;  // the query point after `iters` iterates
    double value = 0.0;    // E[G] at the averaged point, under the true distribution
    std::vector<GapRecord> trace;
};

/// Runs SASP on i.i.d. draws from `dist` until iterate y_iters exists
/// (iters - 1 steps) and returns the averaged point over its window. When
/// gap_every > 0 the duality gap of the averaged point is logged every
/// gap_every iterates and at the end.
SaspRunResult run_sasp(const SaddleRiskMeasure& measure, const FiniteDistribution& dist, const SaspParams& params,
                       std::uint64_t iters, Rng& rng, std::uint64_t gap_every = 0);

struct GapBoundConstants {
    double diam_y;  // K_Y
    double diam_z;  // K_Z
    double subgrad_bound;  // L
};

GapBoundConstants measured_constants(const SaddleRiskMeasure& measure);

/// Three-term bound f(t) on the expected duality gap after t iterates.
double gap_bound_f(std::uint64_t t, const GapBoundConstants& k, const SaspParams& params);
double gap_bound_f(std::uint64_t t, const SaddleRiskMeasure& measure, const SaspParams& params);

/// CSV with header iteration,gap,bound_f.
std::string gap_trace_csv(const std::vector<GapRecord>& trace);

}  // namespace raql
