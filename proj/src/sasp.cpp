#include "raql/sasp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "text_util.hpp"

namespace raql {

namespace {

constexpr std::uint64_t kResumInterval = 4096;

std::vector<double> pack(const SaddlePoint& p) {
    std::vector<double> out;
    out.reserve(1 + p.z.size());
    out.push_back(p.y);
    out.insert(out.end(), p.z.begin(), p.z.end());
    return out;
}

}  // namespace

WindowRule WindowRule::fixed_fraction(double c) {
    if (!(c > 0.0 && c <= 1.0)) throw std::invalid_argument("fixed-fraction window: c must lie in (0, 1]");
    return {Kind::fixed_fraction, c};
}

std::uint64_t WindowRule::tau_star(std::uint64_t t) const {
    if (t == 0) throw std::invalid_argument("tau_star: t must be >= 1");
    switch (kind) {
        case Kind::half:
            return (t + 1) / 2;
        case Kind::fixed_fraction: {
            const auto v = static_cast<std::uint64_t>(std::ceil(fraction * static_cast<double>(t)));
            return std::clamp<std::uint64_t>(v, 1, t);
        }
        case Kind::full:
            return 1;
    }
    return 1;
}

std::string WindowRule::name() const {
    switch (kind) {
        case Kind::half:
            return "half";
        case Kind::fixed_fraction:
            return "fixed_fraction";
        case Kind::full:
            return "full";
    }
    return "half";
}

WindowRule WindowRule::from_string(const std::string& name, double fraction) {
    if (name == "half") return half();
    if (name == "full") return full();
    if (name == "fixed_fraction") return fixed_fraction(fraction);
    throw std::invalid_argument("unknown window rule '" + name + "'");
}

WindowBounds window_bounds(const WindowRule& rule, std::uint64_t t) {
    const std::uint64_t tau = rule.tau_star(t);
    return {tau, t - tau + 1};
}

double SaspParams::step_size(std::uint64_t t) const {
    return step_scale * std::pow(static_cast<double>(t), -step_exponent);
}

void SaspParams::validate() const {
    if (!(step_scale > 0.0) || !std::isfinite(step_scale)) throw std::invalid_argument("sasp: step_scale must be > 0");
    if (!(step_exponent > 0.0 && step_exponent <= 1.0))
        throw std::invalid_argument("sasp: step_exponent must lie in (0, 1]");
    if (!(scale_y > 0.0) || !(scale_z > 0.0)) throw std::invalid_argument("sasp: scale_y and scale_z must be > 0");
    if (window.kind == WindowRule::Kind::fixed_fraction && !(window.fraction > 0.0 && window.fraction <= 1.0))
        throw std::invalid_argument("sasp: window fraction must lie in (0, 1]");
}

SaspState::SaspState(SaddlePoint start, const WindowRule& rule) : rule_(rule) { restart(std::move(start)); }

SaspState SaspState::at_center(const SaddleRiskMeasure& measure, const WindowRule& rule) {
    SaddlePoint p{measure.domain_y().center()[0], measure.domain_z().center()};
    return SaspState(std::move(p), rule);
}

void SaspState::restart(SaddlePoint start) {
    current_ = start;
    averaged_ = start;
    t_ = 1;
    window_.clear();
    sum_ = pack(start);
    if (rule_.kind != WindowRule::Kind::full) window_.push_back(sum_);
    pushes_since_resum_ = 0;
    run_ = 1;
}

void SaspState::recompute_sum() {
    std::fill(sum_.begin(), sum_.end(), 0.0);
    for (const auto& w : window_)
        for (std::size_t i = 0; i < sum_.size(); ++i) sum_[i] += w[i];
    pushes_since_resum_ = 0;
}

void SaspState::advance(SaddlePoint next, const FeasibleSet& set_y, const FeasibleSet& set_z, bool average) {
    run_ = next == current_ ? run_ + 1 : 1;
    current_ = std::move(next);
    ++t_;
    std::vector<double> packed = pack(current_);
    for (std::size_t i = 0; i < sum_.size(); ++i) sum_[i] += packed[i];
    std::uint64_t len = t_;
    if (rule_.kind != WindowRule::Kind::full) {
        window_.push_back(std::move(packed));
        const std::uint64_t tau = rule_.tau_star(t_);
        len = t_ - tau + 1;
        while (window_.size() > len) {
            const auto& old = window_.front();
            for (std::size_t i = 0; i < sum_.size(); ++i) sum_[i] -= old[i];
            window_.pop_front();
        }
        if (++pushes_since_resum_ >= kResumInterval) recompute_sum();
    }
    // a window holding one repeated point averages to that point exactly
    if (!average || run_ >= len) {
        averaged_ = current_;
        return;
    }
    const double inv = 1.0 / static_cast<double>(len);
    averaged_.y = sum_[0] * inv;
    averaged_.z.resize(current_.z.size());
    for (std::size_t i = 0; i < averaged_.z.size(); ++i) averaged_.z[i] = sum_[i + 1] * inv;
    // An average of feasible points is feasible; projecting only removes rounding.
    averaged_ = project(set_y, set_z, std::move(averaged_));
}

void sasp_step(SaspState& state, const SaddleRiskMeasure& measure, double sample_x, const SaspParams& params) {
    const double lo = measure.support_lo(), hi = measure.support_hi();
    const double tol = 1e-12 * std::max(1.0, std::max(std::abs(lo), std::abs(hi)));
    if (!(sample_x >= lo - tol && sample_x <= hi + tol))
        throw std::invalid_argument("sasp_step: sample outside the measure's support");
    const SaddlePoint& at = params.use_moving_average ? state.averaged() : state.current();
    const double lambda = params.step_size(state.iteration());

    const double gy = measure.grad_y(sample_x, at.y, at.z);
    std::vector<double> gz(at.z.size());
    measure.grad_z(sample_x, at.y, at.z, gz);

    SaddlePoint next = state.current();
    next.y -= lambda * params.scale_y * gy;
    for (std::size_t i = 0; i < gz.size(); ++i) next.z[i] += lambda * params.scale_z * gz[i];
    next = project(measure.domain_y(), measure.domain_z(), std::move(next));
    state.advance(std::move(next), measure.domain_y(), measure.domain_z(), params.use_moving_average);
}

SaspRunResult run_sasp(const SaddleRiskMeasure& measure, const FiniteDistribution& dist, const SaspParams& params,
                       std::uint64_t iters, Rng& rng, std::uint64_t gap_every) {
    if (iters == 0) throw std::invalid_argument("run_sasp: iters must be >= 1");
    params.validate();
    SaspState state = SaspState::at_center(measure, params.window);
    const auto cdf = dist.cdf();
    const auto& atoms = dist.atoms();
    SaspRunResult out;
    auto record = [&] {
        const std::uint64_t t = state.iteration();
        const double bound =
            t > 1 ? gap_bound_f(t, measure, params) : std::numeric_limits<double>::quiet_NaN();
        out.trace.push_back({t, duality_gap(measure, dist, state.averaged()), bound});
    };
    if (gap_every > 0 && iters == 1) record();
    for (std::uint64_t t = 1; t < iters; ++t) {
        sasp_step(state, measure, atoms[rng.from_cdf(cdf)].value, params);
        if (gap_every > 0 && (state.iteration() % gap_every == 0 || state.iteration() == iters)) record();
    }
    out.averaged = state.averaged();
    out.value = expected_g(measure, dist, out.averaged.y, out.averaged.z);
    return out;
}

GapBoundConstants measured_constants(const SaddleRiskMeasure& measure) {
    return {measure.diam_y(), measure.diam_z(), measure.subgrad_bound()};
}

double gap_bound_f(std::uint64_t t, const GapBoundConstants& k, const SaspParams& params) {
    if (t <= 1) throw std::invalid_argument("gap_bound_f: t must be > 1");
    const auto [tau, len] = window_bounds(params.window, t);
    const double c = params.step_scale, a = params.step_exponent;
    const double hy = params.scale_y, hz = params.scale_z;
    const double kyz = k.diam_y + k.diam_z;
    const double n = static_cast<double>(len);
    const double term1 = (k.diam_y / hy + k.diam_z / hz) * std::pow(static_cast<double>(t), a) / (c * n);
    const double term2 = kyz * k.subgrad_bound / std::sqrt(n);
    const double term3 = c * kyz * kyz * k.subgrad_bound * k.subgrad_bound * (hy * k.diam_y + hz * k.diam_z) *
                         std::pow(static_cast<double>(tau), -a);
    return term1 + term2 + term3;
}

double gap_bound_f(std::uint64_t t, const SaddleRiskMeasure& measure, const SaspParams& params) {
    return gap_bound_f(t, measured_constants(measure), params);
}

std::string gap_trace_csv(const std::vector<GapRecord>& trace) {
    std::string out = "iteration,gap,bound_f\n";
    for (const auto& r : trace) {
        out += std::to_string(r.iteration);
        out += ',';
        out += detail::format_double(r.gap);
        out += ',';
        out += std::isnan(r.bound_f) ? std::string("nan") : detail::format_double(r.bound_f);
        out += '\n';
    }
    return out;
}

}  // namespace raql
