#include "raql/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace raql {

namespace {

void need(bool ok, const char* name, const char* rule) {
    if (!ok) throw TheoryDomainError(std::string(name) + " " + rule);
}

double saddle_term(const TheoryConstants& c, std::uint64_t t, const WindowRule& window) {
    return std::pow(static_cast<double>(window.tau_star(t)), -c.step_exponent);
}

// Natural log clamped at zero: the order estimates are only meaningful where
// their logarithms are nonnegative.
double log_plus(double v) { return v > 1.0 ? std::log(v) : 0.0; }

constexpr std::uint64_t kSearchLimit = std::uint64_t{1} << 62;

}  // namespace

void TheoryConstants::validate() const {
    need(lipschitz_g > 1.0, "lipschitz_g", "must be > 1");
    need(saddle_stability >= 0.0, "saddle_stability", "must be >= 0");
    need(hausdorff_mod_1 > 0.0, "hausdorff_mod_1", "must be > 0");
    need(hausdorff_mod_2 >= 0.0, "hausdorff_mod_2", "must be >= 0");
    need(step_scale > 0.0, "step_scale", "must be > 0");
    need(kappa > 0.0 && kappa * step_scale * hausdorff_mod_1 < 1.0, "kappa",
         "must satisfy 0 < kappa < 1 / (step_scale * hausdorff_mod_1)");
    need(kappa0 > 0.0, "kappa0", "must be > 0");
    need(psi_const > 0.0, "psi_const", "must be > 0");
    need(confidence_delta > 0.0 && confidence_delta < 1.0, "confidence_delta", "must lie in (0, 1)");
    need(target_eps > 0.0, "target_eps", "must be > 0");
    need(exploration_eps > 0.0 && exploration_eps < 1.0, "exploration_eps", "must lie in (0, 1)");
    need(c_max > 0.0, "c_max", "must be > 0");
    need(gamma >= 0.0 && gamma < 1.0, "gamma", "must lie in [0, 1)");
    need(step_exponent > 0.0 && step_exponent <= 1.0, "step_exponent", "must lie in (0, 1]");
    need(learning_rate_k > 0.5 && learning_rate_k <= 1.0, "learning_rate_k", "must lie in (1/2, 1]");
    need(c_g_bound >= 0.0, "c_g_bound", "must be >= 0");
    need(diam_y >= 0.0 && diam_z >= 0.0, "diam_y/diam_z", "must be >= 0");
    need(subgrad_bound > 0.0, "subgrad_bound", "must be > 0");
}

double beta_from_saddle_term(const TheoryConstants& c, double x) {
    if (!(x >= 0.0)) throw TheoryDomainError("saddle term must be >= 0");
    const double inner = c.kappa * (1.0 - c.step_scale * x * c.hausdorff_mod_1 * c.kappa);
    if (!(inner > 0.0))
        throw TheoryDomainError("kappa (1 - C x K_psi1 kappa) <= 0: kappa violates its bound at this T");
    const double root = std::sqrt(c.step_scale * x / inner);
    return 0.5 * c.lipschitz_g * (1.0 - c.gamma - root - c.lipschitz_g * c.saddle_stability);
}

double beta_t(const TheoryConstants& c, std::uint64_t t, const WindowRule& window) {
    if (t < 1) throw TheoryDomainError("T must be >= 1");
    return beta_from_saddle_term(c, saddle_term(c, t, window));
}

double c1_threshold(const TheoryConstants& c) {
    const double d = 1.0 - c.gamma - c.lipschitz_g * c.saddle_stability;
    const double mag = d * d * c.kappa / (c.step_scale * (1.0 + c.hausdorff_mod_1 * d * d * c.kappa * c.kappa));
    // A nonpositive D means beta < 0 at every T; the sign carries that through.
    return d > 0.0 ? mag : -mag;
}

double c2_threshold(const TheoryConstants& c) {
    const double kg = c.lipschitz_g;
    const double b = kg - kg * (2.0 * c.gamma + kg * c.saddle_stability) - 2.0;
    return b * b * c.kappa / (c.step_scale * (kg + b * b * c.hausdorff_mod_1 * c.kappa * c.kappa));
}

TRange t_condition_range(const TheoryConstants& c, const WindowRule& window) {
    c.validate();
    TRange out;
    const double th1 = c1_threshold(c);
    const double th2 = c2_threshold(c);
    auto x = [&](std::uint64_t t) { return saddle_term(c, t, window); };

    if (th1 <= 0.0) {
        out.diagnostic = "(C1) infeasible: 1 - gamma - K_G K_S <= 0, so beta_T < 0 for every T";
        return out;
    }
    // T_min: first T with x(T) <= th1.
    if (x(1) <= th1) {
        out.t_min = 1;
    } else {
        std::uint64_t hi = 2;
        while (hi < kSearchLimit && x(hi) > th1) hi *= 2;
        if (x(hi) > th1) {
            out.diagnostic = "(C1) infeasible: the saddle term never falls below " + std::to_string(th1) +
                             " under the " + window.name() + " window";
            return out;
        }
        std::uint64_t lo = hi / 2;  // x(lo) > th1
        while (hi - lo > 1) {
            const std::uint64_t mid = lo + (hi - lo) / 2;
            (x(mid) <= th1 ? hi : lo) = mid;
        }
        out.t_min = hi;
    }
    // T_max: last T with x(T) >= th2.
    if (th2 <= 0.0) {
        out.t_max.reset();
    } else if (x(1) < th2) {
        out.diagnostic = "(C2) infeasible: the saddle term is below " + std::to_string(th2) + " already at T = 1";
        return out;
    } else {
        std::uint64_t hi = 2;
        while (hi < kSearchLimit && x(hi) >= th2) hi *= 2;
        if (x(hi) >= th2) {
            out.t_max.reset();
        } else {
            std::uint64_t lo = hi / 2;  // x(lo) >= th2
            while (hi - lo > 1) {
                const std::uint64_t mid = lo + (hi - lo) / 2;
                (x(mid) >= th2 ? lo : hi) = mid;
            }
            out.t_max = lo;
        }
    }
    if (out.t_max && *out.t_max < out.t_min) {
        out.diagnostic = "empty range: (C1) needs T >= " + std::to_string(out.t_min) + " but (C2) needs T <= " +
                         std::to_string(*out.t_max);
        return out;
    }
    out.feasible = true;
    return out;
}

PolyComplexity sample_complexity_poly(const TheoryConstants& c, double beta, std::size_t num_states,
                                      std::size_t num_actions) {
    if (c.learning_rate_k >= 1.0)
        throw TheoryDomainError("k = 1 is the linear learning rate: use sample_complexity_linear");
    if (!(beta > 0.0 && beta < 1.0)) throw TheoryDomainError("beta must lie in (0, 1)");
    const double k = c.learning_rate_k;
    const double v = c.v_max();
    const double sa = static_cast<double>(num_states * num_actions);
    const double eps = c.exploration_eps, et = c.target_eps;
    const double log1 = log_plus(v * sa / (c.confidence_delta * beta * et * (1.0 - eps)));
    const double first =
        std::pow(v * v * sa * log1 / (beta * beta * et * et * std::pow(1.0 - eps, 1.0 + 3.0 * k)), 1.0 / k);
    const double log2 = log_plus(v * std::sqrt(sa) / et);
    const double second = std::pow(log2 / ((1.0 - eps) * beta), 1.0 / (1.0 - k));
    return {first, second};
}

double sample_complexity_linear(const TheoryConstants& c, double beta, std::size_t num_states,
                                std::size_t num_actions) {
    if (!(beta > 0.0 && beta < 1.0)) throw TheoryDomainError("beta must lie in (0, 1)");
    const double v = c.v_max();
    const double sa = static_cast<double>(num_states * num_actions);
    const double eps = c.exploration_eps, et = c.target_eps, psi = c.psi_const;
    const double base = (2.0 + psi - eps) / (1.0 - eps);
    const double exponent = log_plus(v * std::sqrt(sa) / et) / beta;
    const double log1 = log_plus(v * sa / (psi * c.confidence_delta * beta * et * (1.0 - eps)));
    return std::pow(base, exponent) * v * v * sa * log1 / (psi * psi * beta * et * et * (1.0 - eps) * (1.0 - eps));
}

double expectation_regime(const TheoryConstants& c) {
    const double eps = c.exploration_eps, kg = c.lipschitz_g;
    return (2.0 - 2.0 * c.gamma * kg) * eps * eps - kg * (c.gamma - c.saddle_stability * kg) - eps;
}

double expectation_rate_n(const TheoryConstants& c, double f_t, std::size_t num_states, std::size_t num_actions,
                          double eps_tilde) {
    if (!(eps_tilde > 0.0)) throw TheoryDomainError("eps_tilde must be > 0");
    const double regime = expectation_regime(c);
    if (!(regime > 0.0))
        throw TheoryDomainError("regime violated: (2 - 2 gamma K_G) eps^2 - K_G (gamma - K_S K_G) - eps = " +
                                std::to_string(regime) + " <= 0");
    const double gf = c.gamma * f_t;
    const double a = (c.c_g_bound + gf * gf) * c.exploration_eps / regime;
    const double b = c.c_max * c.c_max * static_cast<double>(num_states * num_actions);
    return std::max(a, b) / eps_tilde;
}

std::vector<double> error_envelope(double d0, double beta, std::size_t stages) {
    std::vector<double> out;
    out.reserve(stages + 1);
    double d = d0;
    for (std::size_t m = 0; m <= stages; ++m) {
        out.push_back(d);
        d *= 1.0 - beta;
    }
    return out;
}

}  // namespace raql
