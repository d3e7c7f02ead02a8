#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "raql/sasp.hpp"

namespace raql {

/// Scalars entering the convergence-rate bounds. K_S, K_psi1 and K_psi2 have
/// no constructive recipe and default to 1 as explicit estimates.
struct TheoryConstants {
    double lipschitz_g = 2.0;       // K_G > 1
    double saddle_stability = 0.1;  // K_S >= 0
    double hausdorff_mod_1 = 1.0;   // K_psi^(1) > 0
    double hausdorff_mod_2 = 1.0;   // K_psi^(2) >= 0
    double kappa = 0.1;             // 0 < kappa < 1 / (C K_psi^(1))
    double kappa0 = 0.1;            // > 0
    double psi_const = 1.0;         // Psi > 0
    double confidence_delta = 0.1;  // delta in (0,1)
    double target_eps = 0.1;        // eps-tilde > 0
    double exploration_eps = 0.1;   // epsilon in (0,1)
    double c_max = 1.0;
    double gamma = 0.1;
    double step_scale = 1.0;     // C
    double step_exponent = 0.5;  // alpha
    double learning_rate_k = 0.8;
    double c_g_bound = 1.0;  // C_G
    // Saddle-problem constants used to evaluate f(T).
    double diam_y = 1.0;
    double diam_z = 0.0;
    double subgrad_bound = 1.0;
    bool estimated_constants = true;

    double v_max() const { return c_max / (1.0 - gamma); }
    /// Throws std::domain_error naming the first offending constant.
    void validate() const;
};

/// Raised when an expression leaves its domain; carries a readable reason.
class TheoryDomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// beta as a function of the saddle term x = tau*(T)^{-alpha}.
double beta_from_saddle_term(const TheoryConstants& c, double x);
double beta_t(const TheoryConstants& c, std::uint64_t t, const WindowRule& window);

/// (C1): x <= D^2 kappa / (C (1 + K_psi1 D^2 kappa^2)), D = 1 - gamma - K_G K_S.
double c1_threshold(const TheoryConstants& c);
/// (C2): x >= B^2 kappa / (C (K_G + B^2 K_psi1 kappa^2)), B = K_G - K_G(2 gamma + K_G K_S) - 2.
double c2_threshold(const TheoryConstants& c);

struct TRange {
    bool feasible = false;
    std::uint64_t t_min = 0;
    std::optional<std::uint64_t> t_max;  // nullopt: unbounded
    std::string diagnostic;
};

/// Integer T satisfying both conditions. (C1) holds for all large T and gives
/// T_min; (C2) holds for all small T and gives T_max.
TRange t_condition_range(const TheoryConstants& c, const WindowRule& window);

/// Order estimate (unit constant) of the outer-iteration count, k in (1/2, 1).
struct PolyComplexity {
    double first_term;
    double second_term;
    double total() const { return first_term + second_term; }
};
PolyComplexity sample_complexity_poly(const TheoryConstants& c, double beta, std::size_t num_states,
                                      std::size_t num_actions);
/// Order estimate for the linear learning rate k = 1.
double sample_complexity_linear(const TheoryConstants& c, double beta, std::size_t num_states,
                                std::size_t num_actions);

/// Denominator (2 - 2 gamma K_G) eps^2 - K_G (gamma - K_S K_G) - eps of the expectation rate.
double expectation_regime(const TheoryConstants& c);
double expectation_rate_n(const TheoryConstants& c, double f_t, std::size_t num_states, std::size_t num_actions,
                          double eps_tilde);

/// D_0, D_1, ... with D_{m+1} = (1 - beta) D_m.
std::vector<double> error_envelope(double d0, double beta, std::size_t stages);

}  // namespace raql
