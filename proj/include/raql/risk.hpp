#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace raql {

/// Closed convex bounded set: an interval [lo, hi] (dimension 1) or the
/// probability simplex over m atoms intersected with a box lo <= z <= hi.
class FeasibleSet {
public:
    enum class Kind { interval, simplex };

    static FeasibleSet interval(double lo, double hi);
    static FeasibleSet singleton(double value = 0.0) { return interval(value, value); }
    /// Full probability simplex in R^m.
    static FeasibleSet simplex(std::size_t m);
    /// { z : sum z = 1, lo <= z <= hi }.
    static FeasibleSet boxed_simplex(std::vector<double> lo, std::vector<double> hi);

    Kind kind() const { return kind_; }
    std::size_t dim() const { return lo_.size(); }
    const std::vector<double>& lower() const { return lo_; }
    const std::vector<double>& upper() const { return hi_; }
    bool is_singleton() const;

    bool contains(std::span<const double> point, double tol = 1e-9) const;
    /// Euclidean projection, in place.
    void project(std::span<double> point) const;
    /// Euclidean diameter.
    double diameter() const;
    /// Extreme points (interval endpoints or simplex-box vertices).
    std::vector<std::vector<double>> vertices() const;
    /// Interval midpoint or the projected barycenter.
    std::vector<double> center() const;

    bool operator==(const FeasibleSet&) const = default;

private:
    FeasibleSet(Kind kind, std::vector<double> lo, std::vector<double> hi);

    Kind kind_;
    std::vector<double> lo_;
    std::vector<double> hi_;
};

/// Euclidean projection of a point onto the probability simplex (sorting method).
void project_onto_simplex(std::span<double> point);

struct Atom {
    double value;
    double prob;
};

/// Finite-support random variable.
class FiniteDistribution {
public:
    explicit FiniteDistribution(std::vector<Atom> atoms);
    static FiniteDistribution point_mass(double value) { return FiniteDistribution({{value, 1.0}}); }

    const std::vector<Atom>& atoms() const { return atoms_; }
    double mean() const;
    double min_value() const;
    double max_value() const;
    /// Cumulative probabilities in atom order, for sampling.
    std::vector<double> cdf() const;

private:
    std::vector<Atom> atoms_;
};

/// A candidate saddle point (y, z). The primal block is always the scalar
/// threshold variable, since Y is the support interval for every family here.
struct SaddlePoint {
    double y = 0.0;
    std::vector<double> z;

    bool operator==(const SaddlePoint&) const = default;
};

/// Projects (y, z) onto Y x Z; the product structure makes the two projections independent.
SaddlePoint project(const FeasibleSet& set_y, const FeasibleSet& set_z, SaddlePoint point);

/// Concave utility used by the optimized certainty equivalent.
struct Utility {
    enum class Kind { entropic, piecewise_linear, custom };
    Kind kind = Kind::entropic;
    double param = 0.0;  // lambda for entropic, alpha for piecewise-linear
    std::function<double(double)> value;
    std::function<double(double)> derivative;
    double derivative_bound = 1.0;  // sup |u'| on the relevant range
    std::string name;

    /// u(t) = (1 - exp(-lambda t)) / lambda, so u(0) = 0 and u'(0) = 1.
    static Utility entropic(double lambda);
    /// u(t) = min(t, 0) / (1 - alpha); reproduces CVaR.
    static Utility cvar_utility(double alpha);
    static Utility custom(std::string name, std::function<double(double)> u, std::function<double(double)> du,
                          double derivative_bound);
};

/// rho(X) = max_z min_y E[G(X, y, z)] with G convex in y and concave in z.
///
/// Instances are immutable. Lipschitz and subgradient constants are derived
/// per family from the support interval; they are conservative estimates,
/// not tight values.
class SaddleRiskMeasure {
public:
    enum class Family { cvar, oce, kusuoka, abs_semidev, custom };

    using GFunction = std::function<double(double x, double y, std::span<const double> z)>;
    using GradZFunction = std::function<void(double x, double y, std::span<const double> z, std::span<double> out)>;

    Family family() const { return family_; }
    const std::string& name() const { return name_; }

    double g(double x, double y, std::span<const double> z) const;
    double grad_y(double x, double y, std::span<const double> z) const;
    void grad_z(double x, double y, std::span<const double> z, std::span<double> out) const;

    const FeasibleSet& domain_y() const { return domain_y_; }
    const FeasibleSet& domain_z() const { return domain_z_; }
    double support_lo() const { return domain_y_.lower()[0]; }
    double support_hi() const { return domain_y_.upper()[0]; }

    double lipschitz_g() const { return lipschitz_g_; }
    double subgrad_bound() const { return subgrad_bound_; }
    double diam_y() const { return domain_y_.diameter(); }
    double diam_z() const { return domain_z_.diameter(); }

    /// G is piecewise linear in y (kinks only at y = x) and affine in z, which
    /// makes the min-max problem exactly solvable by enumeration.
    bool piecewise_linear() const;
    /// Whether exact_risk carries an exactness certificate for this family.
    bool exact_solver_available() const { return family_ != Family::custom; }

    double alpha() const { return alpha_; }
    double iota() const { return iota_; }
    const std::vector<double>& alphas() const { return alphas_; }
    const Utility& utility() const { return utility_; }

    /// Same family and parameters over a different support interval.
    SaddleRiskMeasure with_support(double lo, double hi) const;

    friend SaddleRiskMeasure make_cvar(double alpha, double lo, double hi);
    friend SaddleRiskMeasure make_oce(Utility utility, double lo, double hi);
    friend SaddleRiskMeasure make_kusuoka(std::vector<double> alphas, FeasibleSet weight_set, double lo, double hi);
    friend SaddleRiskMeasure make_abs_semidev(double iota, double lo, double hi);
    friend SaddleRiskMeasure make_custom(std::string name, GFunction g, GFunction grad_y, GradZFunction grad_z,
                                         FeasibleSet domain_y, FeasibleSet domain_z, double lipschitz_g,
                                         double subgrad_bound);

private:
    SaddleRiskMeasure(Family family, std::string name, FeasibleSet domain_y, FeasibleSet domain_z);
    void derive_constants();

    Family family_;
    std::string name_;
    FeasibleSet domain_y_;
    FeasibleSet domain_z_;
    double alpha_ = 0.0;
    double iota_ = 0.0;
    std::vector<double> alphas_;
    std::vector<double> tail_weights_;  // 1 / (1 - alpha_i)
    Utility utility_;
    GFunction custom_g_;
    GFunction custom_grad_y_;
    GradZFunction custom_grad_z_;
    double lipschitz_g_ = 1.0;
    double subgrad_bound_ = 1.0;
};

/// CVaR_alpha: G = y + (1 - alpha)^{-1} (x - y)_+, Z a singleton.
SaddleRiskMeasure make_cvar(double alpha, double lo, double hi);
/// Optimized certainty equivalent: G = y - u(y - x), Z a singleton.
SaddleRiskMeasure make_oce(Utility utility, double lo, double hi);
/// Functionally coherent (Kusuoka-type) measure: max over weights of CVaR mixtures.
SaddleRiskMeasure make_kusuoka(std::vector<double> alphas, FeasibleSet weight_set, double lo, double hi);
/// Absolute semi-deviation: G = x + iota (x - y)_+ + iota z (y - x), Z = [0, 1].
SaddleRiskMeasure make_abs_semidev(double iota, double lo, double hi);
/// User-supplied G. exact_risk falls back to a flagged grid search for these.
SaddleRiskMeasure make_custom(std::string name, SaddleRiskMeasure::GFunction g, SaddleRiskMeasure::GFunction grad_y,
                              SaddleRiskMeasure::GradZFunction grad_z, FeasibleSet domain_y, FeasibleSet domain_z,
                              double lipschitz_g, double subgrad_bound);

/// E[G(X, y, z)].
double expected_g(const SaddleRiskMeasure& measure, const FiniteDistribution& dist, double y,
                  std::span<const double> z);

struct RiskSolution {
    double value = 0.0;
    SaddlePoint saddle;
    bool exact = true;
    double grid_resolution = 0.0;  // y-grid spacing when exact == false
};

/// min_y max_z E[G]. Exact for the built-in families; grid search otherwise.
RiskSolution exact_risk(const SaddleRiskMeasure& measure, const FiniteDistribution& dist);

/// max_z min_y E[G], solved along an independent route (LP vertex enumeration
/// over Z for the piecewise-linear families). Intended for small Z dimension.
double maxmin_risk(const SaddleRiskMeasure& measure, const FiniteDistribution& dist);

/// Phi_upper(y) = max_z E[G(., y, z)].
double upper_value(const SaddleRiskMeasure& measure, const FiniteDistribution& dist, double y);
/// Phi_lower(z) = min_y E[G(., y, z)].
double lower_value(const SaddleRiskMeasure& measure, const FiniteDistribution& dist, std::span<const double> z);

/// d(y, z) = Phi_upper(y) - Phi_lower(z); requires a feasible point.
double duality_gap(const SaddleRiskMeasure& measure, const FiniteDistribution& dist, const SaddlePoint& point);

}  // namespace raql
