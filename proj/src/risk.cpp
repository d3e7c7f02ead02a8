#include "raql/risk.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <Eigen/Dense>

namespace raql {

namespace {

constexpr double kProbTolerance = 1e-12;
constexpr double kGridResolution = 1e-4;
constexpr std::size_t kMaxVertexDim = 16;

double hinge(double v) { return v > 0.0 ? v : 0.0; }

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

/// Golden-section minimization of a convex function on [a, b].
template <typename F>
std::pair<double, double> golden_min(F&& f, double a, double b, double tol) {
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - inv_phi * (b - a);
    double d = a + inv_phi * (b - a);
    double fc = f(c), fd = f(d);
    while (b - a > tol) {
        if (fc <= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    double best_y = 0.5 * (a + b);
    double best = f(best_y);
    // The minimizer of a convex function may sit on the boundary.
    for (double y : {a, b}) {
        double v = f(y);
        if (v < best) {
            best = v;
            best_y = y;
        }
    }
    return {best_y, best};
}

}  // namespace

// ---------------------------------------------------------------------------
// Feasible sets

FeasibleSet::FeasibleSet(Kind kind, std::vector<double> lo, std::vector<double> hi)
    : kind_(kind), lo_(std::move(lo)), hi_(std::move(hi)) {}

FeasibleSet FeasibleSet::interval(double lo, double hi) {
    require(std::isfinite(lo) && std::isfinite(hi) && lo <= hi, "FeasibleSet::interval: need finite lo <= hi");
    return FeasibleSet(Kind::interval, {lo}, {hi});
}

FeasibleSet FeasibleSet::simplex(std::size_t m) {
    require(m >= 1, "FeasibleSet::simplex: dimension must be >= 1");
    return FeasibleSet(Kind::simplex, std::vector<double>(m, 0.0), std::vector<double>(m, 1.0));
}

FeasibleSet FeasibleSet::boxed_simplex(std::vector<double> lo, std::vector<double> hi) {
    require(!lo.empty() && lo.size() == hi.size(), "FeasibleSet::boxed_simplex: bound sizes differ");
    double slo = 0.0, shi = 0.0;
    for (std::size_t i = 0; i < lo.size(); ++i) {
        require(lo[i] >= 0.0 && lo[i] <= hi[i] && hi[i] <= 1.0, "FeasibleSet::boxed_simplex: need 0 <= lo <= hi <= 1");
        slo += lo[i];
        shi += hi[i];
    }
    require(slo <= 1.0 + 1e-12 && shi >= 1.0 - 1e-12, "FeasibleSet::boxed_simplex: empty set");
    return FeasibleSet(Kind::simplex, std::move(lo), std::move(hi));
}

bool FeasibleSet::is_singleton() const {
    if (kind_ == Kind::interval) return lo_[0] == hi_[0];
    return vertices().size() == 1;
}

bool FeasibleSet::contains(std::span<const double> point, double tol) const {
    if (point.size() != dim()) return false;
    double sum = 0.0;
    for (std::size_t i = 0; i < dim(); ++i) {
        if (!(point[i] >= lo_[i] - tol && point[i] <= hi_[i] + tol)) return false;
        sum += point[i];
    }
    return kind_ == Kind::interval || std::abs(sum - 1.0) <= tol;
}

void project_onto_simplex(std::span<double> point) {
    std::vector<double> u(point.begin(), point.end());
    std::sort(u.begin(), u.end(), std::greater<>());
    double cumsum = 0.0, theta = 0.0;
    for (std::size_t j = 0; j < u.size(); ++j) {
        cumsum += u[j];
        const double t = (cumsum - 1.0) / static_cast<double>(j + 1);
        if (u[j] - t > 0.0) theta = t;
    }
    for (auto& v : point) v = hinge(v - theta);
}

void FeasibleSet::project(std::span<double> point) const {
    require(point.size() == dim(), "project: dimension mismatch");
    if (kind_ == Kind::interval) {
        point[0] = std::clamp(point[0], lo_[0], hi_[0]);
        return;
    }
    const bool plain = std::all_of(lo_.begin(), lo_.end(), [](double v) { return v == 0.0; }) &&
                       std::all_of(hi_.begin(), hi_.end(), [](double v) { return v >= 1.0; });
    if (plain) {
        project_onto_simplex(point);
        return;
    }
    // Boxed simplex: find tau with sum clamp(p - tau, lo, hi) = 1. The sum is
    // piecewise linear and nonincreasing in tau with breakpoints p - hi, p - lo.
    const std::size_t m = dim();
    auto mass = [&](double tau) {
        double s = 0.0;
        for (std::size_t i = 0; i < m; ++i) s += std::clamp(point[i] - tau, lo_[i], hi_[i]);
        return s;
    };
    std::vector<double> breaks;
    breaks.reserve(2 * m);
    for (std::size_t i = 0; i < m; ++i) {
        breaks.push_back(point[i] - hi_[i]);
        breaks.push_back(point[i] - lo_[i]);
    }
    std::sort(breaks.begin(), breaks.end());
    double tau = breaks.back();
    for (std::size_t j = 0; j + 1 < breaks.size(); ++j) {
        const double sa = mass(breaks[j]);
        const double sb = mass(breaks[j + 1]);
        if (sa >= 1.0 && sb <= 1.0) {
            tau = (sa == sb) ? breaks[j] : breaks[j] + (sa - 1.0) * (breaks[j + 1] - breaks[j]) / (sa - sb);
            break;
        }
    }
    for (std::size_t i = 0; i < m; ++i) point[i] = std::clamp(point[i] - tau, lo_[i], hi_[i]);
}

std::vector<std::vector<double>> FeasibleSet::vertices() const {
    if (kind_ == Kind::interval) {
        if (lo_[0] == hi_[0]) return {{lo_[0]}};
        return {{lo_[0]}, {hi_[0]}};
    }
    const std::size_t m = dim();
    require(m <= kMaxVertexDim, "FeasibleSet::vertices: dimension too large for enumeration");
    std::vector<std::vector<double>> out;
    for (std::size_t free = 0; free < m; ++free) {
        const std::size_t others = m - 1;
        for (std::size_t mask = 0; mask < (std::size_t{1} << others); ++mask) {
            std::vector<double> z(m);
            double sum = 0.0;
            std::size_t bit = 0;
            for (std::size_t i = 0; i < m; ++i) {
                if (i == free) continue;
                z[i] = ((mask >> bit) & 1U) ? hi_[i] : lo_[i];
                sum += z[i];
                ++bit;
            }
            z[free] = 1.0 - sum;
            if (z[free] < lo_[free] - 1e-12 || z[free] > hi_[free] + 1e-12) continue;
            z[free] = std::clamp(z[free], lo_[free], hi_[free]);
            const bool dup = std::any_of(out.begin(), out.end(), [&](const std::vector<double>& w) {
                for (std::size_t i = 0; i < m; ++i)
                    if (std::abs(w[i] - z[i]) > 1e-12) return false;
                return true;
            });
            if (!dup) out.push_back(std::move(z));
        }
    }
    return out;
}

double FeasibleSet::diameter() const {
    if (kind_ == Kind::interval) return hi_[0] - lo_[0];
    const auto verts = vertices();
    double best = 0.0;
    for (std::size_t i = 0; i < verts.size(); ++i) {
        for (std::size_t j = i + 1; j < verts.size(); ++j) {
            double d2 = 0.0;
            for (std::size_t k = 0; k < dim(); ++k) d2 += (verts[i][k] - verts[j][k]) * (verts[i][k] - verts[j][k]);
            best = std::max(best, std::sqrt(d2));
        }
    }
    return best;
}

std::vector<double> FeasibleSet::center() const {
    if (kind_ == Kind::interval) return {0.5 * (lo_[0] + hi_[0])};
    std::vector<double> z(dim(), 1.0 / static_cast<double>(dim()));
    project(z);
    return z;
}

SaddlePoint project(const FeasibleSet& set_y, const FeasibleSet& set_z, SaddlePoint point) {
    require(set_y.dim() == 1, "project: the primal set must be one-dimensional");
    require(point.z.size() == set_z.dim(), "project: dual dimension mismatch");
    set_y.project(std::span<double>(&point.y, 1));
    set_z.project(point.z);
    return point;
}

// ---------------------------------------------------------------------------
// Distributions

FiniteDistribution::FiniteDistribution(std::vector<Atom> atoms) {
    double sum = 0.0;
    for (const auto& a : atoms) {
        require(std::isfinite(a.value), "FiniteDistribution: non-finite atom value");
        require(a.prob >= 0.0, "FiniteDistribution: negative probability");
        sum += a.prob;
        if (a.prob > 0.0) atoms_.push_back(a);
    }
    require(!atoms_.empty(), "FiniteDistribution: no atoms with positive probability");
    require(std::abs(sum - 1.0) <= kProbTolerance * std::max<double>(1.0, static_cast<double>(atoms.size())),
            "FiniteDistribution: probabilities must sum to 1");
}

double FiniteDistribution::mean() const {
    double m = 0.0;
    for (const auto& a : atoms_) m += a.prob * a.value;
    return m;
}

double FiniteDistribution::min_value() const {
    double m = atoms_.front().value;
    for (const auto& a : atoms_) m = std::min(m, a.value);
    return m;
}

double FiniteDistribution::max_value() const {
    double m = atoms_.front().value;
    for (const auto& a : atoms_) m = std::max(m, a.value);
    return m;
}

std::vector<double> FiniteDistribution::cdf() const {
    std::vector<double> out(atoms_.size());
    double run = 0.0;
    for (std::size_t i = 0; i < atoms_.size(); ++i) {
        run += atoms_[i].prob;
        out[i] = run;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Utilities

Utility Utility::entropic(double lambda) {
    require(lambda > 0.0, "entropic utility: lambda must be > 0");
    Utility u;
    u.kind = Kind::entropic;
    u.param = lambda;
    u.value = [lambda](double t) { return -std::expm1(-lambda * t) / lambda; };
    u.derivative = [lambda](double t) { return std::exp(-lambda * t); };
    u.name = "entropic";
    return u;
}

Utility Utility::cvar_utility(double alpha) {
    require(alpha >= 0.0 && alpha < 1.0, "cvar utility: alpha must lie in [0, 1)");
    const double w = 1.0 / (1.0 - alpha);
    Utility u;
    u.kind = Kind::piecewise_linear;
    u.param = alpha;
    u.value = [w](double t) { return t < 0.0 ? w * t : 0.0; };
    // At the kink the slope 1 is chosen, which keeps G_y = 0 there.
    u.derivative = [w](double t) { return t < 0.0 ? w : (t > 0.0 ? 0.0 : 1.0); };
    u.derivative_bound = w;
    u.name = "cvar_utility";
    return u;
}

Utility Utility::custom(std::string name, std::function<double(double)> uf, std::function<double(double)> du,
                        double derivative_bound) {
    require(static_cast<bool>(uf) && static_cast<bool>(du), "custom utility: functions required");
    Utility u;
    u.kind = Kind::custom;
    u.value = std::move(uf);
    u.derivative = std::move(du);
    u.derivative_bound = derivative_bound;
    u.name = std::move(name);
    return u;
}

// ---------------------------------------------------------------------------
// Measures

SaddleRiskMeasure::SaddleRiskMeasure(Family family, std::string name, FeasibleSet domain_y, FeasibleSet domain_z)
    : family_(family), name_(std::move(name)), domain_y_(std::move(domain_y)), domain_z_(std::move(domain_z)) {}

SaddleRiskMeasure make_cvar(double alpha, double lo, double hi) {
    require(alpha >= 0.0 && alpha < 1.0, "make_cvar: alpha must lie in [0, 1)");
    SaddleRiskMeasure m(SaddleRiskMeasure::Family::cvar, "cvar", FeasibleSet::interval(lo, hi),
                        FeasibleSet::singleton());
    m.alpha_ = alpha;
    m.tail_weights_ = {1.0 / (1.0 - alpha)};
    m.derive_constants();
    return m;
}

SaddleRiskMeasure make_oce(Utility utility, double lo, double hi) {
    require(static_cast<bool>(utility.value) && static_cast<bool>(utility.derivative), "make_oce: utility incomplete");
    SaddleRiskMeasure m(SaddleRiskMeasure::Family::oce, "oce_" + utility.name, FeasibleSet::interval(lo, hi),
                        FeasibleSet::singleton());
    if (utility.kind == Utility::Kind::piecewise_linear) m.alpha_ = utility.param;
    m.utility_ = std::move(utility);
    m.derive_constants();
    return m;
}

SaddleRiskMeasure make_kusuoka(std::vector<double> alphas, FeasibleSet weight_set, double lo, double hi) {
    require(!alphas.empty(), "make_kusuoka: need at least one confidence level");
    for (std::size_t i = 0; i < alphas.size(); ++i) {
        require(alphas[i] >= 0.0 && alphas[i] < 1.0, "make_kusuoka: confidence levels must lie in [0, 1)");
        require(i == 0 || alphas[i] > alphas[i - 1], "make_kusuoka: confidence levels must be strictly increasing");
    }
    require(weight_set.kind() == FeasibleSet::Kind::simplex && weight_set.dim() == alphas.size(),
            "make_kusuoka: weight set must be a simplex over the confidence levels");
    SaddleRiskMeasure m(SaddleRiskMeasure::Family::kusuoka, "kusuoka", FeasibleSet::interval(lo, hi),
                        std::move(weight_set));
    m.alphas_ = std::move(alphas);
    for (double a : m.alphas_) m.tail_weights_.push_back(1.0 / (1.0 - a));
    m.derive_constants();
    return m;
}

SaddleRiskMeasure make_abs_semidev(double iota, double lo, double hi) {
    require(iota >= 0.0 && iota <= 1.0, "make_abs_semidev: iota must lie in [0, 1]");
    SaddleRiskMeasure m(SaddleRiskMeasure::Family::abs_semidev, "abs_semidev", FeasibleSet::interval(lo, hi),
                        FeasibleSet::interval(0.0, 1.0));
    m.iota_ = iota;
    m.derive_constants();
    return m;
}

SaddleRiskMeasure make_custom(std::string name, SaddleRiskMeasure::GFunction g, SaddleRiskMeasure::GFunction grad_y,
                              SaddleRiskMeasure::GradZFunction grad_z, FeasibleSet domain_y, FeasibleSet domain_z,
                              double lipschitz_g, double subgrad_bound) {
    require(domain_y.kind() == FeasibleSet::Kind::interval, "make_custom: Y must be an interval");
    require(static_cast<bool>(g) && static_cast<bool>(grad_y) && static_cast<bool>(grad_z),
            "make_custom: G and both subgradients are required");
    SaddleRiskMeasure m(SaddleRiskMeasure::Family::custom, std::move(name), std::move(domain_y), std::move(domain_z));
    m.custom_g_ = std::move(g);
    m.custom_grad_y_ = std::move(grad_y);
    m.custom_grad_z_ = std::move(grad_z);
    m.lipschitz_g_ = lipschitz_g;
    m.subgrad_bound_ = subgrad_bound;
    return m;
}

SaddleRiskMeasure SaddleRiskMeasure::with_support(double lo, double hi) const {
    SaddleRiskMeasure m = *this;
    m.domain_y_ = FeasibleSet::interval(lo, hi);
    if (family_ != Family::custom) m.derive_constants();
    return m;
}

bool SaddleRiskMeasure::piecewise_linear() const {
    switch (family_) {
        case Family::cvar:
        case Family::kusuoka:
        case Family::abs_semidev:
            return true;
        case Family::oce:
            return utility_.kind == Utility::Kind::piecewise_linear;
        case Family::custom:
            return false;
    }
    return false;
}

void SaddleRiskMeasure::derive_constants() {
    const double lo = support_lo(), hi = support_hi();
    const double width = hi - lo;
    const double mag = std::max(std::abs(lo), std::abs(hi));
    // K_G sums sup-norm bounds of the partial derivatives in (x, y, z), which
    // bounds the Euclidean Lipschitz constant from above.
    switch (family_) {
        case Family::cvar: {
            const double w = tail_weights_[0];
            subgrad_bound_ = std::max(1.0, w - 1.0);
            lipschitz_g_ = w + subgrad_bound_;
            break;
        }
        case Family::oce: {
            double du_max = utility_.derivative_bound;
            if (utility_.kind == Utility::Kind::entropic) du_max = std::exp(utility_.param * width);
            double gy_bound = std::max(1.0, du_max - 1.0);
            if (utility_.kind == Utility::Kind::entropic) gy_bound = std::max(du_max - 1.0, -std::expm1(-utility_.param * width));
            subgrad_bound_ = gy_bound;
            lipschitz_g_ = du_max + gy_bound;
            break;
        }
        case Family::kusuoka: {
            const double w_max = tail_weights_.back();
            const double gy = std::max(1.0, w_max - 1.0);
            const double gz = mag + width * w_max;
            subgrad_bound_ = std::max(gy, gz);
            lipschitz_g_ = w_max + gy + std::sqrt(static_cast<double>(alphas_.size())) * gz;
            break;
        }
        case Family::abs_semidev: {
            subgrad_bound_ = std::max(iota_, iota_ * width);
            lipschitz_g_ = (1.0 + iota_) + iota_ + iota_ * width;
            break;
        }
        case Family::custom:
            break;
    }
}

double SaddleRiskMeasure::g(double x, double y, std::span<const double> z) const {
    switch (family_) {
        case Family::cvar:
            return y + tail_weights_[0] * hinge(x - y);
        case Family::oce:
            return y - utility_.value(y - x);
        case Family::kusuoka: {
            const double excess = hinge(x - y);
            double total = 0.0;
            for (std::size_t i = 0; i < alphas_.size(); ++i) total += z[i] * (y + tail_weights_[i] * excess);
            return total;
        }
        case Family::abs_semidev:
            return x + iota_ * hinge(x - y) + iota_ * z[0] * (y - x);
        case Family::custom:
            return custom_g_(x, y, z);
    }
    return 0.0;
}

// At the hinge kink x == y every family below returns the subgradient 0,
// which always belongs to the subdifferential there.
double SaddleRiskMeasure::grad_y(double x, double y, std::span<const double> z) const {
    switch (family_) {
        case Family::cvar:
            if (x == y) return 0.0;
            return x > y ? 1.0 - tail_weights_[0] : 1.0;
        case Family::oce:
            return 1.0 - utility_.derivative(y - x);
        case Family::kusuoka: {
            if (x == y) return 0.0;
            double total = 0.0;
            for (std::size_t i = 0; i < alphas_.size(); ++i)
                total += z[i] * (x > y ? 1.0 - tail_weights_[i] : 1.0);
            return total;
        }
        case Family::abs_semidev:
            if (x == y) return 0.0;
            return iota_ * z[0] - (x > y ? iota_ : 0.0);
        case Family::custom:
            return custom_grad_y_(x, y, z);
    }
    return 0.0;
}

void SaddleRiskMeasure::grad_z(double x, double y, std::span<const double> z, std::span<double> out) const {
    switch (family_) {
        case Family::cvar:
        case Family::oce:
            std::fill(out.begin(), out.end(), 0.0);
            return;
        case Family::kusuoka: {
            const double excess = hinge(x - y);
            for (std::size_t i = 0; i < alphas_.size(); ++i) out[i] = y + tail_weights_[i] * excess;
            return;
        }
        case Family::abs_semidev:
            out[0] = iota_ * (y - x);
            return;
        case Family::custom:
            custom_grad_z_(x, y, z, out);
            return;
    }
}

double expected_g(const SaddleRiskMeasure& measure, const FiniteDistribution& dist, double y,
                  std::span<const double> z) {
    double total = 0.0;
    for (const auto& a : dist.atoms()) total += a.prob * measure.g(a.value, y, z);
    return total;
}

// ---------------------------------------------------------------------------
// Exact solvers

namespace {

void check_support(const SaddleRiskMeasure& measure, const FiniteDistribution& dist) {
    const double lo = measure.support_lo(), hi = measure.support_hi();
    const double tol = 1e-12 * std::max(1.0, std::max(std::abs(lo), std::abs(hi)));
    require(dist.min_value() >= lo - tol && dist.max_value() <= hi + tol,
            "distribution atoms lie outside the measure's support interval");
}

/// Breakpoints of y -> E[G]: the support endpoints and interior atom values.
std::vector<double> breakpoints(const SaddleRiskMeasure& measure, const FiniteDistribution& dist) {
    const double lo = measure.support_lo(), hi = measure.support_hi();
    std::vector<double> b{lo, hi};
    for (const auto& a : dist.atoms())
        if (a.value > lo && a.value < hi) b.push_back(a.value);
    std::sort(b.begin(), b.end());
    b.erase(std::unique(b.begin(), b.end()), b.end());
    return b;
}

std::vector<std::vector<double>> z_grid(const FeasibleSet& set) {
    if (set.is_singleton()) return set.vertices();
    if (set.kind() == FeasibleSet::Kind::interval) {
        std::vector<std::vector<double>> out;
        const double lo = set.lower()[0], hi = set.upper()[0];
        for (int i = 0; i <= 100; ++i) out.push_back({lo + (hi - lo) * i / 100.0});
        return out;
    }
    // Lattice points on the simplex, projected into the box, plus the vertices.
    const std::size_t m = set.dim();
    std::size_t denom = 1;
    auto count = [m](std::size_t d) {
        double c = 1.0;
        for (std::size_t i = 1; i < m; ++i) c = c * static_cast<double>(d + i) / static_cast<double>(i);
        return c;
    };
    while (count(denom + 1) <= 5000.0) ++denom;
    std::vector<std::vector<double>> out = set.vertices();
    std::vector<std::size_t> parts(m, 0);
    std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t i, std::size_t left) {
        if (i + 1 == m) {
            parts[i] = left;
            std::vector<double> z(m);
            for (std::size_t k = 0; k < m; ++k) z[k] = static_cast<double>(parts[k]) / static_cast<double>(denom);
            set.project(z);
            out.push_back(std::move(z));
            return;
        }
        for (std::size_t v = 0; v <= left; ++v) {
            parts[i] = v;
            rec(i + 1, left - v);
        }
    };
    rec(0, denom);
    return out;
}

std::size_t grid_points(double width) {
    if (width <= 0.0) return 1;
    return static_cast<std::size_t>(std::min(1e6, std::ceil(width / kGridResolution))) + 1;
}

double grid_y(double lo, double hi, std::size_t i, std::size_t n) {
    if (n == 1) return lo;
    return lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
}

/// min_y max_z on a dense grid for measures without an exact solver.
RiskSolution grid_risk(const SaddleRiskMeasure& measure, const FiniteDistribution& dist) {
    const auto zs = z_grid(measure.domain_z());
    const double lo = measure.support_lo(), hi = measure.support_hi();
    const std::size_t n = grid_points(hi - lo);
    RiskSolution best;
    best.value = std::numeric_limits<double>::infinity();
    best.exact = false;
    best.grid_resolution = n > 1 ? (hi - lo) / static_cast<double>(n - 1) : 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double y = grid_y(lo, hi, i, n);
        double inner = -std::numeric_limits<double>::infinity();
        std::size_t arg = 0;
        for (std::size_t k = 0; k < zs.size(); ++k) {
            const double v = expected_g(measure, dist, y, zs[k]);
            if (v > inner) {
                inner = v;
                arg = k;
            }
        }
        if (inner < best.value) {
            best.value = inner;
            best.saddle = {y, zs[arg]};
        }
    }
    return best;
}

/// Smooth OCE: Z is a singleton and y -> E[G] is convex and differentiable.
RiskSolution smooth_oce_risk(const SaddleRiskMeasure& measure, const FiniteDistribution& dist) {
    const std::vector<double> z = measure.domain_z().vertices().front();
    const double lo = measure.support_lo(), hi = measure.support_hi();
    RiskSolution sol;
    if (measure.utility().kind == Utility::Kind::entropic) {
        // Closed form: y* = lambda^{-1} log E exp(lambda X), clamped to Y.
        const double lambda = measure.utility().param;
        const double top = dist.max_value();
        double acc = 0.0;
        for (const auto& a : dist.atoms()) acc += a.prob * std::exp(lambda * (a.value - top));
        const double y = std::clamp(top + std::log(acc) / lambda, lo, hi);
        sol.saddle = {y, z};
        sol.value = expected_g(measure, dist, y, z);
        return sol;
    }
    auto f = [&](double y) { return expected_g(measure, dist, y, z); };
    auto [y, v] = golden_min(f, lo, hi, 1e-10 * std::max(1.0, hi - lo));
    sol.saddle = {y, z};
    sol.value = v;
    return sol;
}

struct Candidate {
    double y;
    std::size_t segment;  // breakpoint index (if at_break) or left breakpoint of the segment
    bool at_break;
};

/// Exact min-max for G piecewise linear in y (kinks at atoms) and affine in z.
///
/// Phi_upper(y) = max over vertices v of Z of E[G(., y, v)] is convex and
/// piecewise linear; its kinks are atoms or crossings of two vertex lines
/// inside a segment, so the minimum is attained at one of those candidates.
/// The dual point mixes at most two active vertices so that 0 lies in the
/// y-subdifferential of E[G(., ., z*)] at y*.
RiskSolution piecewise_linear_risk(const SaddleRiskMeasure& measure, const FiniteDistribution& dist) {
    const auto breaks = breakpoints(measure, dist);
    const auto verts = measure.domain_z().vertices();
    const std::size_t nb = breaks.size(), nv = verts.size();

    std::vector<std::vector<double>> at(nv, std::vector<double>(nb));
    for (std::size_t v = 0; v < nv; ++v)
        for (std::size_t j = 0; j < nb; ++j) at[v][j] = expected_g(measure, dist, breaks[j], verts[v]);

    std::vector<Candidate> cands;
    for (std::size_t j = 0; j < nb; ++j) cands.push_back({breaks[j], j, true});
    for (std::size_t j = 0; j + 1 < nb; ++j) {
        for (std::size_t v = 0; v < nv; ++v) {
            for (std::size_t w = v + 1; w < nv; ++w) {
                const double d0 = at[v][j] - at[w][j];
                const double d1 = at[v][j + 1] - at[w][j + 1];
                if ((d0 < 0.0 && d1 > 0.0) || (d0 > 0.0 && d1 < 0.0)) {
                    const double y = breaks[j] + (breaks[j + 1] - breaks[j]) * d0 / (d0 - d1);
                    if (y > breaks[j] && y < breaks[j + 1]) cands.push_back({y, j, false});
                }
            }
        }
    }
    std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) { return a.y < b.y; });

    auto upper_at = [&](double y) {
        double best = -std::numeric_limits<double>::infinity();
        for (const auto& v : verts) best = std::max(best, expected_g(measure, dist, y, v));
        return best;
    };

    Candidate best_c = cands.front();
    double best = upper_at(best_c.y);
    for (std::size_t i = 1; i < cands.size(); ++i) {
        const double val = upper_at(cands[i].y);
        if (val < best) {
            best = val;
            best_c = cands[i];
        }
    }

    RiskSolution sol;
    sol.value = best;
    sol.saddle.y = best_c.y;
    if (nv == 1 || nb == 1) {
        std::size_t arg = 0;
        double top = -std::numeric_limits<double>::infinity();
        for (std::size_t v = 0; v < nv; ++v) {
            const double val = expected_g(measure, dist, best_c.y, verts[v]);
            if (val > top) {
                top = val;
                arg = v;
            }
        }
        sol.saddle.z = verts[arg];
        return sol;
    }

    // One-sided slopes of each vertex line at y*.
    const bool has_left = !(best_c.at_break && best_c.segment == 0);
    const bool has_right = !(best_c.at_break && best_c.segment + 1 == nb);
    auto slope = [&](std::size_t v, std::size_t j) { return (at[v][j + 1] - at[v][j]) / (breaks[j + 1] - breaks[j]); };
    const double tol = 1e-10 * (1.0 + std::abs(best));

    std::vector<std::size_t> active;
    std::vector<double> left(nv, 0.0), right(nv, 0.0);
    for (std::size_t v = 0; v < nv; ++v) {
        if (expected_g(measure, dist, best_c.y, verts[v]) < best - tol) continue;
        active.push_back(v);
        if (best_c.at_break) {
            if (has_left) left[v] = slope(v, best_c.segment - 1);
            if (has_right) right[v] = slope(v, best_c.segment);
        } else {
            left[v] = right[v] = slope(v, best_c.segment);
        }
    }

    const double stol = 1e-9 * (1.0 + std::abs(best));
    for (std::size_t v : active) {
        const bool ok_left = !has_left || left[v] <= stol;
        const bool ok_right = !has_right || right[v] >= -stol;
        if (ok_left && ok_right) {
            sol.saddle.z = verts[v];
            return sol;
        }
    }
    // No single vertex certifies optimality: mix the steepest vertices from each side.
    std::size_t vl = active.front(), vr = active.front();
    for (std::size_t v : active) {
        if (left[v] < left[vl]) vl = v;
        if (right[v] > right[vr]) vr = v;
    }
    const double a1 = right[vr], a2 = right[vl];
    const double mu = (a1 - a2) > 0.0 ? std::clamp(-a2 / (a1 - a2), 0.0, 1.0) : 0.5;
    std::vector<double> z(verts[vr].size());
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = mu * verts[vr][i] + (1.0 - mu) * verts[vl][i];
    measure.domain_z().project(z);
    sol.saddle.z = std::move(z);
    return sol;
}

/// max over z in Z of min_b (a_b + g_b . z) by enumerating LP vertices.
double lp_vertex_max(const std::vector<double>& a, const std::vector<std::vector<double>>& g, const FeasibleSet& set) {
    const std::size_t m = set.dim();
    const std::size_t n = m + 1;  // unknowns: z and t
    struct Row {
        Eigen::VectorXd coef;
        double rhs;
    };
    std::vector<Row> ineq;  // coef . x <= rhs
    for (std::size_t b = 0; b < a.size(); ++b) {
        Eigen::VectorXd c = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < m; ++i) c[static_cast<Eigen::Index>(i)] = -g[b][i];
        c[static_cast<Eigen::Index>(m)] = 1.0;
        ineq.push_back({c, a[b]});
    }
    for (std::size_t i = 0; i < m; ++i) {
        Eigen::VectorXd lo = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
        lo[static_cast<Eigen::Index>(i)] = -1.0;
        ineq.push_back({lo, -set.lower()[i]});
        Eigen::VectorXd hi = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
        hi[static_cast<Eigen::Index>(i)] = 1.0;
        ineq.push_back({hi, set.upper()[i]});
    }
    const bool has_sum = set.kind() == FeasibleSet::Kind::simplex;
    const std::size_t need = has_sum ? n - 1 : n;

    double combos = 1.0;
    for (std::size_t i = 0; i < need; ++i)
        combos = combos * static_cast<double>(ineq.size() - i) / static_cast<double>(i + 1);
    require(combos <= 5e6, "maxmin_risk: problem too large for vertex enumeration");

    double scale = 1.0;
    for (double v : a) scale = std::max(scale, std::abs(v));
    const double tol = 1e-9 * scale;

    double best = -std::numeric_limits<double>::infinity();
    std::vector<std::size_t> pick(need);
    std::iota(pick.begin(), pick.end(), 0);
    const std::size_t total = ineq.size();
    while (true) {
        Eigen::MatrixXd A(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
        Eigen::VectorXd rhs(static_cast<Eigen::Index>(n));
        Eigen::Index r = 0;
        for (std::size_t idx : pick) {
            A.row(r) = ineq[idx].coef.transpose();
            rhs[r] = ineq[idx].rhs;
            ++r;
        }
        if (has_sum) {
            for (std::size_t i = 0; i < m; ++i) A(r, static_cast<Eigen::Index>(i)) = 1.0;
            A(r, static_cast<Eigen::Index>(m)) = 0.0;
            rhs[r] = 1.0;
        }
        Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
        if (lu.isInvertible()) {
            const Eigen::VectorXd x = lu.solve(rhs);
            bool feasible = true;
            for (const auto& row : ineq) {
                if (row.coef.dot(x) > row.rhs + tol) {
                    feasible = false;
                    break;
                }
            }
            if (feasible) best = std::max(best, x[static_cast<Eigen::Index>(m)]);
        }
        // Next combination in lexicographic order.
        std::size_t i = need;
        while (i > 0 && pick[i - 1] == total - need + (i - 1)) --i;
        if (i == 0) break;
        ++pick[i - 1];
        for (std::size_t j = i; j < need; ++j) pick[j] = pick[j - 1] + 1;
    }
    return best;
}

}  // namespace

RiskSolution exact_risk(const SaddleRiskMeasure& measure, const FiniteDistribution& dist) {
    check_support(measure, dist);
    if (measure.piecewise_linear()) return piecewise_linear_risk(measure, dist);
    if (measure.family() == SaddleRiskMeasure::Family::oce) return smooth_oce_risk(measure, dist);
    return grid_risk(measure, dist);
}

double upper_value(const SaddleRiskMeasure& measure, const FiniteDistribution& dist, double y) {
    const auto zs = measure.exact_solver_available() ? measure.domain_z().vertices() : z_grid(measure.domain_z());
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& z : zs) best = std::max(best, expected_g(measure, dist, y, z));
    return best;
}

double lower_value(const SaddleRiskMeasure& measure, const FiniteDistribution& dist, std::span<const double> z) {
    const double lo = measure.support_lo(), hi = measure.support_hi();
    if (measure.piecewise_linear()) {
        double best = std::numeric_limits<double>::infinity();
        for (double b : breakpoints(measure, dist)) best = std::min(best, expected_g(measure, dist, b, z));
        return best;
    }
    if (measure.family() == SaddleRiskMeasure::Family::oce) return smooth_oce_risk(measure, dist).value;
    const std::size_t n = grid_points(hi - lo);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) best = std::min(best, expected_g(measure, dist, grid_y(lo, hi, i, n), z));
    return best;
}

double maxmin_risk(const SaddleRiskMeasure& measure, const FiniteDistribution& dist) {
    check_support(measure, dist);
    const auto& zset = measure.domain_z();
    if (measure.piecewise_linear()) {
        if (zset.is_singleton()) return lower_value(measure, dist, zset.vertices().front());
        const std::size_t m = zset.dim();
        const auto breaks = breakpoints(measure, dist);
        std::vector<double> a;
        std::vector<std::vector<double>> g;
        const std::vector<double> zero(m, 0.0);
        for (double b : breaks) {
            const double base = expected_g(measure, dist, b, zero);
            std::vector<double> slope(m);
            for (std::size_t i = 0; i < m; ++i) {
                std::vector<double> e(m, 0.0);
                e[i] = 1.0;
                slope[i] = expected_g(measure, dist, b, e) - base;
            }
            a.push_back(base);
            g.push_back(std::move(slope));
        }
        return lp_vertex_max(a, g, zset);
    }
    if (measure.family() == SaddleRiskMeasure::Family::oce) {
        // Independent route for the smooth case: golden section on y.
        const std::vector<double> z = zset.vertices().front();
        auto f = [&](double y) { return expected_g(measure, dist, y, z); };
        const double lo = measure.support_lo(), hi = measure.support_hi();
        return golden_min(f, lo, hi, 1e-10 * std::max(1.0, hi - lo)).second;
    }
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& z : z_grid(zset)) best = std::max(best, lower_value(measure, dist, z));
    return best;
}

double duality_gap(const SaddleRiskMeasure& measure, const FiniteDistribution& dist, const SaddlePoint& point) {
    require(measure.domain_y().contains(std::span<const double>(&point.y, 1)), "duality_gap: y is infeasible");
    require(measure.domain_z().contains(point.z), "duality_gap: z is infeasible");
    check_support(measure, dist);
    return upper_value(measure, dist, point.y) - lower_value(measure, dist, point.z);
}

}  // namespace raql
