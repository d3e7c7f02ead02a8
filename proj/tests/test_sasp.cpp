#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "raql/sasp.hpp"

using namespace raql;

namespace {

FiniteDistribution bernoulli(double p) { return FiniteDistribution({{0.0, 1.0 - p}, {1.0, p}}); }

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

TEST_CASE("window bounds") {
    const auto half = WindowRule::half();
    CHECK(window_bounds(half, 4).tau_star == 2);
    CHECK(window_bounds(half, 4).window_len == 3);
    CHECK(window_bounds(half, 1).tau_star == 1);
    CHECK(window_bounds(half, 1).window_len == 1);
    CHECK(window_bounds(half, 5).tau_star == 3);
    for (std::uint64_t t : {1u, 7u, 1000u}) {
        CHECK(window_bounds(WindowRule::full(), t).tau_star == 1);
        CHECK(window_bounds(WindowRule::full(), t).window_len == t);
    }
    for (const auto& rule : {half, WindowRule::full(), WindowRule::fixed_fraction(0.3), WindowRule::fixed_fraction(1.0)}) {
        std::uint64_t prev = 1;
        for (std::uint64_t t = 1; t <= 5000; ++t) {
            const auto tau = rule.tau_star(t);
            CHECK(tau >= 1);
            CHECK(tau <= t);
            CHECK(tau >= prev);
            prev = tau;
        }
    }
    CHECK_THROWS_AS(WindowRule::fixed_fraction(0.0), std::invalid_argument);
    CHECK(WindowRule::from_string("half") == half);
}

TEST_CASE("step schedule") {
    SaspParams p;
    CHECK(p.step_size(4) == 0.5);
    CHECK(p.step_size(1) == 1.0);
    p.step_exponent = 1.5;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
}

TEST_CASE("a saddle point is a fixed point") {
    const auto m = make_cvar(0.5, 0, 1);
    SaspState st({0.4, {0.0}}, WindowRule::half());
    SaspParams p;
    for (int i = 0; i < 10; ++i) sasp_step(st, m, 0.4, p);
    CHECK(st.current().y == 0.4);
    CHECK(st.averaged().y == 0.4);
}

TEST_CASE("one hand-evaluated step") {
    const auto m = make_cvar(0.5, 0, 1);
    for (double c : {0.25, 0.5, 2.0}) {
        SaspState st({0.0, {0.0}}, WindowRule::half());
        SaspParams p;
        p.step_scale = c;
        sasp_step(st, m, 1.0, p);
        CHECK(st.current().y == doctest::Approx(std::min(c, 1.0)));
        CHECK(st.iteration() == 2);
    }
    SaspState st({0.0, {0.0}}, WindowRule::half());
    CHECK_THROWS_AS(sasp_step(st, m, 1.5, SaspParams{}), std::invalid_argument);
}

TEST_CASE("a single iterate is its own average") {
    const auto m = make_kusuoka({0.1, 0.5}, FeasibleSet::simplex(2), 0, 1);
    Rng rng(1);
    const auto r = run_sasp(m, bernoulli(0.5), SaspParams{}, 1, rng);
    const auto start = SaspState::at_center(m, WindowRule::half());
    CHECK(r.averaged == start.current());
    CHECK(r.averaged.y == 0.5);
    CHECK(r.averaged.z[0] == doctest::Approx(0.5));
}

TEST_CASE("iterates and averages stay feasible") {
    Rng rng(2);
    const std::vector<SaddleRiskMeasure> measures{
        make_cvar(0.3, 0, 1), make_oce(Utility::entropic(2.0), 0, 1),
        make_kusuoka({0.1, 0.5, 0.9}, FeasibleSet::simplex(3), 0, 1),
        make_kusuoka({0.2, 0.7}, FeasibleSet::boxed_simplex({0.2, 0.1}, {0.9, 0.8}), 0, 1),
        make_abs_semidev(0.5, 0, 1)};
    for (const auto& m : measures) {
        for (bool avg : {true, false}) {
            SaspParams p;
            p.step_scale = 3.0;
            p.use_moving_average = avg;
            auto st = SaspState::at_center(m, p.window);
            for (int i = 0; i < 20000; ++i) {
                sasp_step(st, m, rng.uniform(), p);
                const auto& c = st.current();
                const auto& a = st.averaged();
                CHECK(m.domain_y().contains(std::span<const double>(&c.y, 1), 1e-12));
                CHECK(m.domain_z().contains(c.z, 1e-9));
                CHECK(m.domain_z().contains(a.z, 1e-9));
                if (avg) CHECK(st.history_length() >= window_bounds(p.window, st.iteration()).window_len);
            }
        }
    }
}

TEST_CASE("moving average matches a direct window mean") {
    const auto m = make_kusuoka({0.1, 0.6}, FeasibleSet::simplex(2), 0, 1);
    Rng rng(3);
    SaspParams p;
    auto st = SaspState::at_center(m, p.window);
    std::vector<SaddlePoint> iters{st.current()};
    for (int i = 0; i < 300; ++i) {
        sasp_step(st, m, rng.uniform(), p);
        iters.push_back(st.current());
        const auto [tau, len] = window_bounds(p.window, st.iteration());
        double y = 0, z0 = 0;
        for (std::uint64_t k = tau; k <= st.iteration(); ++k) {
            y += iters[k - 1].y;
            z0 += iters[k - 1].z[0];
        }
        CHECK(st.averaged().y == doctest::Approx(y / len).epsilon(1e-12));
        CHECK(st.averaged().z[0] == doctest::Approx(z0 / len).epsilon(1e-12));
    }
}

TEST_CASE("CVaR of a fair coin converges to 1") {
    const auto m = make_cvar(0.5, 0, 1);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Rng rng(seed);
        const auto r = run_sasp(m, bernoulli(0.5), SaspParams{}, 10000, rng);
        CHECK(std::abs(r.value - 1.0) <= 0.05);
    }
}

TEST_CASE("duality gap trace shrinks and stays under the bound") {
    const auto m = make_cvar(0.5, 0, 1);
    const auto d = FiniteDistribution({{0.0, 0.2}, {0.3, 0.5}, {1.0, 0.3}});
    Rng rng(4);
    const auto r = run_sasp(m, d, SaspParams{}, 10000, rng, 1);
    std::vector<double> medians;
    for (std::size_t start = 0; start + 500 <= r.trace.size(); start += 500) {
        std::vector<double> w;
        for (std::size_t i = start; i < start + 500; ++i) w.push_back(r.trace[i].gap);
        medians.push_back(median(w));
    }
    CHECK(medians.back() < medians.front());
    CHECK(medians.back() <= 0.05);
    for (const auto& g : r.trace) {
        CHECK(g.gap >= -1e-9);
        if (g.iteration > 1) CHECK(g.gap <= g.bound_f);
    }
    const std::string csv = gap_trace_csv(r.trace);
    CHECK(csv.rfind("iteration,gap,bound_f\n", 0) == 0);
}

TEST_CASE("gap bound arithmetic") {
    SaspParams p;
    const GapBoundConstants unit{1, 1, 1};
    const double expect = 2.0 * 2.0 / 3.0 + 2.0 / std::sqrt(3.0) + 4.0 * 2.0 * std::pow(2.0, -0.5);
    CHECK(gap_bound_f(4, unit, p) == doctest::Approx(expect).epsilon(1e-14));
    CHECK(gap_bound_f(17, GapBoundConstants{0, 0, 1}, p) == 0.0);
    CHECK_THROWS_AS(gap_bound_f(1, unit, p), std::invalid_argument);

    // term structure under C -> 2C
    const GapBoundConstants k{0.7, 0.4, 1.3};
    SaspParams q = p;
    q.step_scale = 2.0;
    const std::uint64_t t = 100;
    const auto [tau, len] = window_bounds(p.window, t);
    const double t1 = (0.7 + 0.4) * std::pow(double(t), 0.5) / len;
    const double t2 = 1.1 * 1.3 / std::sqrt(double(len));
    const double t3 = 1.1 * 1.1 * 1.3 * 1.3 * 1.1 * std::pow(double(tau), -0.5);
    CHECK(gap_bound_f(t, k, p) == doctest::Approx(t1 + t2 + t3).epsilon(1e-12));
    CHECK(gap_bound_f(t, k, q) == doctest::Approx(t1 / 2 + t2 + 2 * t3).epsilon(1e-12));

    double prev = gap_bound_f(100, unit, p);
    for (std::uint64_t tt : {1000u, 10000u, 100000u, 1000000u}) {
        const double f = gap_bound_f(tt, unit, p);
        CHECK(f < prev);
        prev = f;
    }
    CHECK(prev < 0.02);
}

TEST_CASE("without averaging a smooth measure still converges") {
    const auto m = make_oce(Utility::entropic(2.0), 0, 1);
    const auto d = FiniteDistribution({{0.1, 0.3}, {0.5, 0.4}, {0.9, 0.3}});
    const double exact = exact_risk(m, d).value;
    SaspParams p;
    p.use_moving_average = false;
    Rng rng(5);
    CHECK(std::abs(run_sasp(m, d, p, 10000, rng).value - exact) <= 0.05);
}

TEST_CASE("averaging lowers the final gap on a Kusuoka measure") {
    const auto m = make_kusuoka({0.1, 0.5, 0.9}, FeasibleSet::simplex(3), 0, 1);
    const auto d = FiniteDistribution({{0.2, 0.25}, {0.5, 0.25}, {0.7, 0.25}, {0.9, 0.25}});
    std::vector<double> avg, raw;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        SaspParams p;
        Rng a(seed), b(seed);
        avg.push_back(duality_gap(m, d, run_sasp(m, d, p, 5000, a).averaged));
        p.use_moving_average = false;
        raw.push_back(duality_gap(m, d, run_sasp(m, d, p, 5000, b).averaged));
    }
    CHECK(median(avg) < median(raw));
}
