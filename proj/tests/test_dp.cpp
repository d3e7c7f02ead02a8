#include <cmath>

#include "doctest.h"
#include "raql/dp.hpp"

using namespace raql;

namespace {

TabularMdp chain() {
    // (s0,a0)->s1, (s0,a1)->s0, (s1,*)->s1
    std::vector<double> p{0, 1, 1, 0, 0, 1, 0, 1};
    return TabularMdp(2, 2, p, CostSpec{CostMode::deterministic, {0.3, 0.7, 0.1, 0.2}, {}}, 0.5);
}

// Expected-cost Bellman backup written out directly.
std::vector<double> neutral_backup(const TabularMdp& mdp, const std::vector<double>& v) {
    std::vector<double> out(mdp.num_states());
    for (std::size_t s = 0; s < mdp.num_states(); ++s) {
        double best = 1e300;
        for (std::size_t a = 0; a < mdp.num_actions(); ++a) {
            double q = mdp.expected_cost(s, a);
            for (std::size_t n = 0; n < mdp.num_states(); ++n) q += mdp.discount() * mdp.transition(s, a, n) * v[n];
            best = std::min(best, q);
        }
        out[s] = best;
    }
    return out;
}

double sup_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0;
    for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
    return d;
}

}  // namespace

TEST_CASE("zero discount gives the cheapest immediate cost") {
    const auto mdp = generate_random_mdp(6, 4, 3, CostMode::deterministic, 0.0);
    const auto m = make_cvar(0.3, 0, 1);
    Rng rng(1);
    std::vector<double> v(6);
    for (auto& x : v) x = 5 * rng.uniform();
    const auto r = bellman_apply(mdp, m, v);
    for (std::size_t s = 0; s < 6; ++s) {
        double best = 1e9;
        for (std::size_t a = 0; a < 4; ++a) best = std::min(best, mdp.expected_cost(s, a));
        CHECK(r.v[s] == best);
    }
}

TEST_CASE("hand-evaluated chain") {
    const auto mdp = chain();
    const auto m = make_cvar(0.0, 0, 1);
    const auto r = bellman_apply(mdp, m, {1.0, 2.0});
    CHECK(r.v[0] == doctest::Approx(1.2));
    CHECK(r.v[1] == doctest::Approx(1.1));
    const auto vi = value_iteration(mdp, make_cvar(0.7, 0, 1), 1e-12);
    // point-mass transitions: any risk measure acts as the identity
    CHECK(vi.v[1] == doctest::Approx(0.2).epsilon(1e-10));
    CHECK(vi.v[0] == doctest::Approx(0.4).epsilon(1e-10));
    CHECK(vi.policy.action_per_state[0] == 0);
}

TEST_CASE("CVaR at level zero reproduces the expected-cost operator") {
    const auto m = make_cvar(0.0, 0, 1);
    Rng rng(2);
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto mode = seed % 2 ? CostMode::random : CostMode::deterministic;
        const auto mdp = generate_random_mdp(5, 3, seed, mode, 0.1 + 0.8 * rng.uniform());
        std::vector<double> v(5);
        for (auto& x : v) x = mdp.v_max() * rng.uniform();
        CHECK(sup_diff(bellman_apply(mdp, m, v).v, neutral_backup(mdp, v)) <= 1e-8);
    }
}

TEST_CASE("value iteration on a single state") {
    for (double c : {0.0, 0.25, 1.0}) {
        for (double gamma : {0.1, 0.9}) {
            const TabularMdp mdp(1, 1, {1.0}, CostSpec{CostMode::deterministic, {c}, {}}, gamma);
            const auto vi = value_iteration(mdp, make_kusuoka({0.1, 0.5}, FeasibleSet::simplex(2), 0, 1), 1e-12);
            CHECK(vi.v[0] == doctest::Approx(c / (1 - gamma)).epsilon(1e-10));
        }
    }
}

TEST_CASE("value iteration terminates with contraction guarantees") {
    const auto mdp = generate_random_mdp(10, 10, 42, CostMode::deterministic, 0.1);
    const auto m = make_cvar(0.1, 0, 1);
    const auto vi = value_iteration(mdp, m, 0.01);
    CHECK(vi.residual <= 0.01);
    CHECK(vi.iterations <= value_iteration_bound(mdp, 0.01));
    for (std::size_t s = 0; s < 10; ++s) CHECK(vi.v[s] == vi.q.min_value(s));
    for (std::size_t k = 1; k < vi.residuals.size(); ++k)
        if (vi.residuals[k - 1] > 0) CHECK(vi.residuals[k] <= 0.1 * vi.residuals[k - 1] + 1e-15);

    const auto slow = generate_random_mdp(8, 3, 7, CostMode::random, 0.9);
    const double tol = 1e-6;
    const auto vs = value_iteration(slow, make_abs_semidev(0.5, 0, 1), tol);
    const auto next = bellman_apply(slow, make_abs_semidev(0.5, 0, 1).with_support(0, 20), vs.v);
    CHECK(sup_diff(next.v, vs.v) <= tol * (1 + 0.9) / (1 - 0.9));
    for (std::size_t k = 1; k < vs.residuals.size(); ++k) CHECK(vs.residuals[k] <= 0.9 * vs.residuals[k - 1] + 1e-12);
}

TEST_CASE("iteration cap raises with the last residual") {
    const auto mdp = generate_random_mdp(4, 2, 1, CostMode::deterministic, 0.9);
    try {
        value_iteration(mdp, make_cvar(0.2, 0, 1), 1e-12, 3);
        FAIL("expected ValueIterationError");
    } catch (const ValueIterationError& e) {
        CHECK(e.residual() > 1e-12);
    }
    CHECK_THROWS_AS(value_iteration(mdp, make_cvar(0.2, 0, 1), 0.0), std::invalid_argument);
}

TEST_CASE("contraction") {
    Rng rng(3);
    const std::vector<SaddleRiskMeasure> measures{make_cvar(0.3, 0, 1), make_abs_semidev(0.5, 0, 1),
                                                  make_kusuoka({0.1, 0.5, 0.9}, FeasibleSet::simplex(3), 0, 1),
                                                  make_oce(Utility::entropic(1.0), 0, 1)};
    for (double gamma : {0.1, 0.5, 0.99}) {
        const auto mdp = generate_random_mdp(5, 3, 11, CostMode::deterministic, gamma);
        for (const auto& m : measures) {
            CHECK(contraction_check(mdp, m, 100, rng) <= gamma + 1e-9);
            // constant shift: exactly gamma for translation-invariant measures
            std::vector<double> v1(5), v2(5);
            for (std::size_t s = 0; s < 5; ++s) {
                v1[s] = 0.5 * mdp.v_max() * rng.uniform();
                v2[s] = v1[s] + 0.3;
            }
            const auto wide = m.with_support(0, mdp.v_max() + 1);
            const auto a = bellman_apply(mdp, wide, v1).v, b = bellman_apply(mdp, wide, v2).v;
            CHECK(std::abs(sup_diff(a, b) / 0.3 - gamma) <= 1e-9);
        }
    }
    const auto rnd = generate_random_mdp(4, 2, 5, CostMode::random, 0.5);
    CHECK(contraction_check(rnd, make_cvar(0.5, 0, 1), 100, rng) <= 0.5 + 1e-9);
}

TEST_CASE("risk-neutral reduction matches classical value iteration") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const auto mdp = generate_random_mdp(4, 3, 100 + seed, seed % 2 ? CostMode::random : CostMode::deterministic, 0.6);
        const auto risk = value_iteration(mdp, make_cvar(0.0, 0, 1), 1e-13);
        std::vector<double> v(4, 0.0);
        for (int i = 0; i < 200; ++i) v = neutral_backup(mdp, v);
        CHECK(sup_diff(risk.v, v) <= 1e-10);
        CHECK(sup_diff(expected_value_iteration(mdp, 1e-13).v, v) <= 1e-10);
    }
}

TEST_CASE("serial and parallel sweeps are bit-identical") {
    const auto mdp = generate_random_mdp(40, 5, 9, CostMode::random, 0.7);
    const auto m = make_kusuoka({0.1, 0.5, 0.9}, FeasibleSet::simplex(3), 0, 1);
    Rng rng(4);
    std::vector<double> v(40);
    for (auto& x : v) x = mdp.v_max() * rng.uniform();
    const auto a = bellman_apply(mdp, m, v, Execution::serial);
    const auto b = bellman_apply(mdp, m, v, Execution::parallel);
    CHECK(a.v == b.v);
    CHECK(a.q == b.q);
    const auto va = value_iteration(mdp, m, 1e-6, 1000, Execution::serial);
    const auto vb = value_iteration(mdp, m, 1e-6, 1000, Execution::parallel);
    CHECK(va.v == vb.v);
    CHECK(va.iterations == vb.iterations);
}

TEST_CASE("greedy policy") {
    QTable q(2, 3);
    q(0, 0) = 3;
    q(0, 1) = 1;
    q(0, 2) = 1;
    q(1, 2) = -1;
    const auto p = greedy_policy(q);
    CHECK(p.action_per_state[0] == 1);
    CHECK(p.action_per_state[1] == 2);
}
