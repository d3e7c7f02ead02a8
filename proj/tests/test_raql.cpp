#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "raql/dp.hpp"
#include "raql/raql.hpp"

using namespace raql;

namespace {

TabularMdp single(double c, double gamma) {
    return TabularMdp(1, 1, {1.0}, CostSpec{CostMode::deterministic, {c}, {}}, gamma);
}

RaqlParams small_params(std::uint64_t n, std::uint64_t t) {
    RaqlParams p;
    p.outer_iters = n;
    p.inner_iters = t;
    p.log_every = 10;
    return p;
}

}  // namespace

TEST_CASE("cost-to-go") {
    const auto m = make_cvar(0.5, 0, 5);
    QTable q(2, 1);
    q(1, 0) = 2.0;
    const SaddlePoint at{2.0, {0.0}};
    CHECK(cost_to_go(q, 1, 0.3, m, at, 0.0, CostMode::deterministic) == 0.3);
    CHECK(cost_to_go(q, 1, 0.3, m, at, 0.4, CostMode::deterministic) == doctest::Approx(0.3 + 2.0 * 0.4));
    const SaddlePoint low{0.1, {0.0}};
    CHECK(cost_to_go(q, 1, 0.3, m, low, 0.0, CostMode::random) == m.g(0.3, 0.1, low.z));
    CHECK(cost_to_go(q, 1, 0.3, m, low, 0.5, CostMode::random) == m.g(0.3 + 0.5 * 2.0, 0.1, low.z));
}

TEST_CASE("inner step updates only the visited pair") {
    const auto mdp = generate_random_mdp(4, 3, 5, CostMode::deterministic, 0.5);
    const auto m = make_cvar(0.3, 0, mdp.v_max());
    RaqlParams p;
    Rng rng(1);
    auto st = RaqlState::initial(mdp, m, p, 2);
    for (std::size_t i = 0; i < 12; ++i) st.q.values()[i] = 0.1 * i;
    const QTable prev = st.q;

    // first visit of the epoch with count 1: theta = 1, entry equals the target
    const auto rec = raql_inner_step(st, prev, mdp, m, p, 1, 1, rng);
    CHECK(rec.state == 2);
    CHECK(st.q(2, 1) == rec.target);
    for (std::size_t i = 0; i < 12; ++i)
        if (i != 2 * 3 + 1) CHECK(st.q.values()[i] == prev.values()[i]);
    CHECK(st.current_state == rec.next_state);
    CHECK(st.saddle[2 * 3 + 1].iteration() == 2);

    // theta = 1/2 from a count of 2
    auto st2 = RaqlState::initial(mdp, m, p, 0);
    st2.q(0, 0) = 2.0;
    st2.visit_counts[0] = 2;
    const QTable prev2 = st2.q;
    const auto rec2 = raql_inner_step(st2, prev2, mdp, m, p, 1, 0, rng);
    CHECK(st2.q(0, 0) == doctest::Approx(0.5 * 2.0 + 0.5 * rec2.target));
}

TEST_CASE("single state converges to the discounted cost") {
    for (auto measure : {make_cvar(0.1, 0, 1), make_abs_semidev(0.5, 0, 1),
                         make_kusuoka({0.1, 0.5, 0.9}, FeasibleSet::simplex(3), 0, 1)}) {
        const auto mdp = single(0.6, 0.1);
        Rng rng(2);
        const auto r = run_raql(mdp, measure, small_params(10000, 10), std::nullopt, rng);
        CHECK(std::abs(r.q(0, 0) - 0.6 / 0.9) <= 1e-3);
    }
}

TEST_CASE("zero epochs return the initial table") {
    const auto mdp = generate_random_mdp(3, 2, 1, CostMode::deterministic);
    Rng rng(3);
    const auto r = run_raql(mdp, make_cvar(0.1, 0, 1), small_params(0, 10), std::nullopt, rng);
    CHECK(r.q == QTable(3, 2, 0.0));
}

TEST_CASE("unvisited pairs keep their initial value and iterates stay bounded") {
    const auto mdp = generate_random_mdp(6, 4, 8, CostMode::random, 0.8);
    const auto m = make_kusuoka({0.1, 0.5}, FeasibleSet::simplex(2), 0, 1);
    for (std::uint64_t n : {3u, 20u, 2000u}) {
        Rng rng(4);
        auto p = small_params(n, 5);
        p.clip_targets = false;
        const auto r = run_raql(mdp, m, p, std::nullopt, rng);
        for (std::size_t i = 0; i < mdp.num_pairs(); ++i) {
            if (r.visit_counts[i] == 1) CHECK(r.q.values()[i] == 0.0);
            CHECK(r.q.values()[i] >= -1e-6);
            CHECK(r.q.values()[i] <= mdp.v_max() + 1e-6);
        }
    }
}

TEST_CASE("runs are bit-identical under a fixed seed") {
    const auto mdp = generate_random_mdp(5, 3, 2, CostMode::deterministic, 0.3);
    const auto m = make_abs_semidev(0.5, 0, 1);
    for (auto mode : {QUpdateMode::every_step, QUpdateMode::first_visit, QUpdateMode::once_per_epoch}) {
        auto p = small_params(500, 10);
        p.q_update = mode;
        Rng a(9), b(9);
        CHECK(run_raql(mdp, m, p, std::nullopt, a).q == run_raql(mdp, m, p, std::nullopt, b).q);
    }
}

TEST_CASE("trace cadence") {
    const auto mdp = generate_random_mdp(3, 2, 3, CostMode::deterministic, 0.2);
    const auto m = make_cvar(0.1, 0, 1);
    const auto ref = value_iteration(mdp, m, 1e-8).q;
    Rng rng(5);
    auto p = small_params(95, 5);
    const auto r = run_raql(mdp, m, p, ref, rng);
    REQUIRE(r.trace.size() == 11);
    CHECK(r.trace.front().outer_iter == 0);
    CHECK(r.trace.front().relative_error == doctest::Approx(1.0));
    CHECK(r.trace[1].outer_iter == 10);
    CHECK(r.trace.back().outer_iter == 95);
    for (std::size_t i = 1; i < r.trace.size(); ++i) CHECK(r.trace[i].outer_iter > r.trace[i - 1].outer_iter);
}

TEST_CASE("risk-neutral Q-learning baseline") {
    SUBCASE("deterministic chain") {
        // two-state cycle: a0 switches state, a1 stays
        std::vector<double> p{0, 1, 1, 0, 1, 0, 0, 1};
        const TabularMdp mdp(2, 2, p, CostSpec{CostMode::deterministic, {0.3, 0.7, 0.1, 0.2}, {}}, 0.5);
        const auto ref = expected_value_iteration(mdp, 1e-12).q;
        auto params = small_params(10000, 100);
        params.exploration_epsilon = 0.5;
        Rng rng(6);
        const auto r = risk_neutral_q_learning(mdp, params, ref, rng);
        for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(r.q.values()[i] - ref.values()[i]) <= 1e-2);
    }
    SUBCASE("zero discount learns the mean cost") {
        const auto mdp = generate_random_mdp(3, 2, 4, CostMode::random, 0.0);
        auto params = small_params(1000, 100);
        params.exploration_epsilon = 1.0;
        Rng rng(7);
        const auto r = risk_neutral_q_learning(mdp, params, std::nullopt, rng);
        for (std::size_t s = 0; s < 3; ++s)
            for (std::size_t a = 0; a < 2; ++a) CHECK(std::abs(r.q(s, a) - mdp.expected_cost(s, a)) <= 1e-2);
    }
    SUBCASE("uniform exploration still converges") {
        const auto mdp = generate_random_mdp(4, 2, 5, CostMode::deterministic, 0.5);
        const auto ref = expected_value_iteration(mdp, 1e-12).q;
        auto params = small_params(10000, 100);
        params.exploration_epsilon = 1.0;
        Rng rng(8);
        const auto r = risk_neutral_q_learning(mdp, params, ref, rng);
        CHECK(r.trace.back().relative_error <= 1e-2);
    }
}

TEST_CASE("RaQL reaches the oracle on 5x5 MDPs for almost every seed") {
    const auto mdp = generate_random_mdp(5, 5, 31, CostMode::deterministic, 0.1);
    const auto m = make_cvar(0.1, 0, 1);
    const auto ref = value_iteration(mdp, m, 1e-8).q;
    const int seeds = 20;
    std::vector<double> err(seeds);
#pragma omp parallel for
    for (int s = 0; s < seeds; ++s) {
        Rng rng(static_cast<std::uint64_t>(s));
        auto p = small_params(20000, 50);
        p.log_every = 20000;
        err[s] = run_raql(mdp, m, p, ref, rng).trace.back().relative_error;
    }
    CHECK(std::count_if(err.begin(), err.end(), [](double e) { return e < 0.05; }) >= 19);
}

TEST_CASE("a longer inner loop beats T=1 at equal sample budget") {
    const auto mdp = generate_random_mdp(5, 5, 32, CostMode::deterministic, 0.1);
    const auto m = make_kusuoka({0.1, 0.5, 0.9}, FeasibleSet::simplex(3), 0, 1);
    const auto ref = value_iteration(mdp, m, 1e-8).q;
    const int seeds = 10;
    std::vector<double> long_t(seeds), short_t(seeds);
#pragma omp parallel for
    for (int s = 0; s < seeds; ++s) {
        Rng a(static_cast<std::uint64_t>(s)), b(static_cast<std::uint64_t>(s));
        auto p = small_params(1000, 50);
        p.log_every = 1000000;
        long_t[s] = run_raql(mdp, m, p, ref, a).trace.back().relative_error;
        p = small_params(50000, 1);
        p.log_every = 1000000;
        short_t[s] = run_raql(mdp, m, p, ref, b).trace.back().relative_error;
    }
    std::nth_element(long_t.begin(), long_t.begin() + 5, long_t.end());
    std::nth_element(short_t.begin(), short_t.begin() + 5, short_t.end());
    CHECK(long_t[5] <= short_t[5]);
}

TEST_CASE("parameter validation") {
    RaqlParams p;
    p.learning_rate_k = 0.5;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    p = RaqlParams{};
    p.inner_iters = 0;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    p = RaqlParams{};
    p.exploration_epsilon = 0.0;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    CHECK(q_update_from_string(to_string(QUpdateMode::once_per_epoch)) == QUpdateMode::once_per_epoch);
    CHECK(sasp_clock_from_string("epoch") == SaspClock::epoch);
}
