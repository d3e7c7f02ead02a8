#include "raql/dp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace raql {

FiniteDistribution continuation_distribution(const TabularMdp& mdp, std::size_t s, std::size_t a,
                                             std::span<const double> v) {
    const auto row = mdp.row(s, a);
    std::vector<Atom> atoms;
    if (mdp.cost_mode() == CostMode::deterministic) {
        for (std::size_t next = 0; next < row.size(); ++next)
            if (row[next] > 0.0) atoms.push_back({v[next], row[next]});
    } else {
        const double gamma = mdp.discount();
        const std::size_t idx = s * mdp.num_actions() + a;
        for (const auto& outcome : mdp.cost().outcomes) {
            if (outcome.prob <= 0.0) continue;
            for (std::size_t next = 0; next < row.size(); ++next)
                if (row[next] > 0.0) atoms.push_back({outcome.table[idx] + gamma * v[next], outcome.prob * row[next]});
        }
    }
    return FiniteDistribution(std::move(atoms));
}

std::pair<double, double> backup_support(const TabularMdp& mdp, std::span<const double> v) {
    double lo = 0.0, hi = mdp.v_max();
    for (double x : v) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    if (mdp.cost_mode() == CostMode::random) {
        const double gamma = mdp.discount();
        lo = std::min(lo, gamma * lo);
        hi = std::max(hi, mdp.c_max() + gamma * hi);
    }
    return {lo, hi};
}

void bellman_backup(const TabularMdp& mdp, const SaddleRiskMeasure& measure, std::span<const double> v,
                    std::size_t s, std::span<double> q_row) {
    const double gamma = mdp.discount();
    for (std::size_t a = 0; a < mdp.num_actions(); ++a) {
        const double risk = exact_risk(measure, continuation_distribution(mdp, s, a, v)).value;
        q_row[a] = mdp.cost_mode() == CostMode::deterministic ? mdp.expected_cost(s, a) + gamma * risk : risk;
    }
}

BellmanResult bellman_apply(const TabularMdp& mdp, const SaddleRiskMeasure& measure, const ValueFunction& v,
                            Execution exec) {
    if (v.size() != mdp.num_states()) throw std::invalid_argument("bellman_apply: value function size mismatch");
    const auto [lo, hi] = backup_support(mdp, v);
    const SaddleRiskMeasure local = measure.with_support(lo, hi);
    BellmanResult out{ValueFunction(mdp.num_states()), QTable(mdp.num_states(), mdp.num_actions())};
    const auto ns = static_cast<std::ptrdiff_t>(mdp.num_states());
    auto sweep = [&](std::ptrdiff_t s) {
        const auto st = static_cast<std::size_t>(s);
        std::span<double> row(out.q.values().data() + st * mdp.num_actions(), mdp.num_actions());
        bellman_backup(mdp, local, v, st, row);
        out.v[st] = out.q.min_value(st);
    };
    if (exec == Execution::parallel) {
#pragma omp parallel for schedule(dynamic)
        for (std::ptrdiff_t s = 0; s < ns; ++s) sweep(s);
    } else {
        for (std::ptrdiff_t s = 0; s < ns; ++s) sweep(s);
    }
    return out;
}

Policy greedy_policy(const QTable& q) {
    Policy p;
    p.action_per_state.resize(q.num_states());
    for (std::size_t s = 0; s < q.num_states(); ++s) p.action_per_state[s] = q.greedy_action(s);
    return p;
}

namespace {

double sup_distance(const ValueFunction& a, const ValueFunction& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
    return d;
}

}  // namespace

ValueIterationResult value_iteration(const TabularMdp& mdp, const SaddleRiskMeasure& measure, double tol,
                                     std::size_t max_iters, Execution exec) {
    if (!(tol > 0.0)) throw std::invalid_argument("value_iteration: tol must be > 0");
    ValueIterationResult res;
    res.v.assign(mdp.num_states(), 0.0);
    double residual = std::numeric_limits<double>::infinity();
    for (std::size_t it = 1; it <= max_iters; ++it) {
        BellmanResult next = bellman_apply(mdp, measure, res.v, exec);
        residual = sup_distance(next.v, res.v);
        res.v = std::move(next.v);
        res.q = std::move(next.q);
        res.residuals.push_back(residual);
        res.iterations = it;
        if (residual <= tol) {
            res.residual = residual;
            res.policy = greedy_policy(res.q);
            return res;
        }
    }
    throw ValueIterationError("value_iteration: no convergence within max_iters (residual " +
                                  std::to_string(residual) + ")",
                              residual);
}

ValueIterationResult expected_value_iteration(const TabularMdp& mdp, double tol, std::size_t max_iters) {
    if (!(tol > 0.0)) throw std::invalid_argument("expected_value_iteration: tol must be > 0");
    const std::size_t ns = mdp.num_states(), na = mdp.num_actions();
    const double gamma = mdp.discount();
    ValueIterationResult res;
    res.v.assign(ns, 0.0);
    res.q = QTable(ns, na);
    for (std::size_t it = 1; it <= max_iters; ++it) {
        ValueFunction next(ns);
        for (std::size_t s = 0; s < ns; ++s) {
            for (std::size_t a = 0; a < na; ++a) {
                double cont = 0.0;
                const auto row = mdp.row(s, a);
                for (std::size_t t = 0; t < ns; ++t) cont += row[t] * res.v[t];
                res.q(s, a) = mdp.expected_cost(s, a) + gamma * cont;
            }
            next[s] = res.q.min_value(s);
        }
        const double residual = sup_distance(next, res.v);
        res.v = std::move(next);
        res.residuals.push_back(residual);
        res.iterations = it;
        if (residual <= tol) {
            res.residual = residual;
            res.policy = greedy_policy(res.q);
            return res;
        }
    }
    throw ValueIterationError("expected_value_iteration: no convergence within max_iters", res.residuals.back());
}

std::size_t value_iteration_bound(const TabularMdp& mdp, double tol) {
    const double gamma = mdp.discount();
    if (gamma == 0.0) return 2;
    const double ratio = mdp.v_max() / tol;
    if (ratio <= 1.0) return 2;
    return static_cast<std::size_t>(std::ceil(std::log(ratio) / std::log(1.0 / gamma))) + 1;
}

double contraction_check(const TabularMdp& mdp, const SaddleRiskMeasure& measure, std::size_t trials, Rng& rng) {
    if (trials == 0) throw std::invalid_argument("contraction_check: trials must be >= 1");
    const std::size_t ns = mdp.num_states();
    const double vmax = mdp.v_max();
    double worst = 0.0;
    for (std::size_t trial = 0; trial < trials; ++trial) {
        ValueFunction v1(ns), v2(ns);
        for (auto& x : v1) x = vmax * rng.uniform();
        for (auto& x : v2) x = vmax * rng.uniform();
        const double dv = sup_distance(v1, v2);
        if (dv == 0.0) continue;
        const auto t1 = bellman_apply(mdp, measure, v1, Execution::serial);
        const auto t2 = bellman_apply(mdp, measure, v2, Execution::serial);
        worst = std::max(worst, sup_distance(t1.v, t2.v) / dv);
    }
    return worst;
}

}  // namespace raql
