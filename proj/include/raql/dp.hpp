#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "raql/mdp.hpp"
#include "raql/risk.hpp"
#include "raql/rng.hpp"

namespace raql {

using ValueFunction = std::vector<double>;

enum class Execution { serial, parallel };

/// Distribution of the continuation for pair (s, a): v(s') in deterministic
/// mode, c + gamma v(s') in random-cost mode (weights p_k P(s'|s,a)).
FiniteDistribution continuation_distribution(const TabularMdp& mdp, std::size_t s, std::size_t a,
                                             std::span<const double> v);

/// Support interval covering [0, V_max] and every continuation value under v.
std::pair<double, double> backup_support(const TabularMdp& mdp, std::span<const double> v);

/// Q row for state s: c(s,a) + gamma rho(v(s')) (deterministic) or rho(c + gamma v(s')) (random).
/// `measure` must already cover backup_support(mdp, v).
void bellman_backup(const TabularMdp& mdp, const SaddleRiskMeasure& measure, std::span<const double> v,
                    std::size_t s, std::span<double> q_row);

struct BellmanResult {
    ValueFunction v;
    QTable q;
};

/// One application of the risk-aware Bellman operator. Both execution modes
/// give bit-identical results.
BellmanResult bellman_apply(const TabularMdp& mdp, const SaddleRiskMeasure& measure, const ValueFunction& v,
                            Execution exec = Execution::parallel);

struct ValueIterationResult {
    ValueFunction v;
    QTable q;
    Policy policy;
    std::size_t iterations = 0;
    double residual = 0.0;
    std::vector<double> residuals;  // sup-norm residual per sweep
};

class ValueIterationError : public std::runtime_error {
public:
    ValueIterationError(const std::string& msg, double residual) : std::runtime_error(msg), residual_(residual) {}
    double residual() const { return residual_; }

private:
    double residual_;
};

/// Iterates the operator from v = 0 until the sup-norm residual is <= tol.
ValueIterationResult value_iteration(const TabularMdp& mdp, const SaddleRiskMeasure& measure, double tol,
                                     std::size_t max_iters = 10000, Execution exec = Execution::parallel);

/// Classical expected-cost value iteration, coded separately as a reference.
ValueIterationResult expected_value_iteration(const TabularMdp& mdp, double tol, std::size_t max_iters = 10000);

/// Upper bound on the number of sweeps contraction guarantees for tol.
std::size_t value_iteration_bound(const TabularMdp& mdp, double tol);

/// Max over random pairs v1, v2 in [0, V_max]^S of |Tv1 - Tv2|_inf / |v1 - v2|_inf.
double contraction_check(const TabularMdp& mdp, const SaddleRiskMeasure& measure, std::size_t trials, Rng& rng);

/// Greedy policy of a Q table.
Policy greedy_policy(const QTable& q);

}  // namespace raql
