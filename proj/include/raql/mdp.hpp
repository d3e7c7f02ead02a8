#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "raql/rng.hpp"

namespace raql {

enum class CostMode { deterministic, random };

std::string to_string(CostMode mode);
CostMode cost_mode_from_string(const std::string& name);

/// One noise outcome of a random cost: a full realized-cost table and its probability.
struct CostOutcome {
    double prob = 0.0;
    std::vector<double> table;  // indexed s * num_actions + a

    bool operator==(const CostOutcome&) const = default;
};

/// Cost model. In deterministic mode only `table` is used; in random mode the
/// realized cost is drawn from `outcomes` and `table` holds the expectation.
struct CostSpec {
    CostMode mode = CostMode::deterministic;
    std::vector<double> table;
    std::vector<CostOutcome> outcomes;

    bool operator==(const CostSpec&) const = default;
};

struct Transition {
    std::size_t next_state;
    double cost;
};

/// Finite MDP with a dense transition kernel P(s'|s,a) and bounded costs.
///
/// Immutable after construction; all invariants (row sums, cost bounds,
/// discount range) are validated by the constructor.
class TabularMdp {
public:
    TabularMdp(std::size_t num_states, std::size_t num_actions, std::vector<double> transition,
               CostSpec cost, double discount);

    std::size_t num_states() const { return num_states_; }
    std::size_t num_actions() const { return num_actions_; }
    std::size_t num_pairs() const { return num_states_ * num_actions_; }
    double discount() const { return discount_; }
    const CostSpec& cost() const { return cost_; }
    CostMode cost_mode() const { return cost_.mode; }

    double transition(std::size_t s, std::size_t a, std::size_t next) const {
        return transition_[(s * num_actions_ + a) * num_states_ + next];
    }
    /// Row P(.|s,a).
    std::span<const double> row(std::size_t s, std::size_t a) const {
        return {transition_.data() + (s * num_actions_ + a) * num_states_, num_states_};
    }
    const std::vector<double>& transition_table() const { return transition_; }

    /// Expected immediate cost (equals the table entry in deterministic mode).
    double expected_cost(std::size_t s, std::size_t a) const { return cost_.table[s * num_actions_ + a]; }

    /// Largest realizable cost C_max.
    double c_max() const { return c_max_; }
    /// Bound on any discounted value, C_max / (1 - gamma).
    double v_max() const;

    /// Draws s' ~ P(.|s,a) and a cost realization.
    Transition sample(std::size_t s, std::size_t a, Rng& rng) const;

    bool operator==(const TabularMdp&) const = default;

private:
    void check_index(std::size_t s, std::size_t a) const;

    std::size_t num_states_;
    std::size_t num_actions_;
    std::vector<double> transition_;
    CostSpec cost_;
    double discount_;
    double c_max_ = 0.0;
    std::vector<double> cdf_;        // cumulative transition rows
    std::vector<double> noise_cdf_;  // cumulative outcome probabilities
};

/// Q-values per (state, action), row-major by state.
class QTable {
public:
    QTable() = default;
    QTable(std::size_t num_states, std::size_t num_actions, double init = 0.0)
        : num_states_(num_states), num_actions_(num_actions), values_(num_states * num_actions, init) {}

    std::size_t num_states() const { return num_states_; }
    std::size_t num_actions() const { return num_actions_; }

    double& operator()(std::size_t s, std::size_t a) { return values_[s * num_actions_ + a]; }
    double operator()(std::size_t s, std::size_t a) const { return values_[s * num_actions_ + a]; }

    std::span<const double> row(std::size_t s) const { return {values_.data() + s * num_actions_, num_actions_}; }
    std::vector<double>& values() { return values_; }
    const std::vector<double>& values() const { return values_; }

    /// min_a Q(s, a).
    double min_value(std::size_t s) const;
    /// argmin_a Q(s, a), ties to the lowest action index.
    std::size_t greedy_action(std::size_t s) const;

    bool operator==(const QTable&) const = default;

private:
    std::size_t num_states_ = 0;
    std::size_t num_actions_ = 0;
    std::vector<double> values_;
};

/// Stationary deterministic policy.
struct Policy {
    std::vector<std::size_t> action_per_state;
};

/// ||a - b||_2 / ||b||_2.
double relative_error(const QTable& estimate, const QTable& reference);

/// Behavior policy used to pick the epoch action; pluggable, epsilon-greedy by default.
using BehaviorPolicy = std::function<std::size_t(const QTable&, std::size_t state, Rng&)>;

std::size_t epsilon_greedy_action(const QTable& q, std::size_t s, double epsilon, Rng& rng);
BehaviorPolicy make_epsilon_greedy(double epsilon);

/// Q-learning step size 1 / visit_count^k; visit_count is one plus prior visits.
double q_step_size(std::uint64_t visit_count, double k);

/// Random MDP with uniform-Dirichlet transition rows and uniform [0,1] costs.
/// Random cost mode adds a two-point +/- noise_half_width perturbation, clipped to [0,1].
TabularMdp generate_random_mdp(std::size_t num_states, std::size_t num_actions, std::uint64_t seed,
                               CostMode mode, double discount = 0.1, double noise_half_width = 0.2);

/// Versioned text serialization; doubles are written in shortest round-trip form.
std::string serialize_mdp(const TabularMdp& mdp);
TabularMdp parse_mdp(const std::string& text);
void save_mdp(const TabularMdp& mdp, const std::string& path);
TabularMdp load_mdp(const std::string& path);

std::string serialize_qtable(const QTable& q);
QTable parse_qtable(const std::string& text);
void save_qtable(const QTable& q, const std::string& path);
QTable load_qtable(const std::string& path);

}  // namespace raql
