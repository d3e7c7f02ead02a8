#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "raql/mdp.hpp"
#include "raql/risk.hpp"
#include "raql/rng.hpp"
#include "raql/sasp.hpp"

namespace raql {

/// How each pair's SASP step counter evolves across epochs.
///   epoch: restarts at t = 1 from the carried iterate at the start of every epoch;
///   pair:  one counter over the pair's whole lifetime (the carried iterate and
///          its averaging window continue untouched).
enum class SaspClock { epoch, pair };

/// When the visited entry is written during an epoch.
///   every_step:     at every visit, so the last visit of the epoch wins;
///   first_visit:    only at the pair's first visit of the epoch;
///   once_per_epoch: after the epoch, from the mean of its targets.
enum class QUpdateMode { every_step, first_visit, once_per_epoch };

std::string to_string(SaspClock clock);
SaspClock sasp_clock_from_string(const std::string& name);
std::string to_string(QUpdateMode mode);
QUpdateMode q_update_from_string(const std::string& name);

struct RaqlParams {
    std::uint64_t outer_iters = 1000;  // N
    std::uint64_t inner_iters = 100;   // T
    double learning_rate_k = 1.0;
    double exploration_epsilon = 0.1;
    SaspParams sasp;
    SaspClock sasp_clock = SaspClock::pair;
    QUpdateMode q_update = QUpdateMode::first_visit;
    /// Clamp targets to [0, V_max]. SASP samples are always clamped to the support.
    bool clip_targets = true;
    std::uint64_t log_every = 10;

    void validate() const;
};

struct TracePoint {
    std::uint64_t outer_iter;
    double relative_error;
    double elapsed_ms = 0.0;  // wall clock since the run started
};

struct RaqlState {
    QTable q;
    std::vector<SaspState> saddle;           // per pair, index s * |A| + a
    std::vector<std::uint64_t> visit_counts;  // 1 + number of epochs that visited the pair
    std::vector<std::uint64_t> epoch_stamp;   // last epoch that touched the pair
    std::size_t current_state = 0;

    /// Q = 0, every saddle state at the center of `measure`'s domains.
    static RaqlState initial(const TabularMdp& mdp, const SaddleRiskMeasure& measure, const RaqlParams& params,
                             std::size_t start_state);
};

/// Target q-hat for one observed transition. v(s') = min_a q_prev(s', a).
/// Deterministic mode: c + gamma G(v(s'), y, z). Random mode: G(c + gamma v(s'), y, z).
double cost_to_go(const QTable& q_prev, std::size_t s_next, double cost, const SaddleRiskMeasure& measure,
                  const SaddlePoint& averaged, double gamma, CostMode mode);

struct InnerStepRecord {
    std::size_t state;
    std::size_t next_state;
    double target;
};

/// One inner step of epoch `epoch` (1-based) under the fixed action.
/// `measure` must have support [0, V_max].
InnerStepRecord raql_inner_step(RaqlState& state, const QTable& q_prev, const TabularMdp& mdp,
                                const SaddleRiskMeasure& measure, const RaqlParams& params, std::uint64_t epoch,
                                std::size_t action, Rng& rng);

struct LearningResult {
    QTable q;
    std::vector<TracePoint> trace;
    std::vector<std::uint64_t> visit_counts;
};

/// Risk-aware Q-learning. The measure's support is replaced by [0, V_max].
LearningResult run_raql(const TabularMdp& mdp, const SaddleRiskMeasure& measure, const RaqlParams& params,
                        const std::optional<QTable>& reference_q, Rng& rng);

/// Classical asynchronous Q-learning with N * T single-sample updates. The
/// trace is indexed by outer_iter = step / T so it shares RaQL's grid.
LearningResult risk_neutral_q_learning(const TabularMdp& mdp, const RaqlParams& params,
                                       const std::optional<QTable>& reference_q, Rng& rng);

}  // namespace raql
