#include "raql/raql.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

namespace raql {

std::string to_string(SaspClock clock) { return clock == SaspClock::epoch ? "epoch" : "pair"; }

SaspClock sasp_clock_from_string(const std::string& name) {
    if (name == "epoch") return SaspClock::epoch;
    if (name == "pair") return SaspClock::pair;
    throw std::invalid_argument("unknown sasp clock '" + name + "'");
}

std::string to_string(QUpdateMode mode) {
    switch (mode) {
        case QUpdateMode::every_step:
            return "every_step";
        case QUpdateMode::first_visit:
            return "first_visit";
        case QUpdateMode::once_per_epoch:
            return "once_per_epoch";
    }
    return "every_step";
}

QUpdateMode q_update_from_string(const std::string& name) {
    if (name == "every_step") return QUpdateMode::every_step;
    if (name == "first_visit") return QUpdateMode::first_visit;
    if (name == "once_per_epoch") return QUpdateMode::once_per_epoch;
    throw std::invalid_argument("unknown q update mode '" + name + "'");
}

void RaqlParams::validate() const {
    if (inner_iters < 1) throw std::invalid_argument("raql: inner_iters must be >= 1");
    if (!(learning_rate_k > 0.5 && learning_rate_k <= 1.0))
        throw std::invalid_argument("raql: learning_rate_k must lie in (1/2, 1]");
    if (!(exploration_epsilon > 0.0 && exploration_epsilon <= 1.0))
        throw std::invalid_argument("raql: exploration_epsilon must lie in (0, 1]");
    if (log_every < 1) throw std::invalid_argument("raql: log_every must be >= 1");
    sasp.validate();
}

RaqlState RaqlState::initial(const TabularMdp& mdp, const SaddleRiskMeasure& measure, const RaqlParams& params,
                             std::size_t start_state) {
    RaqlState st;
    st.q = QTable(mdp.num_states(), mdp.num_actions(), 0.0);
    st.saddle.assign(mdp.num_pairs(), SaspState::at_center(measure, params.sasp.window));
    st.visit_counts.assign(mdp.num_pairs(), 1);
    st.epoch_stamp.assign(mdp.num_pairs(), 0);
    st.current_state = start_state;
    return st;
}

double cost_to_go(const QTable& q_prev, std::size_t s_next, double cost, const SaddleRiskMeasure& measure,
                  const SaddlePoint& averaged, double gamma, CostMode mode) {
    const double v = q_prev.min_value(s_next);
    if (mode == CostMode::deterministic) return cost + gamma * measure.g(v, averaged.y, averaged.z);
    return measure.g(cost + gamma * v, averaged.y, averaged.z);
}

InnerStepRecord raql_inner_step(RaqlState& state, const QTable& q_prev, const TabularMdp& mdp,
                                const SaddleRiskMeasure& measure, const RaqlParams& params, std::uint64_t epoch,
                                std::size_t action, Rng& rng) {
    const std::size_t s = state.current_state;
    const std::size_t pair = s * mdp.num_actions() + action;
    SaspState& saddle = state.saddle[pair];
    const bool first_visit = state.epoch_stamp[pair] != epoch;
    if (first_visit) {
        state.epoch_stamp[pair] = epoch;
        if (params.sasp_clock == SaspClock::epoch) saddle.restart(saddle.current());
    }

    const Transition tr = mdp.sample(s, action, rng);
    const double gamma = mdp.discount();
    const double vmax = measure.support_hi();
    double target = cost_to_go(q_prev, tr.next_state, tr.cost, measure, saddle.averaged(), gamma, mdp.cost_mode());
    if (params.clip_targets) target = std::clamp(target, 0.0, vmax);

    if (params.q_update == QUpdateMode::every_step ||
        (params.q_update == QUpdateMode::first_visit && first_visit)) {
        const double theta = q_step_size(state.visit_counts[pair], params.learning_rate_k);
        state.q(s, action) = (1.0 - theta) * q_prev(s, action) + theta * target;
    }

    const double v_next = q_prev.min_value(tr.next_state);
    double sample = mdp.cost_mode() == CostMode::deterministic ? v_next : tr.cost + gamma * v_next;
    sample = std::clamp(sample, measure.support_lo(), vmax);
    sasp_step(saddle, measure, sample, params.sasp);

    state.current_state = tr.next_state;
    return {s, tr.next_state, target};
}

namespace {

using Clock = std::chrono::steady_clock;

void log_error(std::vector<TracePoint>& trace, std::uint64_t n, const QTable& q, const std::optional<QTable>& ref,
               Clock::time_point start) {
    if (!ref) return;
    const double ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
    trace.push_back({n, relative_error(q, *ref), ms});
}

}  // namespace

LearningResult run_raql(const TabularMdp& mdp, const SaddleRiskMeasure& measure, const RaqlParams& params,
                        const std::optional<QTable>& reference_q, Rng& rng) {
    params.validate();
    const auto start = Clock::now();
    const SaddleRiskMeasure local = measure.with_support(0.0, mdp.v_max());
    const std::size_t na = mdp.num_actions();
    RaqlState state = RaqlState::initial(mdp, local, params, rng.index(mdp.num_states()));
    LearningResult out;
    log_error(out.trace, 0, state.q, reference_q, start);

    std::vector<double> target_sum(mdp.num_pairs(), 0.0);
    std::vector<std::uint64_t> target_count(mdp.num_pairs(), 0);
    for (std::uint64_t n = 1; n <= params.outer_iters; ++n) {
        const QTable q_prev = state.q;
        const std::size_t action = epsilon_greedy_action(q_prev, state.current_state, params.exploration_epsilon, rng);
        for (std::uint64_t t = 1; t <= params.inner_iters; ++t) {
            const auto rec = raql_inner_step(state, q_prev, mdp, local, params, n, action, rng);
            if (params.q_update == QUpdateMode::once_per_epoch) {
                target_sum[rec.state * na + action] += rec.target;
                ++target_count[rec.state * na + action];
            }
        }
        for (std::size_t p = 0; p < mdp.num_pairs(); ++p) {
            if (state.epoch_stamp[p] != n) continue;
            if (params.q_update == QUpdateMode::once_per_epoch) {
                const double theta = q_step_size(state.visit_counts[p], params.learning_rate_k);
                const double mean = target_sum[p] / static_cast<double>(target_count[p]);
                state.q.values()[p] = (1.0 - theta) * q_prev.values()[p] + theta * mean;
                target_sum[p] = 0.0;
                target_count[p] = 0;
            }
            ++state.visit_counts[p];
        }
        if (n % params.log_every == 0 || n == params.outer_iters) log_error(out.trace, n, state.q, reference_q, start);
    }
    out.q = std::move(state.q);
    out.visit_counts = std::move(state.visit_counts);
    return out;
}

LearningResult risk_neutral_q_learning(const TabularMdp& mdp, const RaqlParams& params,
                                       const std::optional<QTable>& reference_q, Rng& rng) {
    params.validate();
    const auto start = Clock::now();
    const std::size_t na = mdp.num_actions();
    const double gamma = mdp.discount();
    QTable q(mdp.num_states(), na, 0.0);
    std::vector<std::uint64_t> counts(mdp.num_pairs(), 1);
    std::size_t s = rng.index(mdp.num_states());
    LearningResult out;
    log_error(out.trace, 0, q, reference_q, start);

    const std::uint64_t total = params.outer_iters * params.inner_iters;
    const std::uint64_t stride = params.inner_iters * params.log_every;
    for (std::uint64_t step = 1; step <= total; ++step) {
        const std::size_t a = epsilon_greedy_action(q, s, params.exploration_epsilon, rng);
        const Transition tr = mdp.sample(s, a, rng);
        const std::size_t pair = s * na + a;
        const double theta = q_step_size(counts[pair]++, params.learning_rate_k);
        q(s, a) = (1.0 - theta) * q(s, a) + theta * (tr.cost + gamma * q.min_value(tr.next_state));
        s = tr.next_state;
        if (step % stride == 0 || step == total) log_error(out.trace, step / params.inner_iters, q, reference_q, start);
    }
    out.q = std::move(q);
    out.visit_counts = std::move(counts);
    return out;
}

}  // namespace raql
