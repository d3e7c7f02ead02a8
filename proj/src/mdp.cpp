#include "raql/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "text_util.hpp"

namespace raql {

namespace {

constexpr double kSumTolerance = 1e-12;

std::vector<double> cumulative(std::span<const double> probs) {
    std::vector<double> out(probs.size());
    std::partial_sum(probs.begin(), probs.end(), out.begin());
    return out;
}

void check_cost_table(const std::vector<double>& table, std::size_t expected, const char* what) {
    if (table.size() != expected)
        throw std::invalid_argument(std::string(what) + ": expected " + std::to_string(expected) + " entries");
    for (double c : table) {
        if (!std::isfinite(c) || c < 0.0) throw std::invalid_argument(std::string(what) + ": costs must be finite and >= 0");
    }
}

}  // namespace

std::string to_string(CostMode mode) { return mode == CostMode::deterministic ? "deterministic" : "random"; }

CostMode cost_mode_from_string(const std::string& name) {
    if (name == "deterministic") return CostMode::deterministic;
    if (name == "random") return CostMode::random;
    throw std::invalid_argument("unknown cost mode '" + name + "'");
}

TabularMdp::TabularMdp(std::size_t num_states, std::size_t num_actions, std::vector<double> transition,
                       CostSpec cost, double discount)
    : num_states_(num_states),
      num_actions_(num_actions),
      transition_(std::move(transition)),
      cost_(std::move(cost)),
      discount_(discount) {
    if (num_states_ == 0 || num_actions_ == 0) throw std::invalid_argument("TabularMdp: sizes must be >= 1");
    if (!(discount_ >= 0.0 && discount_ < 1.0)) throw std::invalid_argument("TabularMdp: discount must lie in [0, 1)");
    if (transition_.size() != num_states_ * num_actions_ * num_states_)
        throw std::invalid_argument("TabularMdp: transition table has wrong size");

    for (std::size_t pair = 0; pair < num_pairs(); ++pair) {
        std::span<const double> r(transition_.data() + pair * num_states_, num_states_);
        double sum = 0.0;
        for (double p : r) {
            if (!(p >= 0.0) || !std::isfinite(p)) throw std::invalid_argument("TabularMdp: negative transition probability");
            sum += p;
        }
        if (std::abs(sum - 1.0) > kSumTolerance)
            throw std::invalid_argument("TabularMdp: transition row " + std::to_string(pair) + " does not sum to 1");
        auto c = cumulative(r);
        cdf_.insert(cdf_.end(), c.begin(), c.end());
    }

    if (cost_.mode == CostMode::deterministic) {
        check_cost_table(cost_.table, num_pairs(), "TabularMdp cost table");
        cost_.outcomes.clear();
        c_max_ = *std::max_element(cost_.table.begin(), cost_.table.end());
    } else {
        if (cost_.outcomes.empty()) throw std::invalid_argument("TabularMdp: random cost mode needs outcomes");
        double sum = 0.0;
        std::vector<double> probs;
        cost_.table.assign(num_pairs(), 0.0);
        for (const auto& o : cost_.outcomes) {
            if (!(o.prob >= 0.0)) throw std::invalid_argument("TabularMdp: negative outcome probability");
            check_cost_table(o.table, num_pairs(), "TabularMdp outcome table");
            sum += o.prob;
            probs.push_back(o.prob);
            for (std::size_t i = 0; i < num_pairs(); ++i) {
                cost_.table[i] += o.prob * o.table[i];
                c_max_ = std::max(c_max_, o.table[i]);
            }
        }
        if (std::abs(sum - 1.0) > kSumTolerance) throw std::invalid_argument("TabularMdp: outcome probabilities must sum to 1");
        noise_cdf_ = cumulative(probs);
    }
}

double TabularMdp::v_max() const {
    // An all-zero cost model still gets a nondegenerate value range.
    const double c = c_max_ > 0.0 ? c_max_ : 1.0;
    return c / (1.0 - discount_);
}

void TabularMdp::check_index(std::size_t s, std::size_t a) const {
    if (s >= num_states_) throw std::out_of_range("state index " + std::to_string(s) + " out of range");
    if (a >= num_actions_) throw std::out_of_range("action index " + std::to_string(a) + " out of range");
}

Transition TabularMdp::sample(std::size_t s, std::size_t a, Rng& rng) const {
    check_index(s, a);
    const std::size_t pair = s * num_actions_ + a;
    std::span<const double> cdf(cdf_.data() + pair * num_states_, num_states_);
    const std::size_t next = rng.from_cdf(cdf);
    double cost;
    if (cost_.mode == CostMode::deterministic) {
        cost = cost_.table[pair];
    } else {
        cost = cost_.outcomes[rng.from_cdf(noise_cdf_)].table[pair];
    }
    return {next, cost};
}

double QTable::min_value(std::size_t s) const {
    auto r = row(s);
    return *std::min_element(r.begin(), r.end());
}

std::size_t QTable::greedy_action(std::size_t s) const {
    auto r = row(s);
    // min_element returns the first minimum, i.e. the lowest index on ties.
    return static_cast<std::size_t>(std::min_element(r.begin(), r.end()) - r.begin());
}

double relative_error(const QTable& estimate, const QTable& reference) {
    if (estimate.values().size() != reference.values().size())
        throw std::invalid_argument("relative_error: table shapes differ");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < reference.values().size(); ++i) {
        const double d = estimate.values()[i] - reference.values()[i];
        num += d * d;
        den += reference.values()[i] * reference.values()[i];
    }
    if (den == 0.0) return std::sqrt(num);
    return std::sqrt(num / den);
}

std::size_t epsilon_greedy_action(const QTable& q, std::size_t s, double epsilon, Rng& rng) {
    if (s >= q.num_states()) throw std::out_of_range("epsilon_greedy_action: state out of range");
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw std::invalid_argument("epsilon_greedy_action: epsilon outside [0,1]");
    if (rng.uniform() < epsilon) return rng.index(q.num_actions());
    return q.greedy_action(s);
}

BehaviorPolicy make_epsilon_greedy(double epsilon) {
    if (!(epsilon > 0.0 && epsilon <= 1.0)) throw std::invalid_argument("epsilon-greedy: epsilon must lie in (0, 1]");
    return [epsilon](const QTable& q, std::size_t s, Rng& rng) { return epsilon_greedy_action(q, s, epsilon, rng); };
}

double q_step_size(std::uint64_t visit_count, double k) {
    if (!(k > 0.5 && k <= 1.0)) throw std::invalid_argument("q_step_size: learning rate k must lie in (1/2, 1]");
    if (visit_count == 0) throw std::invalid_argument("q_step_size: visit count starts at 1");
    if (k == 1.0) return 1.0 / static_cast<double>(visit_count);
    return std::pow(static_cast<double>(visit_count), -k);
}

TabularMdp generate_random_mdp(std::size_t num_states, std::size_t num_actions, std::uint64_t seed, CostMode mode,
                               double discount, double noise_half_width) {
    if (num_states == 0 || num_actions == 0) throw std::invalid_argument("generate_random_mdp: sizes must be >= 1");
    Rng rng(seed);
    const std::size_t pairs = num_states * num_actions;
    std::vector<double> transition(pairs * num_states);
    for (std::size_t pair = 0; pair < pairs; ++pair) {
        double* row = transition.data() + pair * num_states;
        double sum = 0.0;
        for (std::size_t j = 0; j < num_states; ++j) {
            row[j] = rng.exponential();
            sum += row[j];
        }
        for (std::size_t j = 0; j < num_states; ++j) row[j] /= sum;
        // Push the rounding residue onto the largest entry so the row sums to 1 exactly enough.
        double total = std::accumulate(row, row + num_states, 0.0);
        auto* big = std::max_element(row, row + num_states);
        *big += 1.0 - total;
    }
    CostSpec cost;
    cost.mode = mode;
    cost.table.resize(pairs);
    for (auto& c : cost.table) c = rng.uniform();
    if (mode == CostMode::random) {
        CostOutcome low{0.5, cost.table};
        CostOutcome high{0.5, cost.table};
        for (std::size_t i = 0; i < pairs; ++i) {
            low.table[i] = std::clamp(cost.table[i] - noise_half_width, 0.0, 1.0);
            high.table[i] = std::clamp(cost.table[i] + noise_half_width, 0.0, 1.0);
        }
        cost.outcomes = {std::move(low), std::move(high)};
    }
    return TabularMdp(num_states, num_actions, std::move(transition), std::move(cost), discount);
}

namespace {

void write_table(std::ostringstream& out, const std::vector<double>& table, std::size_t cols) {
    for (std::size_t i = 0; i < table.size(); ++i) {
        out << detail::format_double(table[i]);
        out << (((i + 1) % cols == 0) ? '\n' : ' ');
    }
}

std::vector<double> read_table(detail::Tokenizer& tok, std::size_t n) {
    std::vector<double> out(n);
    for (auto& v : out) v = tok.number();
    return out;
}

}  // namespace

std::string serialize_mdp(const TabularMdp& mdp) {
    std::ostringstream out;
    out << "raql-mdp 1\n";
    out << "states " << mdp.num_states() << '\n';
    out << "actions " << mdp.num_actions() << '\n';
    out << "discount " << detail::format_double(mdp.discount()) << '\n';
    out << "cost_mode " << to_string(mdp.cost_mode()) << '\n';
    out << "transition\n";
    write_table(out, mdp.transition_table(), mdp.num_states());
    if (mdp.cost_mode() == CostMode::deterministic) {
        out << "cost\n";
        write_table(out, mdp.cost().table, mdp.num_actions());
    } else {
        out << "outcomes " << mdp.cost().outcomes.size() << '\n';
        for (const auto& o : mdp.cost().outcomes) {
            out << "outcome " << detail::format_double(o.prob) << '\n';
            write_table(out, o.table, mdp.num_actions());
        }
    }
    return out.str();
}

TabularMdp parse_mdp(const std::string& text) {
    detail::Tokenizer tok(text);
    tok.expect("raql-mdp");
    const auto version = tok.integer();
    if (version != 1) throw std::runtime_error("unsupported MDP file version " + std::to_string(version));
    tok.expect("states");
    const std::size_t ns = tok.integer();
    tok.expect("actions");
    const std::size_t na = tok.integer();
    tok.expect("discount");
    const double gamma = tok.number();
    tok.expect("cost_mode");
    CostSpec cost;
    cost.mode = cost_mode_from_string(std::string(tok.next()));
    tok.expect("transition");
    auto transition = read_table(tok, ns * na * ns);
    if (cost.mode == CostMode::deterministic) {
        tok.expect("cost");
        cost.table = read_table(tok, ns * na);
    } else {
        tok.expect("outcomes");
        const std::size_t k = tok.integer();
        for (std::size_t i = 0; i < k; ++i) {
            tok.expect("outcome");
            CostOutcome o;
            o.prob = tok.number();
            o.table = read_table(tok, ns * na);
            cost.outcomes.push_back(std::move(o));
        }
    }
    if (!tok.done()) throw std::runtime_error("trailing content in MDP file");
    return TabularMdp(ns, na, std::move(transition), std::move(cost), gamma);
}

void save_mdp(const TabularMdp& mdp, const std::string& path) { detail::write_file(path, serialize_mdp(mdp)); }

TabularMdp load_mdp(const std::string& path) { return parse_mdp(detail::read_file(path)); }

std::string serialize_qtable(const QTable& q) {
    std::ostringstream out;
    out << "raql-qtable 1\n";
    out << "states " << q.num_states() << '\n';
    out << "actions " << q.num_actions() << '\n';
    write_table(out, q.values(), q.num_actions());
    return out.str();
}

QTable parse_qtable(const std::string& text) {
    detail::Tokenizer tok(text);
    tok.expect("raql-qtable");
    const auto version = tok.integer();
    if (version != 1) throw std::runtime_error("unsupported Q-table file version " + std::to_string(version));
    tok.expect("states");
    const std::size_t ns = tok.integer();
    tok.expect("actions");
    const std::size_t na = tok.integer();
    QTable q(ns, na);
    q.values() = read_table(tok, ns * na);
    if (!tok.done()) throw std::runtime_error("trailing content in Q-table file");
    return q;
}

void save_qtable(const QTable& q, const std::string& path) { detail::write_file(path, serialize_qtable(q)); }

QTable load_qtable(const std::string& path) { return parse_qtable(detail::read_file(path)); }

}  // namespace raql
