// Acceptance run: one PASS/FAIL line per criterion.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "raql/dp.hpp"
#include "raql/experiment.hpp"
#include "raql/raql.hpp"
#include "raql/sasp.hpp"
#include "raql/theory.hpp"

using namespace raql;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool ok;
    std::string detail;
};

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c, d);
    return buf;
}

double relative_error(const QTable& q, const QTable& ref) {
    double num = 0, den = 0;
    for (std::size_t s = 0; s < ref.num_states(); ++s)
        for (std::size_t a = 0; a < ref.num_actions(); ++a) {
            num += (q(s, a) - ref(s, a)) * (q(s, a) - ref(s, a));
            den += ref(s, a) * ref(s, a);
        }
    return std::sqrt(num / den);
}

Outcome cvar_oracle() {
    Rng rng(1);
    double worst = 0, worst_dual = 0;
    for (int i = 0; i < 200; ++i) {
        const auto atoms = oracle::random_atoms(rng, 20);
        const double alpha = 0.95 * rng.uniform();
        const auto m = make_cvar(alpha, 0, 1);
        const FiniteDistribution d(atoms);
        const double v = exact_risk(m, d).value;
        worst = std::max(worst, std::abs(v - oracle::sorted_tail_cvar(atoms, alpha)));
        worst_dual = std::max(worst_dual, std::abs(v - maxmin_risk(m, d)));
    }
    return {worst <= 1e-8 && worst_dual <= 1e-8, fmt("max |exact - tail| = %.2e, max |minmax - maxmin| = %.2e", worst, worst_dual)};
}

Outcome axioms() {
    const std::vector<SaddleRiskMeasure> measures{
        make_cvar(0.3, 0, 2), make_cvar(0.0, 0, 2), make_oce(Utility::entropic(2.0), 0, 2),
        make_oce(Utility::cvar_utility(0.4), 0, 2), make_kusuoka({0.1, 0.5, 0.9}, FeasibleSet::simplex(3), 0, 2),
        make_kusuoka({0.2, 0.7}, FeasibleSet::boxed_simplex({0.2, 0.1}, {0.9, 0.8}), 0, 2), make_abs_semidev(0.5, 0, 2)};
    Rng rng(2);
    int failures = 0;
    double worst_a2 = 0;
    for (const auto& m : measures) {
        for (int i = 0; i < 500; ++i) {
            const auto atoms = oracle::random_atoms(rng, 10);
            const double base = exact_risk(m, FiniteDistribution(atoms)).value;
            auto up = atoms;
            for (auto& a : up) a.value = std::min(1.0, a.value + 0.3 * rng.uniform());
            if (exact_risk(m, FiniteDistribution(up)).value < base - 1e-9) ++failures;
            const double r = rng.uniform();
            auto shifted = atoms;
            for (auto& a : shifted) a.value += r;
            const double a2 = std::abs(exact_risk(m, FiniteDistribution(shifted)).value - base - r);
            worst_a2 = std::max(worst_a2, a2);
            if (a2 > 1e-8) ++failures;
            auto other = atoms;
            for (auto& a : other) a.value = rng.uniform();
            auto mid = atoms;
            for (std::size_t j = 0; j < mid.size(); ++j) mid[j].value = 0.5 * (atoms[j].value + other[j].value);
            if (exact_risk(m, FiniteDistribution(mid)).value >
                0.5 * (base + exact_risk(m, FiniteDistribution(other)).value) + 1e-8)
                ++failures;
        }
    }
    return {failures == 0, fmt("%.0f measures x 500 cases, %.0f violations, max A2 error %.2e",
                               static_cast<double>(measures.size()), failures, worst_a2)};
}

Outcome contraction() {
    const std::vector<SaddleRiskMeasure> measures{make_cvar(0.3, 0, 1), make_abs_semidev(0.5, 0, 1),
                                                  make_kusuoka({0.1, 0.5, 0.9}, FeasibleSet::simplex(3), 0, 1),
                                                  make_oce(Utility::entropic(1.0), 0, 1)};
    Rng rng(3);
    double worst_excess = -1;
    for (double gamma : {0.1, 0.5, 0.9}) {
        for (std::uint64_t i = 0; i < 20; ++i) {
            const auto mode = i % 4 == 3 ? CostMode::random : CostMode::deterministic;
            const auto mdp = generate_random_mdp(5, 3, 100 + i, mode, gamma);
            const double ratio = contraction_check(mdp, measures[i % measures.size()], 1000, rng);
            worst_excess = std::max(worst_excess, ratio - gamma);
        }
    }
    return {worst_excess <= 1e-9, fmt("max (ratio - gamma) = %.3g over 60 MDPs x 1000 pairs", worst_excess)};
}

Outcome sasp_bernoulli() {
    const auto m = make_cvar(0.5, 0, 1);
    const FiniteDistribution d({{0.0, 0.5}, {1.0, 0.5}});
    SaspParams p;
    int good = 0, gap_ok = 0;
    double worst_gap = 0, bound = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed);
        const auto r = run_sasp(m, d, p, 10000, rng, 10000);
        if (std::abs(r.value - 1.0) <= 0.05) ++good;
        const auto& last = r.trace.back();
        worst_gap = std::max(worst_gap, last.gap);
        bound = last.bound_f;
        if (last.gap < last.bound_f) ++gap_ok;
    }
    return {good >= 18 && gap_ok == 20,
            fmt("%.0f/20 seeds within 0.05; max gap %.3g < f(1e4) = %.3g", good, worst_gap, bound)};
}

Outcome experiment_one() {
    RaqlParams p;
    p.outer_iters = 10000;
    p.inner_iters = 100;
    p.learning_rate_k = 1.0;
    p.log_every = 10000;
    const auto m = make_cvar(0.1, 0, 1);
    int good = 0, neutral_good = 0;
    double worst = 0, worst_neutral = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto mdp = generate_random_mdp(10, 10, 1000 + seed, CostMode::deterministic, 0.1);
        const auto ref = value_iteration(mdp, m, 0.01).q;
        Rng rng(seed);
        const double e = run_raql(mdp, m, p, ref, rng).trace.back().relative_error;
        worst = std::max(worst, e);
        good += e <= 0.05;
        const auto classical = expected_value_iteration(mdp, 0.01).q;
        Rng rng2(derive_seed(seed, 1));
        const double en = risk_neutral_q_learning(mdp, p, classical, rng2).trace.back().relative_error;
        worst_neutral = std::max(worst_neutral, en);
        neutral_good += en <= 0.05;
    }
    return {good >= 9 && neutral_good == 10,
            fmt("RaQL %.0f/10 seeds <= 0.05 (max %.4f); risk-neutral QL %.0f/10 (max %.4f)", good, worst,
                neutral_good, worst_neutral)};
}

Outcome experiment_three() {
    RaqlParams p;
    p.outer_iters = 3000;
    p.inner_iters = 100;
    p.learning_rate_k = 1.0;
    p.log_every = 3000;
    const auto m = make_kusuoka({0.1, 0.5, 0.9}, FeasibleSet::simplex(3), 0, 1);
    std::vector<double> avg, raw;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto mdp = generate_random_mdp(10, 10, 2000 + seed, CostMode::deterministic, 0.1);
        const auto ref = value_iteration(mdp, m, 1e-6).q;
        Rng a(seed), b(seed);
        avg.push_back(run_raql(mdp, m, p, ref, a).trace.back().relative_error);
        auto q = p;
        q.sasp.use_moving_average = false;
        raw.push_back(run_raql(mdp, m, q, ref, b).trace.back().relative_error);
    }
    const double ma = median(avg), mr = median(raw);
    return {mr >= 1.5 * ma, fmt("median averaged %.4f vs non-averaged %.4f (factor %.2f)", ma, mr, mr / ma)};
}

Outcome tiny_instances() {
    RaqlParams p;
    p.outer_iters = 50000;
    p.inner_iters = 20;
    p.exploration_epsilon = 0.2;
    p.log_every = 50000;
    double worst = 0;
    for (const auto& m : {make_cvar(0.3, 0, 1), make_abs_semidev(0.5, 0, 1)}) {
        for (std::uint64_t i = 0; i < 10; ++i) {
            const auto mdp = generate_random_mdp(2, 2, 3000 + i, CostMode::deterministic, 0.5);
            const auto ref = value_iteration(mdp, m, 1e-12).q;
            Rng rng(i);
            const auto q = run_raql(mdp, m, p, std::nullopt, rng).q;
            for (std::size_t s = 0; s < 2; ++s)
                for (std::size_t a = 0; a < 2; ++a) worst = std::max(worst, std::abs(q(s, a) - ref(s, a)));
        }
    }
    return {worst <= 1e-2, fmt("max entry error %.4f over 20 runs", worst)};
}

Outcome random_cost() {
    const double gamma = 0.1;
    CostSpec cost{CostMode::random, {0.6}, {{0.5, {0.2}}, {0.5, {1.0}}}};
    const TabularMdp mdp(1, 1, {1.0}, cost, gamma);
    RaqlParams p;
    p.outer_iters = 20000;
    p.inner_iters = 10;
    p.log_every = 20000;
    Rng rng(8);
    const double q = run_raql(mdp, make_cvar(0.0, 0, 1), p, std::nullopt, rng).q(0, 0);
    const double target = 0.6 / (1 - gamma);
    return {std::abs(q - target) <= 1e-2, fmt("Q = %.5f, E[c]/(1-gamma) = %.5f", q, target)};
}

Outcome theory_sanity() {
    TheoryConstants c;
    c.lipschitz_g = 2.0;
    c.gamma = 0.1;
    c.saddle_stability = 0.0;
    const double beta = beta_from_saddle_term(c, 0.0);
    c.learning_rate_k = 0.8;
    auto first = [&](double eps) {
        c.target_eps = eps;
        return sample_complexity_poly(c, 0.5, 2, 2).first_term;
    };
    auto lead = [&](double e) {
        return std::pow(std::log(1.0 / (c.confidence_delta * e)) / (e * e), 1.0 / c.learning_rate_k);
    };
    const double ratio = first(0.05) / first(0.1);
    const double predicted = lead(0.05) / lead(0.1);
    const double dev = std::abs(ratio / predicted - 1.0);
    return {std::abs(beta - 0.9) <= 1e-9 && dev <= 0.1,
            fmt("beta = %.12f; first-term ratio %.3f vs predicted %.3f (%.1f%%)", beta, ratio, predicted, 100 * dev)};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string csv_body(const fs::path& p) {
    std::istringstream in(slurp(p));
    std::string line, out;
    while (std::getline(in, line))
        if (line.empty() || line[0] != '#') out += line + "\n";
    return out;
}

// Runs every command twice into separate directories and compares CSV bodies.
Outcome determinism() {
    const fs::path root = fs::temp_directory_path() / "raql_acceptance_determinism";
    fs::remove_all(root);
    fs::create_directories(root);
    {
        std::ofstream(root / "cfg.json") << R"({
  "schema_version": 1,
  "mdp": {"generate": {"states": 5, "actions": 3, "seed": 9, "discount": 0.3}},
  "measure": {"family": "kusuoka", "alphas": [0.1, 0.5, 0.9]},
  "raql": {"outer_iters": 300, "inner_iters": 20, "learning_rate_k": 0.8, "log_every": 30},
  "algorithms": ["raql", "sasp_ablation", "risk_neutral_ql"],
  "seeds": [1, 2, 3],
  "dp": {"tol": 1e-6}
})";
        std::ofstream(root / "theory.json") << R"({"saddle_stability": 0.1, "t_grid": [100, 1000, 10000]})";
    }
    for (const char* run : {"a", "b"}) {
        const fs::path dir = root / run;
        GenMdpOptions g;
        g.states = 6;
        g.actions = 4;
        g.common.seed = 5;
        g.common.out = (dir / "mdp.txt").string();
        fs::create_directories(dir);
        cmd_gen_mdp(g);
        CommandOptions o;
        o.config_path = (root / "cfg.json").string();
        o.out = (dir / "solve").string();
        cmd_solve(o);
        o.out = (dir / "dp").string();
        cmd_dp(o);
        std::vector<std::string> traces;
        for (const auto& e : fs::directory_iterator(dir / "solve"))
            if (e.path().filename().string().rfind("trace_", 0) == 0) traces.push_back(e.path().string());
        std::sort(traces.begin(), traces.end());
        CommandOptions c;
        c.out = (dir / "compare").string();
        cmd_compare(traces, c);
        CommandOptions t;
        t.config_path = (root / "theory.json").string();
        t.out = (dir / "theory").string();
        cmd_theory(t);
    }
    int files = 0, diffs = 0;
    for (const auto& e : fs::recursive_directory_iterator(root / "a")) {
        if (!e.is_regular_file()) continue;
        const auto rel = fs::relative(e.path(), root / "a");
        const auto other = root / "b" / rel;
        const auto ext = e.path().extension();
        if (ext != ".csv" && ext != ".txt") continue;  // summary.json records wall time
        const bool same = fs::exists(other) && (ext == ".csv" ? csv_body(e.path()) == csv_body(other)
                                                               : slurp(e.path()) == slurp(other));
        ++files;
        if (!same) {
            ++diffs;
            std::printf("  differs: %s\n", rel.string().c_str());
        }
    }
    fs::remove_all(root);
    return {files > 0 && diffs == 0, fmt("%.0f output files compared, %.0f differ", files, diffs)};
}

}  // namespace

int main() {
    struct Criterion {
        int id;
        const char* name;
        double limit_s;
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria{
        {1, "CVaR oracle and min-max/max-min agreement", 5, cvar_oracle},
        {2, "risk axioms", 30, axioms},
        {3, "Bellman contraction", 60, contraction},
        {4, "SASP on CVaR_0.5 of Bernoulli(0.5)", 60, sasp_bernoulli},
        {5, "CVaR Q-learning on 10x10 MDPs", 600, experiment_one},
        {6, "moving average vs none, Kusuoka", 300, experiment_three},
        {7, "2x2 MDPs against value iteration", 300, tiny_instances},
        {8, "random-cost single state", 30, random_cost},
        {9, "theory calculator", 1, theory_sanity},
        {10, "CLI determinism", 600, determinism},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o{false, ""};
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const bool ok = o.ok && secs < c.limit_s;
        failed += !ok;
        std::printf("%s %2d %s: %s [%.2f s, limit %.0f s]\n", ok ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), secs,
                    c.limit_s);
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
