#include <cstdio>
#include <iostream>

#include "CLI11.hpp"
#include "raql/experiment.hpp"

namespace {

void add_common(CLI::App* cmd, raql::CommandOptions& opts, bool needs_config) {
    auto* config = cmd->add_option("--config", opts.config_path, "JSON configuration file");
    if (needs_config) config->required();
    cmd->add_option("--seed", opts.seed, "override the seed list with a single seed");
    cmd->add_option("--out", opts.out, "output directory (or file for gen-mdp)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Risk-aware tabular Q-learning experiments"};
    app.require_subcommand(1);

    raql::GenMdpOptions gen;
    auto* gen_cmd = app.add_subcommand("gen-mdp", "generate a random MDP file");
    add_common(gen_cmd, gen.common, false);
    gen_cmd->add_option("--states", gen.states, "number of states");
    gen_cmd->add_option("--actions", gen.actions, "number of actions");
    gen_cmd->add_option("--cost-mode", gen.cost_mode, "deterministic | random");
    gen_cmd->add_option("--discount", gen.discount, "discount factor in [0, 1)");

    raql::CommandOptions solve;
    auto* solve_cmd = app.add_subcommand("solve", "run the configured algorithms over all seeds");
    add_common(solve_cmd, solve, true);
    solve_cmd->add_flag("--timing", solve.timing, "add wall-clock columns to traces");

    raql::CommandOptions compare;
    std::vector<std::string> traces;
    auto* compare_cmd = app.add_subcommand("compare", "merge trace files into plot data and bands");
    compare_cmd->add_option("--out", compare.out, "output directory");
    compare_cmd->add_option("traces", traces, "trace CSV files")->required();

    raql::CommandOptions theory;
    auto* theory_cmd = app.add_subcommand("theory", "tabulate the convergence-rate bounds");
    theory_cmd->add_option("--config", theory.config_path, "constants file (JSON)")->required();
    theory_cmd->add_option("--out", theory.out, "also write theory.csv into this directory");

    raql::CommandOptions dp;
    auto* dp_cmd = app.add_subcommand("dp", "solve the risk-aware Bellman equation only");
    add_common(dp_cmd, dp, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*gen_cmd) {
            raql::cmd_gen_mdp(gen);
        } else if (*solve_cmd) {
            for (const auto& r : raql::cmd_solve(solve))
                std::printf("%-16s seed=%-6llu final_relative_error=%.6g\n", raql::to_string(r.algorithm).c_str(),
                            static_cast<unsigned long long>(r.seed), r.final_relative_error);
        } else if (*compare_cmd) {
            raql::cmd_compare(traces, compare);
        } else if (*theory_cmd) {
            std::cout << raql::cmd_theory(theory);
        } else if (*dp_cmd) {
            const auto vi = raql::cmd_dp(dp);
            std::printf("converged in %zu iterations, residual %.3g\n", vi.iterations, vi.residual);
        }
    } catch (const raql::ConfigError& e) {
        std::cerr << e.what() << "\n";
        return 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
