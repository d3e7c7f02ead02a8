#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "raql/dp.hpp"
#include "raql/mdp.hpp"
#include "raql/raql.hpp"
#include "raql/risk.hpp"
#include "raql/theory.hpp"

namespace raql {

/// Validation failure; each issue starts with the offending field path.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(std::vector<std::string> issues);
    const std::vector<std::string>& issues() const { return issues_; }

private:
    std::vector<std::string> issues_;
};

struct GeneratorSpec {
    std::size_t states = 10;
    std::size_t actions = 10;
    std::uint64_t seed = 42;
    CostMode cost_mode = CostMode::deterministic;
    double discount = 0.1;
    double noise_half_width = 0.2;
};

/// Risk measure description: family plus parameters.
struct MeasureSpec {
    std::string family = "cvar";
    double alpha = 0.1;
    double iota = 0.5;
    std::string utility = "entropic";  // oce: entropic | cvar
    double lambda = 1.0;
    std::vector<double> alphas;
    std::optional<std::vector<double>> weights_lower;
    std::optional<std::vector<double>> weights_upper;
    std::optional<std::pair<double, double>> support;

    SaddleRiskMeasure build() const;
};

enum class Algorithm { raql, risk_neutral_ql, dp_oracle, sasp_ablation };
std::string to_string(Algorithm a);

struct ExperimentConfig {
    std::optional<std::string> mdp_file;
    std::optional<GeneratorSpec> mdp_generator;
    MeasureSpec measure;
    RaqlParams raql;
    std::vector<Algorithm> algorithms;
    std::vector<std::uint64_t> seeds;
    double dp_tol = 0.01;
    std::size_t dp_max_iters = 10000;
    std::string output_dir = "out";
    std::string canonical_json;  // normalized form, used for hashing

    TabularMdp load_mdp() const;
    /// Hash over everything except seeds and the output directory, so runs
    /// that differ only in seed remain comparable.
    std::string config_hash() const;
};

inline constexpr int kConfigSchemaVersion = 1;
inline constexpr int kSummarySchemaMajor = 1;

/// Parses and validates a JSON config; the file's directory resolves relative MDP paths.
ExperimentConfig parse_config(const std::string& json_text, const std::string& base_dir = ".");
ExperimentConfig load_config(const std::string& path);

GeneratorSpec parse_generator_spec(const std::string& json_text);

/// Constants file for the theory command.
struct TheoryInput {
    TheoryConstants constants;
    WindowRule window = WindowRule::half();
    std::size_t num_states = 10;
    std::size_t num_actions = 10;
    std::vector<std::uint64_t> t_grid;  // empty: powers of two up to 2^24
};
TheoryInput parse_theory_input(const std::string& json_text);

struct RunResult {
    Algorithm algorithm;
    std::uint64_t seed;
    double final_relative_error;
    std::vector<TracePoint> trace;
    double wall_ms;
    std::string config_hash;
    std::string trace_file;
};

/// Trace file: '#' header lines, then outer_iter,relative_error rows. With
/// timing on, an elapsed_ms column and a start timestamp are added.
struct TraceFile {
    std::string algorithm;
    std::uint64_t seed = 0;
    std::string config_hash;
    std::string mdp_hash;
    std::vector<TracePoint> points;
};
std::string format_trace(const TraceFile& trace, bool timing = false, const std::string& started = "");
TraceFile parse_trace(const std::string& text);

struct SummaryRun {
    std::string algorithm;
    std::uint64_t seed;
    double final_relative_error;
    double wall_ms;
    std::string trace_file;
};
struct Summary {
    std::string schema_version;
    std::string config_hash;
    std::string mdp_hash;
    std::vector<SummaryRun> runs;
};
/// Rejects summaries whose schema major version differs from kSummarySchemaMajor.
Summary load_summary(const std::string& json_text);

struct CommandOptions {
    std::optional<std::string> config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    bool timing = false;
};

/// Each command returns normally on success, throws ConfigError for invalid
/// input and std::runtime_error for failures during the run.
struct GenMdpOptions {
    CommandOptions common;
    std::optional<std::size_t> states;
    std::optional<std::size_t> actions;
    std::optional<std::string> cost_mode;
    std::optional<double> discount;
};
void cmd_gen_mdp(const GenMdpOptions& opts);
std::vector<RunResult> cmd_solve(const CommandOptions& opts);
void cmd_compare(const std::vector<std::string>& trace_paths, const CommandOptions& opts);
std::string cmd_theory(const CommandOptions& opts);
ValueIterationResult cmd_dp(const CommandOptions& opts);

/// Linear interpolation of a trace onto a grid, clamped at both ends.
std::vector<double> resample(const std::vector<TracePoint>& trace, const std::vector<std::uint64_t>& grid);

}  // namespace raql
