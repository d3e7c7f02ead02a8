#include "raql/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <exception>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

#include "text_util.hpp"

namespace raql {

using nlohmann::json;
namespace fs = std::filesystem;

ConfigError::ConfigError(std::vector<std::string> issues)
    : std::runtime_error([&] {
          std::string msg = "invalid configuration:";
          for (const auto& i : issues) msg += "\n  " + i;
          return msg;
      }()),
      issues_(std::move(issues)) {}

namespace {

/// Collects validation issues while reading typed fields.
class Reader {
public:
    std::vector<std::string> issues;

    void fail(const std::string& path, const std::string& what) { issues.push_back(path + ": " + what); }

    bool object(const json& j, const std::string& path) {
        if (!j.is_object()) {
            fail(path, "must be an object");
            return false;
        }
        return true;
    }

    void known_keys(const json& j, const std::string& path, std::initializer_list<const char*> keys) {
        if (!j.is_object()) return;
        for (auto it = j.begin(); it != j.end(); ++it) {
            if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return it.key() == k; }))
                fail(join(path, it.key()), "unknown field");
        }
    }

    static std::string join(const std::string& path, const std::string& key) {
        return path.empty() ? key : path + "." + key;
    }

    void number(const json& j, const std::string& path, const char* key, double& out, bool required = false) {
        if (!j.contains(key)) {
            if (required) fail(join(path, key), "required");
            return;
        }
        const auto& v = j.at(key);
        if (!v.is_number()) return fail(join(path, key), "must be a number");
        out = v.get<double>();
    }

    template <typename U>
    void unsigned_int(const json& j, const std::string& path, const char* key, U& out, bool required = false) {
        if (!j.contains(key)) {
            if (required) fail(join(path, key), "required");
            return;
        }
        const auto& v = j.at(key);
        if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
            return fail(join(path, key), "must be a nonnegative integer");
        out = static_cast<U>(v.get<std::uint64_t>());
    }

    void boolean(const json& j, const std::string& path, const char* key, bool& out) {
        if (!j.contains(key)) return;
        if (!j.at(key).is_boolean()) return fail(join(path, key), "must be true or false");
        out = j.at(key).get<bool>();
    }

    void string(const json& j, const std::string& path, const char* key, std::string& out, bool required = false) {
        if (!j.contains(key)) {
            if (required) fail(join(path, key), "required");
            return;
        }
        if (!j.at(key).is_string()) return fail(join(path, key), "must be a string");
        out = j.at(key).get<std::string>();
    }

    void numbers(const json& j, const std::string& path, const char* key, std::vector<double>& out) {
        if (!j.contains(key)) return;
        const auto& v = j.at(key);
        if (!v.is_array()) return fail(join(path, key), "must be an array of numbers");
        out.clear();
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!v[i].is_number()) return fail(join(path, key) + "[" + std::to_string(i) + "]", "must be a number");
            out.push_back(v[i].get<double>());
        }
    }

    void throw_if_any() const {
        if (!issues.empty()) throw ConfigError(issues);
    }
};

json parse_json(const std::string& text, const std::string& what) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError({what + ": malformed JSON (" + std::string(e.what()) + ")"});
    }
}

std::string hash_of(const std::string& text) { return detail::hex64(detail::fnv1a(text)); }

void read_generator(Reader& r, const json& j, const std::string& path, GeneratorSpec& g) {
    if (!r.object(j, path)) return;
    r.known_keys(j, path, {"states", "actions", "seed", "cost_mode", "discount", "noise_half_width"});
    r.unsigned_int(j, path, "states", g.states);
    r.unsigned_int(j, path, "actions", g.actions);
    r.unsigned_int(j, path, "seed", g.seed);
    std::string mode = to_string(g.cost_mode);
    r.string(j, path, "cost_mode", mode);
    try {
        g.cost_mode = cost_mode_from_string(mode);
    } catch (const std::exception&) {
        r.fail(path + ".cost_mode", "must be 'deterministic' or 'random'");
    }
    r.number(j, path, "discount", g.discount);
    r.number(j, path, "noise_half_width", g.noise_half_width);
    if (g.states < 1) r.fail(path + ".states", "must be >= 1");
    if (g.actions < 1) r.fail(path + ".actions", "must be >= 1");
    if (!(g.discount >= 0.0 && g.discount < 1.0)) r.fail(path + ".discount", "must lie in [0, 1)");
    if (!(g.noise_half_width >= 0.0)) r.fail(path + ".noise_half_width", "must be >= 0");
}

json generator_json(const GeneratorSpec& g) {
    return {{"states", g.states},
            {"actions", g.actions},
            {"seed", g.seed},
            {"cost_mode", to_string(g.cost_mode)},
            {"discount", g.discount},
            {"noise_half_width", g.noise_half_width}};
}

void read_measure(Reader& r, const json& j, MeasureSpec& m) {
    const std::string path = "measure";
    if (!r.object(j, path)) return;
    r.known_keys(j, path, {"family", "alpha", "iota", "utility", "lambda", "alphas", "weights", "support"});
    r.string(j, path, "family", m.family, true);
    r.number(j, path, "alpha", m.alpha);
    r.number(j, path, "iota", m.iota);
    r.string(j, path, "utility", m.utility);
    r.number(j, path, "lambda", m.lambda);
    r.numbers(j, path, "alphas", m.alphas);
    if (j.contains("weights")) {
        const auto& w = j.at("weights");
        if (w.is_string() && w.get<std::string>() == "simplex") {
            m.weights_lower.reset();
            m.weights_upper.reset();
        } else if (w.is_object()) {
            r.known_keys(w, "measure.weights", {"lower", "upper"});
            std::vector<double> lo, hi;
            r.numbers(w, "measure.weights", "lower", lo);
            r.numbers(w, "measure.weights", "upper", hi);
            m.weights_lower = lo;
            m.weights_upper = hi;
        } else {
            r.fail("measure.weights", "must be \"simplex\" or an object with lower/upper bounds");
        }
    }
    if (j.contains("support")) {
        std::vector<double> s;
        r.numbers(j, path, "support", s);
        if (s.size() != 2)
            r.fail("measure.support", "must be [lo, hi]");
        else
            m.support = std::make_pair(s[0], s[1]);
    }
    static const std::set<std::string> families{"cvar", "oce", "kusuoka", "abs_semidev"};
    if (!families.count(m.family)) {
        r.fail("measure.family", "must be one of cvar, oce, kusuoka, abs_semidev");
        return;
    }
    try {
        (void)m.build();
    } catch (const std::exception& e) {
        r.fail("measure", e.what());
    }
}

json measure_json(const MeasureSpec& m) {
    json j{{"family", m.family}};
    if (m.family == "cvar") j["alpha"] = m.alpha;
    if (m.family == "abs_semidev") j["iota"] = m.iota;
    if (m.family == "oce") {
        j["utility"] = m.utility;
        if (m.utility == "entropic")
            j["lambda"] = m.lambda;
        else
            j["alpha"] = m.alpha;
    }
    if (m.family == "kusuoka") {
        j["alphas"] = m.alphas;
        if (m.weights_lower)
            j["weights"] = {{"lower", *m.weights_lower}, {"upper", *m.weights_upper}};
        else
            j["weights"] = "simplex";
    }
    if (m.support) j["support"] = {m.support->first, m.support->second};
    return j;
}

void read_sasp(Reader& r, const json& j, SaspParams& p) {
    const std::string path = "raql.sasp";
    if (!r.object(j, path)) return;
    r.known_keys(j, path,
                 {"step_scale", "step_exponent", "window", "window_fraction", "scale_y", "scale_z", "moving_average"});
    r.number(j, path, "step_scale", p.step_scale);
    r.number(j, path, "step_exponent", p.step_exponent);
    std::string window = p.window.name();
    double fraction = p.window.fraction;
    r.string(j, path, "window", window);
    r.number(j, path, "window_fraction", fraction);
    try {
        p.window = WindowRule::from_string(window, fraction);
    } catch (const std::exception& e) {
        r.fail(path + ".window", e.what());
    }
    r.number(j, path, "scale_y", p.scale_y);
    r.number(j, path, "scale_z", p.scale_z);
    r.boolean(j, path, "moving_average", p.use_moving_average);
}

void read_raql(Reader& r, const json& j, RaqlParams& p) {
    const std::string path = "raql";
    if (!r.object(j, path)) return;
    r.known_keys(j, path,
                 {"outer_iters", "inner_iters", "learning_rate_k", "exploration_epsilon", "log_every", "sasp_clock",
                  "q_update", "clip_targets", "sasp"});
    r.unsigned_int(j, path, "outer_iters", p.outer_iters);
    r.unsigned_int(j, path, "inner_iters", p.inner_iters);
    r.number(j, path, "learning_rate_k", p.learning_rate_k);
    r.number(j, path, "exploration_epsilon", p.exploration_epsilon);
    r.unsigned_int(j, path, "log_every", p.log_every);
    std::string clock = to_string(p.sasp_clock), update = to_string(p.q_update);
    r.string(j, path, "sasp_clock", clock);
    r.string(j, path, "q_update", update);
    try {
        p.sasp_clock = sasp_clock_from_string(clock);
    } catch (const std::exception& e) {
        r.fail(path + ".sasp_clock", e.what());
    }
    try {
        p.q_update = q_update_from_string(update);
    } catch (const std::exception& e) {
        r.fail(path + ".q_update", e.what());
    }
    r.boolean(j, path, "clip_targets", p.clip_targets);
    if (j.contains("sasp")) read_sasp(r, j.at("sasp"), p.sasp);
}

json raql_json(const RaqlParams& p) {
    return {{"outer_iters", p.outer_iters},
            {"inner_iters", p.inner_iters},
            {"learning_rate_k", p.learning_rate_k},
            {"exploration_epsilon", p.exploration_epsilon},
            {"log_every", p.log_every},
            {"sasp_clock", to_string(p.sasp_clock)},
            {"q_update", to_string(p.q_update)},
            {"clip_targets", p.clip_targets},
            {"sasp",
             {{"step_scale", p.sasp.step_scale},
              {"step_exponent", p.sasp.step_exponent},
              {"window", p.sasp.window.name()},
              {"window_fraction", p.sasp.window.fraction},
              {"scale_y", p.sasp.scale_y},
              {"scale_z", p.sasp.scale_z},
              {"moving_average", p.sasp.use_moving_average}}}};
}

Algorithm algorithm_from_string(const std::string& name) {
    if (name == "raql") return Algorithm::raql;
    if (name == "risk_neutral_ql") return Algorithm::risk_neutral_ql;
    if (name == "dp_oracle") return Algorithm::dp_oracle;
    if (name == "sasp_ablation") return Algorithm::sasp_ablation;
    throw std::invalid_argument(name);
}

}  // namespace

std::string to_string(Algorithm a) {
    switch (a) {
        case Algorithm::raql:
            return "raql";
        case Algorithm::risk_neutral_ql:
            return "risk_neutral_ql";
        case Algorithm::dp_oracle:
            return "dp_oracle";
        case Algorithm::sasp_ablation:
            return "sasp_ablation";
    }
    return "raql";
}

SaddleRiskMeasure MeasureSpec::build() const {
    const double lo = support ? support->first : 0.0;
    const double hi = support ? support->second : 1.0;
    if (family == "cvar") return make_cvar(alpha, lo, hi);
    if (family == "abs_semidev") return make_abs_semidev(iota, lo, hi);
    if (family == "oce") {
        if (utility == "entropic") return make_oce(Utility::entropic(lambda), lo, hi);
        if (utility == "cvar") return make_oce(Utility::cvar_utility(alpha), lo, hi);
        throw std::invalid_argument("oce utility must be 'entropic' or 'cvar'");
    }
    if (family == "kusuoka") {
        FeasibleSet weights = weights_lower ? FeasibleSet::boxed_simplex(*weights_lower, *weights_upper)
                                            : FeasibleSet::simplex(alphas.size());
        return make_kusuoka(alphas, std::move(weights), lo, hi);
    }
    throw std::invalid_argument("unknown measure family '" + family + "'");
}

TabularMdp ExperimentConfig::load_mdp() const {
    if (mdp_file) return raql::load_mdp(*mdp_file);
    const auto& g = *mdp_generator;
    return generate_random_mdp(g.states, g.actions, g.seed, g.cost_mode, g.discount, g.noise_half_width);
}

std::string ExperimentConfig::config_hash() const {
    json j = json::parse(canonical_json);
    j.erase("seeds");
    j.erase("output_dir");
    return hash_of(j.dump());
}

ExperimentConfig parse_config(const std::string& json_text, const std::string& base_dir) {
    const json j = parse_json(json_text, "config");
    Reader r;
    ExperimentConfig cfg;
    if (!r.object(j, "(root)")) r.throw_if_any();
    r.known_keys(j, "", {"schema_version", "mdp", "measure", "raql", "algorithms", "seeds", "dp", "output_dir"});

    if (!j.contains("schema_version"))
        r.fail("schema_version", "required");
    else if (!j.at("schema_version").is_number_integer() || j.at("schema_version").get<int>() != kConfigSchemaVersion)
        r.fail("schema_version", "unsupported (expected " + std::to_string(kConfigSchemaVersion) + ")");

    if (!j.contains("mdp")) {
        r.fail("mdp", "required");
    } else if (r.object(j.at("mdp"), "mdp")) {
        const auto& m = j.at("mdp");
        r.known_keys(m, "mdp", {"file", "generate"});
        if (m.contains("file") == m.contains("generate")) {
            r.fail("mdp", "give exactly one of 'file' or 'generate'");
        } else if (m.contains("file")) {
            std::string file;
            r.string(m, "mdp", "file", file);
            fs::path p(file);
            if (p.is_relative()) p = fs::path(base_dir) / p;
            if (!fs::exists(p))
                r.fail("mdp.file", "no such file: " + p.string());
            cfg.mdp_file = p.string();
        } else {
            GeneratorSpec g;
            read_generator(r, m.at("generate"), "mdp.generate", g);
            cfg.mdp_generator = g;
        }
    }

    if (!j.contains("measure"))
        r.fail("measure", "required");
    else
        read_measure(r, j.at("measure"), cfg.measure);

    if (j.contains("raql")) read_raql(r, j.at("raql"), cfg.raql);
    try {
        cfg.raql.validate();
    } catch (const std::exception& e) {
        r.fail("raql", e.what());
    }

    if (!j.contains("algorithms")) {
        r.fail("algorithms", "required");
    } else if (!j.at("algorithms").is_array()) {
        r.fail("algorithms", "must be an array");
    } else {
        for (std::size_t i = 0; i < j.at("algorithms").size(); ++i) {
            const auto& a = j.at("algorithms")[i];
            const std::string path = "algorithms[" + std::to_string(i) + "]";
            try {
                if (!a.is_string()) throw std::invalid_argument("");
                const Algorithm alg = algorithm_from_string(a.get<std::string>());
                if (std::find(cfg.algorithms.begin(), cfg.algorithms.end(), alg) != cfg.algorithms.end())
                    r.fail(path, "duplicate algorithm");
                else
                    cfg.algorithms.push_back(alg);
            } catch (const std::invalid_argument&) {
                r.fail(path, "must be one of raql, risk_neutral_ql, dp_oracle, sasp_ablation");
            }
        }
        if (j.at("algorithms").empty()) r.fail("algorithms", "must select at least one algorithm");
    }

    if (!j.contains("seeds")) {
        r.fail("seeds", "required");
    } else if (!j.at("seeds").is_array()) {
        r.fail("seeds", "must be an array");
    } else {
        for (std::size_t i = 0; i < j.at("seeds").size(); ++i) {
            const auto& s = j.at("seeds")[i];
            if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<std::int64_t>() >= 0))
                r.fail("seeds[" + std::to_string(i) + "]", "must be a nonnegative integer");
            else
                cfg.seeds.push_back(s.get<std::uint64_t>());
        }
        if (j.at("seeds").empty()) r.fail("seeds", "must list at least one seed");
    }

    if (j.contains("dp") && r.object(j.at("dp"), "dp")) {
        r.known_keys(j.at("dp"), "dp", {"tol", "max_iters"});
        r.number(j.at("dp"), "dp", "tol", cfg.dp_tol);
        r.unsigned_int(j.at("dp"), "dp", "max_iters", cfg.dp_max_iters);
        if (!(cfg.dp_tol > 0.0)) r.fail("dp.tol", "must be > 0");
        if (cfg.dp_max_iters < 1) r.fail("dp.max_iters", "must be >= 1");
    }
    r.string(j, "", "output_dir", cfg.output_dir);
    r.throw_if_any();

    json canon{{"schema_version", kConfigSchemaVersion},
               {"measure", measure_json(cfg.measure)},
               {"raql", raql_json(cfg.raql)},
               {"seeds", cfg.seeds},
               {"dp", {{"tol", cfg.dp_tol}, {"max_iters", cfg.dp_max_iters}}},
               {"output_dir", cfg.output_dir}};
    json algs = json::array();
    for (auto a : cfg.algorithms) algs.push_back(to_string(a));
    canon["algorithms"] = algs;
    if (cfg.mdp_file)
        canon["mdp"] = {{"file", *cfg.mdp_file}};
    else
        canon["mdp"] = {{"generate", generator_json(*cfg.mdp_generator)}};
    cfg.canonical_json = canon.dump();
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::string text;
    try {
        text = detail::read_file(path);
    } catch (const std::exception& e) {
        throw ConfigError({"--config: " + std::string(e.what())});
    }
    const fs::path parent = fs::path(path).parent_path();
    return parse_config(text, parent.empty() ? "." : parent.string());
}

GeneratorSpec parse_generator_spec(const std::string& json_text) {
    const json j = parse_json(json_text, "generator spec");
    Reader r;
    GeneratorSpec g;
    read_generator(r, j, "(root)", g);
    r.throw_if_any();
    return g;
}

TheoryInput parse_theory_input(const std::string& json_text) {
    const json j = parse_json(json_text, "theory constants");
    Reader r;
    TheoryInput in;
    auto& c = in.constants;
    if (!r.object(j, "(root)")) r.throw_if_any();
    r.known_keys(j, "",
                 {"lipschitz_g", "saddle_stability", "hausdorff_mod_1", "hausdorff_mod_2", "kappa", "kappa0",
                  "psi_const", "confidence_delta", "target_eps", "exploration_eps", "c_max", "gamma", "step_scale",
                  "step_exponent", "learning_rate_k", "c_g_bound", "diam_y", "diam_z", "subgrad_bound", "window",
                  "window_fraction", "num_states", "num_actions", "t_grid"});
    r.number(j, "", "lipschitz_g", c.lipschitz_g);
    r.number(j, "", "saddle_stability", c.saddle_stability);
    r.number(j, "", "hausdorff_mod_1", c.hausdorff_mod_1);
    r.number(j, "", "hausdorff_mod_2", c.hausdorff_mod_2);
    r.number(j, "", "kappa", c.kappa);
    r.number(j, "", "kappa0", c.kappa0);
    r.number(j, "", "psi_const", c.psi_const);
    r.number(j, "", "confidence_delta", c.confidence_delta);
    r.number(j, "", "target_eps", c.target_eps);
    r.number(j, "", "exploration_eps", c.exploration_eps);
    r.number(j, "", "c_max", c.c_max);
    r.number(j, "", "gamma", c.gamma);
    r.number(j, "", "step_scale", c.step_scale);
    r.number(j, "", "step_exponent", c.step_exponent);
    r.number(j, "", "learning_rate_k", c.learning_rate_k);
    r.number(j, "", "c_g_bound", c.c_g_bound);
    r.number(j, "", "diam_y", c.diam_y);
    r.number(j, "", "diam_z", c.diam_z);
    r.number(j, "", "subgrad_bound", c.subgrad_bound);
    std::string window = "half";
    double fraction = 0.5;
    r.string(j, "", "window", window);
    r.number(j, "", "window_fraction", fraction);
    try {
        in.window = WindowRule::from_string(window, fraction);
    } catch (const std::exception& e) {
        r.fail("window", e.what());
    }
    r.unsigned_int(j, "", "num_states", in.num_states);
    r.unsigned_int(j, "", "num_actions", in.num_actions);
    if (j.contains("t_grid")) {
        std::vector<double> grid;
        r.numbers(j, "", "t_grid", grid);
        for (double t : grid) {
            if (!(t >= 1.0) || t != std::floor(t))
                r.fail("t_grid", "entries must be integers >= 1");
            else
                in.t_grid.push_back(static_cast<std::uint64_t>(t));
        }
    }
    r.throw_if_any();
    try {
        c.validate();
    } catch (const TheoryDomainError& e) {
        throw ConfigError({e.what()});
    }
    return in;
}

// ---------------------------------------------------------------------------
// Trace and summary files

std::string format_trace(const TraceFile& trace, bool timing, const std::string& started) {
    std::string out = "# raql-trace 1\n";
    out += "# algorithm=" + trace.algorithm + " seed=" + std::to_string(trace.seed) + "\n";
    out += "# config_hash=" + trace.config_hash + " mdp_hash=" + trace.mdp_hash + "\n";
    if (timing && !started.empty()) out += "# started=" + started + "\n";
    out += timing ? "outer_iter,relative_error,elapsed_ms\n" : "outer_iter,relative_error\n";
    for (const auto& p : trace.points) {
        out += std::to_string(p.outer_iter) + "," + detail::format_double(p.relative_error);
        if (timing) out += "," + detail::format_double(std::round(p.elapsed_ms * 1000.0) / 1000.0);
        out += "\n";
    }
    return out;
}

TraceFile parse_trace(const std::string& text) {
    TraceFile t;
    std::istringstream in(text);
    std::string line;
    bool header_seen = false, magic = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            if (line == "# raql-trace 1") magic = true;
            std::istringstream fields(line.substr(1));
            std::string kv;
            while (fields >> kv) {
                const auto eq = kv.find('=');
                if (eq == std::string::npos) continue;
                const std::string key = kv.substr(0, eq), value = kv.substr(eq + 1);
                if (key == "algorithm") t.algorithm = value;
                if (key == "seed") t.seed = detail::parse_u64(value);
                if (key == "config_hash") t.config_hash = value;
                if (key == "mdp_hash") t.mdp_hash = value;
            }
            continue;
        }
        if (!header_seen) {
            if (line.rfind("outer_iter,relative_error", 0) != 0) throw std::runtime_error("trace: missing column header");
            header_seen = true;
            continue;
        }
        std::istringstream cells(line);
        std::string a, b, c;
        std::getline(cells, a, ',');
        std::getline(cells, b, ',');
        std::getline(cells, c, ',');
        TracePoint p{detail::parse_u64(a), detail::parse_double(b)};
        if (!c.empty()) p.elapsed_ms = detail::parse_double(c);
        if (!t.points.empty() && p.outer_iter <= t.points.back().outer_iter)
            throw std::runtime_error("trace: iterations must increase");
        t.points.push_back(p);
    }
    if (!magic) throw std::runtime_error("trace: missing '# raql-trace 1' header");
    if (t.points.empty()) throw std::runtime_error("trace: no data rows");
    return t;
}

Summary load_summary(const std::string& json_text) {
    const json j = parse_json(json_text, "summary");
    Summary s;
    if (!j.is_object() || !j.contains("schema_version") || !j.at("schema_version").is_string())
        throw ConfigError({"summary.schema_version: required"});
    s.schema_version = j.at("schema_version").get<std::string>();
    const auto dot = s.schema_version.find('.');
    int major = -1;
    try {
        major = std::stoi(s.schema_version.substr(0, dot));
    } catch (const std::exception&) {
    }
    if (major != kSummarySchemaMajor)
        throw ConfigError({"summary.schema_version: unsupported major version '" + s.schema_version + "'"});
    s.config_hash = j.value("config_hash", "");
    s.mdp_hash = j.value("mdp_hash", "");
    for (const auto& r : j.value("runs", json::array())) {
        s.runs.push_back({r.at("algorithm").get<std::string>(), r.at("seed").get<std::uint64_t>(),
                          r.at("final_relative_error").get<double>(), r.at("wall_ms").get<double>(),
                          r.at("trace_file").get<std::string>()});
    }
    return s;
}

// ---------------------------------------------------------------------------
// Commands

namespace {

std::string now_utc() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

fs::path ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create output directory " + dir + ": " + ec.message());
    return fs::path(dir);
}

ExperimentConfig config_from(const CommandOptions& opts) {
    if (!opts.config_path) throw ConfigError({"--config: required"});
    ExperimentConfig cfg = load_config(*opts.config_path);
    if (opts.seed) {
        cfg.seeds = {*opts.seed};
        json canon = json::parse(cfg.canonical_json);
        canon["seeds"] = cfg.seeds;
        cfg.canonical_json = canon.dump();
    }
    if (opts.out) cfg.output_dir = *opts.out;
    return cfg;
}

double quantile(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto i = static_cast<std::size_t>(std::floor(pos));
    const double frac = pos - static_cast<double>(i);
    return i + 1 < v.size() ? v[i] + frac * (v[i + 1] - v[i]) : v[i];
}

}  // namespace

void cmd_gen_mdp(const GenMdpOptions& opts) {
    GeneratorSpec g;
    if (opts.common.config_path) {
        std::string text;
        try {
            text = detail::read_file(*opts.common.config_path);
        } catch (const std::exception& e) {
            throw ConfigError({"--config: " + std::string(e.what())});
        }
        g = parse_generator_spec(text);
    }
    if (opts.states) g.states = *opts.states;
    if (opts.actions) g.actions = *opts.actions;
    if (opts.discount) g.discount = *opts.discount;
    if (opts.common.seed) g.seed = *opts.common.seed;
    if (opts.cost_mode) {
        try {
            g.cost_mode = cost_mode_from_string(*opts.cost_mode);
        } catch (const std::exception&) {
            throw ConfigError({"--cost-mode: must be 'deterministic' or 'random'"});
        }
    }
    std::vector<std::string> issues;
    if (g.states < 1) issues.push_back("--states: must be >= 1");
    if (g.actions < 1) issues.push_back("--actions: must be >= 1");
    if (!(g.discount >= 0.0 && g.discount < 1.0)) issues.push_back("--discount: must lie in [0, 1)");
    if (!opts.common.out) issues.push_back("--out: required");
    if (!issues.empty()) throw ConfigError(issues);
    const TabularMdp mdp = generate_random_mdp(g.states, g.actions, g.seed, g.cost_mode, g.discount, g.noise_half_width);
    const fs::path out(*opts.common.out);
    if (out.has_parent_path()) ensure_dir(out.parent_path().string());
    save_mdp(mdp, out.string());
}

std::vector<RunResult> cmd_solve(const CommandOptions& opts) {
    const ExperimentConfig cfg = config_from(opts);
    const TabularMdp mdp = cfg.load_mdp();
    const SaddleRiskMeasure measure = cfg.measure.build();
    const std::string config_hash = cfg.config_hash();
    const std::string mdp_hash = hash_of(serialize_mdp(mdp));
    const fs::path dir = ensure_dir(cfg.output_dir);
    auto has = [&](Algorithm a) { return std::find(cfg.algorithms.begin(), cfg.algorithms.end(), a) != cfg.algorithms.end(); };

    json summary{{"schema_version", "1.0"},
                 {"config_hash", config_hash},
                 {"mdp_hash", mdp_hash},
                 {"parameters", json::parse(cfg.canonical_json)}};

    std::optional<QTable> risk_ref, neutral_ref;
    if (has(Algorithm::raql) || has(Algorithm::sasp_ablation) || has(Algorithm::dp_oracle)) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto vi = value_iteration(mdp, measure, cfg.dp_tol, cfg.dp_max_iters);
        const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        risk_ref = vi.q;
        save_qtable(vi.q, (dir / "qstar.txt").string());
        summary["dp_oracle"] = {{"iterations", vi.iterations}, {"residual", vi.residual}, {"tol", cfg.dp_tol},
                                {"wall_ms", ms}, {"qstar_file", "qstar.txt"}};
    }
    if (has(Algorithm::risk_neutral_ql)) {
        const auto vi = expected_value_iteration(mdp, cfg.dp_tol, cfg.dp_max_iters);
        neutral_ref = vi.q;
        save_qtable(vi.q, (dir / "qstar_risk_neutral.txt").string());
    }

    struct Job {
        Algorithm algorithm;
        std::uint64_t seed;
    };
    std::vector<Job> jobs;
    for (auto a : cfg.algorithms)
        if (a != Algorithm::dp_oracle)
            for (auto s : cfg.seeds) jobs.push_back({a, s});

    std::vector<RunResult> results(jobs.size());
    std::vector<std::exception_ptr> errors(jobs.size());
    const std::string started = now_utc();
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(jobs.size()); ++i) {
        const Job& job = jobs[static_cast<std::size_t>(i)];
        try {
            // Every algorithm draws from the same per-seed stream, which pairs the runs.
            Rng rng(derive_seed(job.seed, 0));
            const auto t0 = std::chrono::steady_clock::now();
            LearningResult lr;
            if (job.algorithm == Algorithm::risk_neutral_ql) {
                lr = risk_neutral_q_learning(mdp, cfg.raql, neutral_ref, rng);
            } else {
                RaqlParams p = cfg.raql;
                if (job.algorithm == Algorithm::sasp_ablation) p.sasp.use_moving_average = false;
                lr = run_raql(mdp, measure, p, risk_ref, rng);
            }
            const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
            RunResult& r = results[static_cast<std::size_t>(i)];
            r.algorithm = job.algorithm;
            r.seed = job.seed;
            r.trace = std::move(lr.trace);
            r.final_relative_error = r.trace.empty() ? 0.0 : r.trace.back().relative_error;
            r.wall_ms = ms;
            r.config_hash = config_hash;
            r.trace_file = "trace_" + to_string(job.algorithm) + "_seed" + std::to_string(job.seed) + ".csv";
        } catch (...) {
            errors[static_cast<std::size_t>(i)] = std::current_exception();
        }
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);

    json runs = json::array();
    for (const auto& r : results) {
        TraceFile tf{to_string(r.algorithm), r.seed, config_hash, mdp_hash, r.trace};
        detail::write_file((dir / r.trace_file).string(), format_trace(tf, opts.timing, started));
        runs.push_back({{"algorithm", to_string(r.algorithm)},
                        {"seed", r.seed},
                        {"final_relative_error", r.final_relative_error},
                        {"wall_ms", r.wall_ms},
                        {"trace_file", r.trace_file},
                        {"config_hash", r.config_hash}});
    }
    summary["runs"] = runs;
    detail::write_file((dir / "summary.json").string(), summary.dump(2) + "\n");
    return results;
}

std::vector<double> resample(const std::vector<TracePoint>& trace, const std::vector<std::uint64_t>& grid) {
    std::vector<double> out;
    out.reserve(grid.size());
    for (std::uint64_t g : grid) {
        const double x = static_cast<double>(g);
        if (x <= static_cast<double>(trace.front().outer_iter)) {
            out.push_back(trace.front().relative_error);
            continue;
        }
        if (x >= static_cast<double>(trace.back().outer_iter)) {
            out.push_back(trace.back().relative_error);
            continue;
        }
        const auto it = std::lower_bound(trace.begin(), trace.end(), g,
                                         [](const TracePoint& p, std::uint64_t v) { return p.outer_iter < v; });
        if (it->outer_iter == g) {
            out.push_back(it->relative_error);
            continue;
        }
        const auto& b = *it;
        const auto& a = *(it - 1);
        const double w = (x - static_cast<double>(a.outer_iter)) / static_cast<double>(b.outer_iter - a.outer_iter);
        out.push_back(a.relative_error + w * (b.relative_error - a.relative_error));
    }
    return out;
}

void cmd_compare(const std::vector<std::string>& trace_paths, const CommandOptions& opts) {
    if (trace_paths.empty()) throw ConfigError({"traces: at least one trace file is required"});
    std::vector<TraceFile> traces;
    for (const auto& path : trace_paths) {
        try {
            traces.push_back(parse_trace(detail::read_file(path)));
        } catch (const std::exception& e) {
            throw ConfigError({path + ": " + e.what()});
        }
    }
    std::vector<std::string> issues;
    for (std::size_t i = 1; i < traces.size(); ++i) {
        if (traces[i].config_hash != traces[0].config_hash)
            issues.push_back(trace_paths[i] + ": config hash " + traces[i].config_hash + " differs from " +
                             traces[0].config_hash + " in " + trace_paths[0] + " (incomparable runs)");
        if (traces[i].mdp_hash != traces[0].mdp_hash)
            issues.push_back(trace_paths[i] + ": MDP hash " + traces[i].mdp_hash + " differs from " +
                             traces[0].mdp_hash + " in " + trace_paths[0] + " (incomparable runs)");
    }
    if (!issues.empty()) throw ConfigError(issues);

    std::vector<std::uint64_t> grid;
    for (const auto& p : traces[0].points) grid.push_back(p.outer_iter);
    std::vector<std::vector<double>> values;
    for (const auto& t : traces) values.push_back(resample(t.points, grid));

    const fs::path dir = ensure_dir(opts.out.value_or("."));
    const std::string header = "# config_hash=" + traces[0].config_hash + " mdp_hash=" + traces[0].mdp_hash + "\n";

    std::string plot = header + "algorithm,seed,iteration,relative_error\n";
    for (std::size_t i = 0; i < traces.size(); ++i)
        for (std::size_t g = 0; g < grid.size(); ++g)
            plot += traces[i].algorithm + "," + std::to_string(traces[i].seed) + "," + std::to_string(grid[g]) + "," +
                    detail::format_double(values[i][g]) + "\n";
    detail::write_file((dir / "plot_data.csv").string(), plot);

    std::map<std::string, std::vector<std::size_t>> by_algo;
    for (std::size_t i = 0; i < traces.size(); ++i) by_algo[traces[i].algorithm].push_back(i);
    std::string bands = header + "algorithm,iteration,n,q25,median,q75\n";
    for (const auto& [algo, idx] : by_algo) {
        for (std::size_t g = 0; g < grid.size(); ++g) {
            std::vector<double> col;
            for (auto i : idx) col.push_back(values[i][g]);
            bands += algo + "," + std::to_string(grid[g]) + "," + std::to_string(col.size()) + "," +
                     detail::format_double(quantile(col, 0.25)) + "," + detail::format_double(quantile(col, 0.5)) +
                     "," + detail::format_double(quantile(col, 0.75)) + "\n";
        }
    }
    detail::write_file((dir / "bands.csv").string(), bands);

    std::string cmp = header + "iteration";
    std::map<std::string, int> seen;
    for (const auto& t : traces) {
        std::string label = t.algorithm + "_seed" + std::to_string(t.seed);
        const int n = seen[label]++;
        if (n > 0) label += "_" + std::to_string(n);
        cmp += "," + label;
    }
    cmp += ",difference\n";
    for (std::size_t g = 0; g < grid.size(); ++g) {
        cmp += std::to_string(grid[g]);
        for (const auto& v : values) cmp += "," + detail::format_double(v[g]);
        cmp += "," + detail::format_double(values.back()[g] - values.front()[g]) + "\n";
    }
    detail::write_file((dir / "comparison.csv").string(), cmp);
}

std::string cmd_theory(const CommandOptions& opts) {
    if (!opts.config_path) throw ConfigError({"--config: required (constants file)"});
    std::string text;
    try {
        text = detail::read_file(*opts.config_path);
    } catch (const std::exception& e) {
        throw ConfigError({"--config: " + std::string(e.what())});
    }
    const TheoryInput in = parse_theory_input(text);
    const TheoryConstants& c = in.constants;
    const TRange range = t_condition_range(c, in.window);

    std::vector<std::uint64_t> grid = in.t_grid;
    if (grid.empty()) {
        for (std::uint64_t t = 2; t <= (std::uint64_t{1} << 24); t *= 2) grid.push_back(t);
        if (range.feasible) {
            grid.push_back(range.t_min);
            if (range.t_max && *range.t_max <= (std::uint64_t{1} << 40)) grid.push_back(*range.t_max);
        }
    }
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

    std::ostringstream out;
    out << "# risk-aware Q-learning bound calculator\n";
    out << "# order estimates with unit constants; K_S, K_psi are user-supplied estimates\n";
    out << "# window=" << in.window.name() << " states=" << in.num_states << " actions=" << in.num_actions << "\n";
    if (range.feasible) {
        out << "# feasible T range: [" << range.t_min << ", "
            << (range.t_max ? std::to_string(*range.t_max) : std::string("unbounded")) << "]\n";
    } else {
        out << "#\n# INFEASIBLE CONSTANTS\n# " << range.diagnostic << "\n#\n";
    }
    const double regime = expectation_regime(c);
    if (!(regime > 0.0))
        out << "# expectation-rate regime violated: (2 - 2 gamma K_G) eps^2 - K_G (gamma - K_S K_G) - eps = "
            << detail::format_double(regime) << " <= 0\n";
    const bool linear = c.learning_rate_k >= 1.0;
    out << "T,tau_star,beta_T,n_poly,n_linear,n_expectation\n";
    SaspParams sp;
    sp.step_scale = c.step_scale;
    sp.step_exponent = c.step_exponent;
    sp.window = in.window;
    const GapBoundConstants gk{c.diam_y, c.diam_z, c.subgrad_bound};
    for (std::uint64_t t : grid) {
        out << t << "," << in.window.tau_star(t) << ",";
        double beta = 0.0;
        bool beta_ok = true;
        try {
            beta = beta_t(c, t, in.window);
            out << detail::format_double(beta);
        } catch (const TheoryDomainError&) {
            beta_ok = false;
            out << "domain_error";
        }
        const bool usable = beta_ok && beta > 0.0 && beta < 1.0;
        out << ",";
        if (linear || !usable)
            out << "n/a";
        else
            out << detail::format_double(sample_complexity_poly(c, beta, in.num_states, in.num_actions).total());
        out << ",";
        if (usable)
            out << detail::format_double(sample_complexity_linear(c, beta, in.num_states, in.num_actions));
        else
            out << "n/a";
        out << ",";
        if (t > 1 && regime > 0.0)
            out << detail::format_double(
                expectation_rate_n(c, gap_bound_f(t, gk, sp), in.num_states, in.num_actions, c.target_eps));
        else
            out << "n/a";
        out << "\n";
    }
    const std::string table = out.str();
    if (opts.out) {
        const fs::path dir = ensure_dir(*opts.out);
        detail::write_file((dir / "theory.csv").string(), table);
    }
    return table;
}

ValueIterationResult cmd_dp(const CommandOptions& opts) {
    const ExperimentConfig cfg = config_from(opts);
    const TabularMdp mdp = cfg.load_mdp();
    const SaddleRiskMeasure measure = cfg.measure.build();
    const auto vi = value_iteration(mdp, measure, cfg.dp_tol, cfg.dp_max_iters);
    const fs::path dir = ensure_dir(cfg.output_dir);
    save_qtable(vi.q, (dir / "qstar.txt").string());
    const std::string header = "# config_hash=" + cfg.config_hash() + " mdp_hash=" + hash_of(serialize_mdp(mdp)) + "\n";
    std::string res = header + "iteration,residual\n";
    for (std::size_t i = 0; i < vi.residuals.size(); ++i)
        res += std::to_string(i + 1) + "," + detail::format_double(vi.residuals[i]) + "\n";
    detail::write_file((dir / "dp_residuals.csv").string(), res);
    std::string pol = header + "state,action,value\n";
    for (std::size_t s = 0; s < mdp.num_states(); ++s)
        pol += std::to_string(s) + "," + std::to_string(vi.policy.action_per_state[s]) + "," +
               detail::format_double(vi.v[s]) + "\n";
    detail::write_file((dir / "dp_policy.csv").string(), pol);
    return vi;
}

}  // namespace raql
