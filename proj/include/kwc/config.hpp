#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "optimizer.hpp"

namespace kwc {

using json = nlohmann::ordered_json;

/// Space-time forcing as it appears in a config: a spatial profile times (1 + rate t).
struct ForcingSpec {
    bool zero = true;
    FunctionSpec profile{"constant", {{"value", 0.0}}};
    double rate = 0.0;
    bool operator==(const ForcingSpec&) const = default;
};

struct TargetSpec {
    /// initial: steady initial pair; uncontrolled: state under zero control;
    /// generated: state under the forcing pair below; profiles: steady profiles below.
    std::string mode = "initial";
    ForcingSpec u, v;
    FunctionSpec eta{"constant", {{"value", 1.0}}};
    FunctionSpec theta{"constant", {{"value", 0.0}}};
    bool operator==(const TargetSpec&) const = default;
};

struct ProblemConfig {
    double nu = 0.05, eps = 0.1, delta_star = 0.1;
    double M_eta = 1.0, M_theta = 1.0, M_u = 1.0, M_v = 1.0;
    FunctionSpec g{"linear", {{"slope", 1.0}, {"root", 1.0}}};
    FunctionSpec alpha{"quadratic", {{"curvature", 1.0}, {"clip", 10.0}}};
    FunctionSpec alpha0{"constant", {{"value", 1.0}}};
    FunctionSpec eta0{"constant", {{"value", 1.0}}};
    FunctionSpec theta0{"plateau", {{"amplitude", 1.0}, {"left", 0.3}, {"right", 0.7}, {"width", 0.05}}};
    TargetSpec target;
    /// Control used by solve-state, grad-check and residuals; starting point of optimize.
    ForcingSpec u, v;
    bool operator==(const ProblemConfig&) const = default;
};

struct GridConfig {
    int n_space = 100, n_time = 200;
    double t_final = 0.05;
    bool operator==(const GridConfig&) const = default;
};

struct SolverConfig {
    double eps_floor = 1e-8, inner_tol = 1e-10;
    int m_max = 100, max_halvings = 5;
    /// semi_implicit or minmove
    std::string scheme = "semi_implicit";
    /// Convexity shift of the minimizing-movement scheme; <= 0 selects L0 + 1.
    double minmove_L = 0.0;
    bool operator==(const SolverConfig&) const = default;
};

struct OptimizeConfig {
    double tol = 1e-6;
    int max_iter = 200;
    std::vector<double> eps_list{1e-1, 3e-2, 1e-2, 3e-3, 1e-3};
    double c1 = 1e-4;
    int max_halvings = 40;
    bool operator==(const OptimizeConfig&) const = default;
};

struct ChecksConfig {
    std::vector<double> grad_deltas{1e-4};
    double grad_threshold = 1e-3;
    /// gradient (normalized gradient) or random (seeded normal field)
    std::string grad_direction = "gradient";
    /// forward or central difference
    std::string grad_scheme = "central";
    int conjugacy_trials = 20;
    double conjugacy_threshold = 1e-10;
    /// heat: identity coefficients; state: linearization about the state under the configured control
    std::string linear_mode = "heat";
    FunctionSpec p0{"cosine", {{"offset", 0.0}, {"amplitude", 1.0}, {"mode", 1.0}}};
    FunctionSpec z0{"sine", {{"amplitude", 1.0}, {"mode", 1.0}}};
    bool operator==(const ChecksConfig&) const = default;
};

struct OutputConfig {
    std::string directory = "out";
    int snapshot_stride = 10;
    bool operator==(const OutputConfig&) const = default;
};

struct RunConfig {
    ProblemConfig problem;
    GridConfig grid;
    SolverConfig solver;
    OptimizeConfig optimize;
    ChecksConfig checks;
    OutputConfig output;
    std::uint64_t seed = 1;
    bool operator==(const RunConfig&) const = default;
};

// ---------------------------------------------------------------------------
// JSON <-> RunConfig
// ---------------------------------------------------------------------------

namespace detail {

inline void only_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [k, v] : j.items())
        if (!ok.count(k)) throw ConfigError(where + ": unknown key '" + k + "'");
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(where + "." + key + ": wrong type");
    }
}

inline FunctionSpec spec_from_json(const json& j, const std::string& where) {
    if (!j.is_object() || !j.contains("kind") || !j.at("kind").is_string())
        throw ConfigError(where + ": expected an object with a string 'kind'");
    FunctionSpec s;
    s.kind = j.at("kind").get<std::string>();
    for (const auto& [k, v] : j.items()) {
        if (k == "kind") continue;
        if (!v.is_number()) throw ConfigError(where + "." + k + ": constants must be numbers");
        s.constants[k] = v.get<double>();
    }
    return s;
}

inline json spec_to_json(const FunctionSpec& s) {
    json j;
    j["kind"] = s.kind;
    for (const auto& [k, v] : s.constants) j[k] = v;
    return j;
}

inline ForcingSpec forcing_from_json(const json& j, const std::string& where) {
    ForcingSpec f;
    if (j.is_null()) return f;
    only_keys(j, where, {"profile", "rate"});
    if (!j.contains("profile")) throw ConfigError(where + ": missing 'profile'");
    f.zero = false;
    f.profile = spec_from_json(j.at("profile"), where + ".profile");
    read(j, "rate", f.rate, where);
    return f;
}

inline json forcing_to_json(const ForcingSpec& f) {
    if (f.zero) return nullptr;
    return json{{"profile", spec_to_json(f.profile)}, {"rate", f.rate}};
}

} // namespace detail

inline RunConfig config_from_json(const json& j) {
    using namespace detail;
    RunConfig c;
    only_keys(j, "config", {"problem", "grid", "solver", "optimize", "checks", "output", "seed"});
    read(j, "seed", c.seed, "config");
    if (j.contains("problem")) {
        const json& p = j.at("problem");
        only_keys(p, "problem", {"nu", "eps", "delta_star", "M_eta", "M_theta", "M_u", "M_v", "g", "alpha", "alpha0", "eta0",
                                 "theta0", "target", "u", "v"});
        auto& q = c.problem;
        read(p, "nu", q.nu, "problem");
        read(p, "eps", q.eps, "problem");
        read(p, "delta_star", q.delta_star, "problem");
        read(p, "M_eta", q.M_eta, "problem");
        read(p, "M_theta", q.M_theta, "problem");
        read(p, "M_u", q.M_u, "problem");
        read(p, "M_v", q.M_v, "problem");
        if (p.contains("g")) q.g = spec_from_json(p.at("g"), "problem.g");
        if (p.contains("alpha")) q.alpha = spec_from_json(p.at("alpha"), "problem.alpha");
        if (p.contains("alpha0")) q.alpha0 = spec_from_json(p.at("alpha0"), "problem.alpha0");
        if (p.contains("eta0")) q.eta0 = spec_from_json(p.at("eta0"), "problem.eta0");
        if (p.contains("theta0")) q.theta0 = spec_from_json(p.at("theta0"), "problem.theta0");
        if (p.contains("u")) q.u = forcing_from_json(p.at("u"), "problem.u");
        if (p.contains("v")) q.v = forcing_from_json(p.at("v"), "problem.v");
        if (p.contains("target")) {
            const json& t = p.at("target");
            only_keys(t, "problem.target", {"mode", "u", "v", "eta", "theta"});
            read(t, "mode", q.target.mode, "problem.target");
            if (t.contains("u")) q.target.u = forcing_from_json(t.at("u"), "problem.target.u");
            if (t.contains("v")) q.target.v = forcing_from_json(t.at("v"), "problem.target.v");
            if (t.contains("eta")) q.target.eta = spec_from_json(t.at("eta"), "problem.target.eta");
            if (t.contains("theta")) q.target.theta = spec_from_json(t.at("theta"), "problem.target.theta");
        }
    }
    if (j.contains("grid")) {
        const json& g = j.at("grid");
        only_keys(g, "grid", {"n_space", "n_time", "t_final"});
        read(g, "n_space", c.grid.n_space, "grid");
        read(g, "n_time", c.grid.n_time, "grid");
        read(g, "t_final", c.grid.t_final, "grid");
    }
    if (j.contains("solver")) {
        const json& s = j.at("solver");
        only_keys(s, "solver", {"eps_floor", "inner_tol", "m_max", "max_halvings", "scheme", "minmove_L"});
        read(s, "eps_floor", c.solver.eps_floor, "solver");
        read(s, "inner_tol", c.solver.inner_tol, "solver");
        read(s, "m_max", c.solver.m_max, "solver");
        read(s, "max_halvings", c.solver.max_halvings, "solver");
        read(s, "scheme", c.solver.scheme, "solver");
        read(s, "minmove_L", c.solver.minmove_L, "solver");
    }
    if (j.contains("optimize")) {
        const json& o = j.at("optimize");
        only_keys(o, "optimize", {"tol", "max_iter", "eps_list", "c1", "max_halvings"});
        read(o, "tol", c.optimize.tol, "optimize");
        read(o, "max_iter", c.optimize.max_iter, "optimize");
        read(o, "eps_list", c.optimize.eps_list, "optimize");
        read(o, "c1", c.optimize.c1, "optimize");
        read(o, "max_halvings", c.optimize.max_halvings, "optimize");
    }
    if (j.contains("checks")) {
        const json& k = j.at("checks");
        only_keys(k, "checks", {"grad_deltas", "grad_threshold", "grad_direction", "grad_scheme", "conjugacy_trials",
                                "conjugacy_threshold", "linear_mode", "p0", "z0"});
        read(k, "grad_deltas", c.checks.grad_deltas, "checks");
        read(k, "grad_threshold", c.checks.grad_threshold, "checks");
        read(k, "grad_direction", c.checks.grad_direction, "checks");
        read(k, "grad_scheme", c.checks.grad_scheme, "checks");
        read(k, "conjugacy_trials", c.checks.conjugacy_trials, "checks");
        read(k, "conjugacy_threshold", c.checks.conjugacy_threshold, "checks");
        read(k, "linear_mode", c.checks.linear_mode, "checks");
        if (k.contains("p0")) c.checks.p0 = spec_from_json(k.at("p0"), "checks.p0");
        if (k.contains("z0")) c.checks.z0 = spec_from_json(k.at("z0"), "checks.z0");
    }
    if (j.contains("output")) {
        const json& o = j.at("output");
        only_keys(o, "output", {"directory", "snapshot_stride"});
        read(o, "directory", c.output.directory, "output");
        read(o, "snapshot_stride", c.output.snapshot_stride, "output");
    }
    return c;
}

/// Fully resolved config (every default written out).
inline json config_to_json(const RunConfig& c) {
    using namespace detail;
    const auto& q = c.problem;
    json target{{"mode", q.target.mode},
                {"u", forcing_to_json(q.target.u)},
                {"v", forcing_to_json(q.target.v)},
                {"eta", spec_to_json(q.target.eta)},
                {"theta", spec_to_json(q.target.theta)}};
    json problem{{"nu", q.nu},
                 {"eps", q.eps},
                 {"delta_star", q.delta_star},
                 {"M_eta", q.M_eta},
                 {"M_theta", q.M_theta},
                 {"M_u", q.M_u},
                 {"M_v", q.M_v},
                 {"g", spec_to_json(q.g)},
                 {"alpha", spec_to_json(q.alpha)},
                 {"alpha0", spec_to_json(q.alpha0)},
                 {"eta0", spec_to_json(q.eta0)},
                 {"theta0", spec_to_json(q.theta0)},
                 {"target", target},
                 {"u", forcing_to_json(q.u)},
                 {"v", forcing_to_json(q.v)}};
    return json{{"problem", problem},
                {"grid", {{"n_space", c.grid.n_space}, {"n_time", c.grid.n_time}, {"t_final", c.grid.t_final}}},
                {"solver",
                 {{"eps_floor", c.solver.eps_floor},
                  {"inner_tol", c.solver.inner_tol},
                  {"m_max", c.solver.m_max},
                  {"max_halvings", c.solver.max_halvings},
                  {"scheme", c.solver.scheme},
                  {"minmove_L", c.solver.minmove_L}}},
                {"optimize",
                 {{"tol", c.optimize.tol},
                  {"max_iter", c.optimize.max_iter},
                  {"eps_list", c.optimize.eps_list},
                  {"c1", c.optimize.c1},
                  {"max_halvings", c.optimize.max_halvings}}},
                {"checks",
                 {{"grad_deltas", c.checks.grad_deltas},
                  {"grad_threshold", c.checks.grad_threshold},
                  {"grad_direction", c.checks.grad_direction},
                  {"grad_scheme", c.checks.grad_scheme},
                  {"conjugacy_trials", c.checks.conjugacy_trials},
                  {"conjugacy_threshold", c.checks.conjugacy_threshold},
                  {"linear_mode", c.checks.linear_mode},
                  {"p0", spec_to_json(c.checks.p0)},
                  {"z0", spec_to_json(c.checks.z0)}}},
                {"output", {{"directory", c.output.directory}, {"snapshot_stride", c.output.snapshot_stride}}},
                {"seed", c.seed}};
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    json j;
    try {
        j = json::parse(in, nullptr, true, true);
    } catch (const json::parse_error& e) {
        throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
    }
    return config_from_json(j);
}

// ---------------------------------------------------------------------------
// Building solver inputs from a config.
// ---------------------------------------------------------------------------

inline Grid make_grid(const RunConfig& c) { return Grid(c.grid.n_space, c.grid.n_time, c.grid.t_final); }

inline SolverOptions make_solver_options(const RunConfig& c) {
    const auto& s = c.solver;
    if (!(s.eps_floor > 0.0)) throw ConfigError("solver.eps_floor must be > 0");
    if (!(s.inner_tol > 0.0)) throw ConfigError("solver.inner_tol must be > 0");
    if (s.m_max < 1) throw ConfigError("solver.m_max must be >= 1");
    if (s.max_halvings < 0) throw ConfigError("solver.max_halvings must be >= 0");
    if (s.scheme != "semi_implicit" && s.scheme != "minmove")
        throw ConfigError("solver.scheme must be 'semi_implicit' or 'minmove', got '" + s.scheme + "'");
    return {s.eps_floor, s.inner_tol, s.m_max, s.max_halvings};
}

inline SpaceTimeField sample_forcing(const Grid& g, const ForcingSpec& f) {
    if (f.zero) return SpaceTimeField(g);
    return sample(g, ForcingProfile(Profile(f.profile), f.rate));
}

inline ControlPair make_control(const Grid& g, const ForcingSpec& u, const ForcingSpec& v) {
    return {sample_forcing(g, u), sample_forcing(g, v)};
}

inline ControlPair make_control(const RunConfig& c, const Grid& g) { return make_control(g, c.problem.u, c.problem.v); }

/// Model parameters with targets resolved; validated before return.
inline ModelParams make_params(const RunConfig& c, const Grid& grid) {
    const auto& q = c.problem;
    ModelParams p;
    p.nu = q.nu;
    p.eps = q.eps;
    p.delta_star = q.delta_star;
    p.M_eta = q.M_eta;
    p.M_theta = q.M_theta;
    p.M_u = q.M_u;
    p.M_v = q.M_v;
    if (!(q.delta_star > 0.0 && q.delta_star < 1.0))
        throw ConfigError("problem.delta_star = " + std::to_string(q.delta_star) +
                          " outside the admissible range (0,1) required for the mobility lower bound");
    p.g = PerturbationG(q.g);
    p.alpha = Mobility(q.alpha, q.delta_star);
    p.alpha0 = TimeWeight(q.alpha0);
    p.eta0 = sample(grid, Profile(q.eta0));
    p.theta0 = sample(grid, Profile(q.theta0));
    p.target = steady_pair(grid, p.eta0, p.theta0);
    validate(p, grid);

    const auto& t = q.target;
    if (t.mode == "initial") {
    } else if (t.mode == "uncontrolled") {
        p.target = solve_state(p, grid, ControlPair(grid), make_solver_options(c)).state;
    } else if (t.mode == "generated") {
        p.target = solve_state(p, grid, make_control(grid, t.u, t.v), make_solver_options(c)).state;
    } else if (t.mode == "profiles") {
        p.target = steady_pair(grid, sample(grid, Profile(t.eta)), sample(grid, Profile(t.theta)));
    } else {
        throw ConfigError("problem.target.mode must be initial, uncontrolled, generated or profiles, got '" + t.mode + "'");
    }
    validate(p, grid);
    return p;
}

} // namespace kwc
