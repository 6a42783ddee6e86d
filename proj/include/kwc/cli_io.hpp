#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "config.hpp"

namespace kwc::cli {

enum ExitCode : int { kOk = 0, kValidation = 2, kSolverFailure = 3, kThreshold = 4 };

inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, const std::string& header) : out_(path) {
        if (!out_) throw NumericalError("cannot write " + path.string());
        out_ << header << '\n';
    }
    template <class... T>
    void row(const T&... v) {
        bool first = true;
        ((out_ << (first ? "" : ",") << cell(v), first = false), ...);
        out_ << '\n';
    }

private:
    static std::string cell(double v) { return fmt(v); }
    static std::string cell(int v) { return std::to_string(v); }
    static std::string cell(std::size_t v) { return std::to_string(v); }
    static std::string cell(bool v) { return v ? "1" : "0"; }
    std::ofstream out_;
};

inline void write_json(const std::filesystem::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw NumericalError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

/// Everything a command needs, resolved from the config before any solve starts.
struct Context {
    RunConfig config;
    std::filesystem::path out;
    std::string command;
    Grid grid{2, 1, 1.0};
    SolverOptions solver;
    ModelParams params;
    ControlPair control;

    void write_outputs(const json& report) const {
        write_json(out / "report.json", report);
        write_json(out / "manifest.json", json{{"command", command}, {"config", config_to_json(config)}, {"report", report}});
    }
};

inline Context make_context(const RunConfig& cfg, const std::string& command) {
    Context c;
    c.config = cfg;
    c.command = command;
    if (cfg.output.snapshot_stride < 1) throw ConfigError("output.snapshot_stride must be >= 1");
    c.grid = make_grid(cfg);
    c.solver = make_solver_options(cfg);
    c.params = make_params(cfg, c.grid);
    c.control = make_control(cfg, c.grid);
    c.out = cfg.output.directory;
    std::filesystem::create_directories(c.out);
    return c;
}

inline json series(const std::vector<double>& v) { return json(v); }

// ---------------------------------------------------------------------------
// Commands. Each returns an exit code; exceptions are mapped by run().
// ---------------------------------------------------------------------------

inline int cmd_solve_state(const Context& c) {
    const auto& g = c.grid;
    const double eps = effective_eps(c.params, c.solver);
    FieldPair state;
    json steps = json::array();
    json extra = json::object();
    if (c.config.solver.scheme == "minmove") {
        MinMoveOptions mm;
        mm.L = c.config.solver.minmove_L;
        const auto sol = solve_state_minmove(c.params, g, c.control, c.solver, mm);
        state = sol.state;
        bool holds = true, holds_sharp = true;
        for (const auto& r : sol.reports) {
            holds = holds && r.inequality_lhs <= r.inequality_rhs;
            holds_sharp = holds_sharp && r.inequality_lhs <= r.inequality_rhs_sharp;
            steps.push_back({{"step_index", r.step_index},
                             {"sweeps", r.sweeps},
                             {"gradient_norm", r.gradient_norm},
                             {"inequality_lhs", r.inequality_lhs},
                             {"inequality_rhs", fmt(r.inequality_rhs)},
                             {"inequality_rhs_sharp", r.inequality_rhs_sharp}});
        }
        extra = {{"L0", sol.constants.L0},   {"L", sol.constants.L},           {"kappa0", sol.constants.kappa0},
                 {"A_star", sol.constants.A_star}, {"tau_max", sol.constants.tau_max}, {"r1_star", fmt(sol.r1_star)},
                 {"step_inequality_holds", holds}, {"step_inequality_sharp_holds", holds_sharp}};
    } else {
        const auto sol = solve_state(c.params, g, c.control, c.solver);
        state = sol.state;
        for (const auto& r : sol.reports)
            steps.push_back({{"step_index", r.step_index},
                             {"inner_iterations", r.inner_iterations},
                             {"inner_residual", r.inner_residual},
                             {"energy_phi", r.energy_phi},
                             {"energy_total", r.energy_total},
                             {"dissipation_residual", r.dissipation_residual},
                             {"halvings", r.halvings}});
    }

    std::vector<std::string> snapshots;
    const std::size_t stride = static_cast<std::size_t>(c.config.output.snapshot_stride);
    for (std::size_t k = 0; k < g.levels(); ++k) {
        if (k % stride != 0 && k + 1 != g.levels()) continue;
        char name[64];
        std::snprintf(name, sizeof name, "snapshot_%06zu.csv", k);
        CsvWriter w(c.out / name, "x,eta,theta");
        for (std::size_t i = 0; i < g.nodes(); ++i) w.row(g.x(i), state.first(k, i), state.second(k, i));
        snapshots.emplace_back(name);
    }
    const auto audit = energy_audit(c.params, g, state, c.control, eps);
    CsvWriter w(c.out / "energy_audit.csv", "step,t,phi,ghat,total,dissipation_residual");
    double max_res = 0.0;
    for (const auto& r : audit) {
        w.row(r.step, r.t, r.phi, r.ghat, r.total, r.dissipation_residual);
        max_res = std::max(max_res, r.dissipation_residual);
    }
    json report{{"scheme", c.config.solver.scheme},
                {"eps_effective", eps},
                {"initial_energy", audit.front().total},
                {"final_energy", audit.back().total},
                {"max_dissipation_residual", max_res},
                {"snapshots", snapshots},
                {"steps", steps}};
    for (auto& [k, v] : extra.items()) report[k] = v;
    c.write_outputs(report);
    return kOk;
}

inline int cmd_linear_solve(const Context& c) {
    const auto& g = c.grid;
    const Nodes p0 = sample(g, Profile(c.config.checks.p0));
    Nodes z0 = sample(g, Profile(c.config.checks.z0));
    z0.front() = 0.0;
    z0.back() = 0.0;
    const std::string mode = c.config.checks.linear_mode;
    Sextuplet s;
    if (mode == "heat") {
        s = Sextuplet::zeros(g, c.params.nu);
    } else if (mode == "state") {
        const auto st = solve_state(c.params, g, c.control, c.solver).state;
        s = linearization_coeffs(c.params, g, st, effective_eps(c.params, c.solver));
    } else {
        throw ConfigError("checks.linear_mode must be 'heat' or 'state', got '" + mode + "'");
    }
    const FieldPair sol = solve_P(s, g, p0, z0, SpaceTimeField(g), SpaceTimeField(g));

    json report{{"mode", mode}};
    if (mode == "heat") {
        // Modal amplitudes against the first cosine / sine mode.
        const double nu2 = c.params.nu * c.params.nu;
        Nodes cmode(g.nodes()), smode(g.nodes());
        for (std::size_t i = 0; i < g.nodes(); ++i) {
            cmode[i] = std::cos(std::numbers::pi * g.x(i));
            smode[i] = std::sin(std::numbers::pi * g.x(i));
        }
        const double pa0 = ops::dot_mass(g, p0, cmode) / ops::dot_mass(g, cmode, cmode);
        const double za0 = ops::dot_mass(g, z0, smode) / ops::dot_mass(g, smode, smode);
        CsvWriter w(c.out / "linear_solve.csv", "t,p_amplitude,p_exact,z_amplitude,z_exact");
        double pe = 0.0, ze = 0.0;
        const double pi2 = std::numbers::pi * std::numbers::pi;
        for (std::size_t k = 0; k < g.levels(); ++k) {
            const double t = g.t(k);
            const double pa = ops::dot_mass(g, sol.first[k], cmode) / ops::dot_mass(g, cmode, cmode);
            const double za = ops::dot_mass(g, sol.second[k], smode) / ops::dot_mass(g, smode, smode);
            const double px = pa0 * std::exp(-pi2 * t), zx = za0 * std::exp(-(1.0 + nu2) * pi2 * t);
            w.row(t, pa, px, za, zx);
            pe = std::max(pe, std::abs(pa - px));
            ze = std::max(ze, std::abs(za - zx));
        }
        report["max_p_amplitude_error"] = pe;
        report["max_z_amplitude_error"] = ze;
    } else {
        CsvWriter w(c.out / "linear_solve.csv", "t,p_norm,z_norm");
        for (std::size_t k = 0; k < g.levels(); ++k)
            w.row(g.t(k), ops::norm_mass(g, sol.first[k]), ops::norm_mass(g, sol.second[k]));
    }
    report["solution_norm"] = norms::solution_norm(g, sol);
    c.write_outputs(report);
    return kOk;
}

inline int cmd_grad_check(const Context& c) {
    const auto& g = c.grid;
    const auto& ck = c.config.checks;
    if (ck.grad_deltas.empty()) throw ConfigError("checks.grad_deltas must not be empty");
    for (double d : ck.grad_deltas)
        if (!(d > 0.0)) throw ConfigError("checks.grad_deltas entries must be > 0");
    ControlPair dir;
    if (ck.grad_direction == "gradient") {
        const auto gr = gradient(c.params, g, c.control, c.solver);
        dir = gr.gradient;
        if (gr.gradient_norm > 0.0) dir *= 1.0 / gr.gradient_norm;
    } else if (ck.grad_direction == "random") {
        std::mt19937_64 rng(c.config.seed);
        dir = random_pair(g, rng);
    } else {
        throw ConfigError("checks.grad_direction must be 'gradient' or 'random', got '" + ck.grad_direction + "'");
    }
    if (ck.grad_scheme != "forward" && ck.grad_scheme != "central")
        throw ConfigError("checks.grad_scheme must be 'forward' or 'central', got '" + ck.grad_scheme + "'");
    const auto rows = directional_check(c.params, g, c.control, dir, ck.grad_deltas, c.solver, ck.grad_scheme == "central");
    CsvWriter w(c.out / "gradcheck.csv", "delta,fd_value,adjoint_value,rel_error");
    double worst = 0.0;
    json jr = json::array();
    for (const auto& r : rows) {
        w.row(r.delta, r.fd_value, r.adjoint_value, r.rel_error);
        worst = std::max(worst, r.rel_error);
        jr.push_back({{"delta", r.delta}, {"fd_value", r.fd_value}, {"adjoint_value", r.adjoint_value}, {"rel_error", r.rel_error}});
    }
    const bool pass = worst <= ck.grad_threshold;
    c.write_outputs({{"rows", jr}, {"max_rel_error", worst}, {"threshold", ck.grad_threshold}, {"pass", pass}});
    return pass ? kOk : kThreshold;
}

inline int cmd_conjugacy(const Context& c) {
    const auto& ck = c.config.checks;
    const auto st = solve_state(c.params, c.grid, c.control, c.solver).state;
    const double defect = conjugacy_check(c.params, c.grid, st, ck.conjugacy_trials, c.config.seed, c.solver);
    const bool pass = defect <= ck.conjugacy_threshold;
    c.write_outputs({{"trials", ck.conjugacy_trials},
                     {"seed", c.config.seed},
                     {"max_relative_defect", defect},
                     {"threshold", ck.conjugacy_threshold},
                     {"pass", pass}});
    return pass ? kOk : kThreshold;
}

inline json report_to_json(const OptimizeReport& r) {
    return {{"iterations", r.iterations},
            {"cost_history", series(r.cost_history)},
            {"residual_history", series(r.residual_history)},
            {"step_sizes", series(r.step_sizes)},
            {"converged", r.converged}};
}

inline void write_history(const std::filesystem::path& path, const OptimizeReport& r) {
    CsvWriter w(path, "iteration,cost,residual,step");
    for (std::size_t j = 0; j < r.cost_history.size(); ++j)
        w.row(j, r.cost_history[j], r.residual_history[j], j == 0 ? 0.0 : r.step_sizes[j - 1]);
}

inline OptimizeOptions make_optimize_options(const RunConfig& cfg) { return {cfg.optimize.c1, cfg.optimize.max_halvings}; }

inline int cmd_optimize(const Context& c) {
    const auto& o = c.config.optimize;
    const auto res = optimize(c.params, c.grid, c.control, o.tol, o.max_iter, c.solver, make_optimize_options(c.config));
    write_history(c.out / "optimize_history.csv", res.report);
    c.write_outputs({{"report", report_to_json(res.report)}, {"final_cost", res.report.cost_history.back()}});
    return res.report.converged ? kOk : kThreshold;
}

inline int cmd_continuation(const Context& c) {
    const auto& o = c.config.optimize;
    const auto res = eps_continuation(c.params, c.grid, o.eps_list, c.control, o.tol, o.max_iter, c.solver,
                                      make_optimize_options(c.config));
    const auto& ct = res.certificate;
    CsvWriter w(c.out / "continuation.csv", "eps,iterations,converged,facet_fraction,control_drift");
    for (std::size_t j = 0; j < ct.eps_sequence.size(); ++j)
        w.row(ct.eps_sequence[j], ct.iterations[j], static_cast<bool>(ct.converged[j]), ct.facet_fraction[j],
              j == 0 ? 0.0 : ct.control_drift[j - 1]);
    json reports = json::array();
    for (const auto& r : res.reports) reports.push_back(report_to_json(r));
    std::vector<bool> conv(ct.converged.begin(), ct.converged.end());
    c.write_outputs({{"certificate",
                      {{"eps_sequence", ct.eps_sequence},
                       {"control_drift", ct.control_drift},
                       {"facet_fraction", ct.facet_fraction},
                       {"iterations", ct.iterations},
                       {"converged", conv},
                       {"sgn_violation", ct.sgn_violation},
                       {"weak_form_residual", ct.weak_form_residual}}},
                     {"reports", reports}});
    const bool all = std::all_of(conv.begin(), conv.end(), [](bool b) { return b; });
    return all ? kOk : kThreshold;
}

inline int cmd_residuals(const Context& c) {
    const auto r = optimality_residuals(c.params, c.grid, c.control, c.solver);
    c.write_outputs({{"stationarity", r.stationarity}, {"p_equation", r.p_equation}, {"z_equation", r.z_equation}});
    return kOk;
}

// ---------------------------------------------------------------------------

/// Parses arguments, runs one command and maps failures onto exit codes.
inline int run(int argc, char** argv, std::ostream& err = std::cerr) {
    CLI::App app{"KWC state, adjoint and optimal-control solver"};
    app.require_subcommand(1);
    app.fallthrough();
    std::string config_path, out_dir, scheme;
    std::uint64_t seed = 0;
    app.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
    app.add_option("--out", out_dir, "output directory (overrides output.directory)");
    auto* seed_opt = app.add_option("--seed", seed, "RNG seed for random-trial commands");
    auto* solve = app.add_subcommand("solve-state", "solve the state system, write snapshots and the energy audit");
    solve->add_option("--scheme", scheme, "semi_implicit or minmove");
    const char* names[] = {"linear-solve", "grad-check", "conjugacy", "optimize", "continuation", "residuals"};
    for (const char* n : names) app.add_subcommand(n);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, std::cout, err);
        return code == 0 ? kOk : kValidation;
    }
    const std::string command = app.get_subcommands().front()->get_name();
    try {
        RunConfig cfg = config_path.empty() ? RunConfig{} : load_config(config_path);
        if (!out_dir.empty()) cfg.output.directory = out_dir;
        if (seed_opt->count() > 0) cfg.seed = seed;
        if (!scheme.empty()) cfg.solver.scheme = scheme;
        const Context c = make_context(cfg, command);
        if (command == "solve-state") return cmd_solve_state(c);
        if (command == "linear-solve") return cmd_linear_solve(c);
        if (command == "grad-check") return cmd_grad_check(c);
        if (command == "conjugacy") return cmd_conjugacy(c);
        if (command == "optimize") return cmd_optimize(c);
        if (command == "continuation") return cmd_continuation(c);
        return cmd_residuals(c);
    } catch (const NumericalError& e) {
        err << "solver failure: " << e.what() << '\n';
        return kSolverFailure;
    } catch (const std::invalid_argument& e) {
        err << "invalid input: " << e.what() << '\n';
        return kValidation;
    } catch (const std::domain_error& e) {
        err << "invalid input: " << e.what() << '\n';
        return kValidation;
    } catch (const json::exception& e) {
        err << "invalid input: " << e.what() << '\n';
        return kValidation;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "i/o failure: " << e.what() << '\n';
        return kSolverFailure;
    }
}

} // namespace kwc::cli
