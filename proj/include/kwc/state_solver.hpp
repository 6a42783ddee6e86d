#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "model.hpp"
#include "tridiag.hpp"

namespace kwc {

struct SolverOptions {
    double eps_floor = 1e-8;
    double inner_tol = 1e-10;
    int m_max = 100;
    /// Number of times a failing step may be split in half.
    int max_halvings = 5;

    bool operator==(const SolverOptions&) const = default;
};

inline double effective_eps(const ModelParams& p, const SolverOptions& o) { return std::max(p.eps, o.eps_floor); }

struct InnerReport {
    int iterations = 0;
    /// Relative size of the last update, the quantity compared with inner_tol.
    double residual = 0.0;
    /// Lumped dual norm of the nonlinear step equations at the returned iterate.
    double equation_residual = 0.0;
    bool converged = false;
};

struct StateStepReport {
    int step_index = 0;
    int inner_iterations = 0;
    double inner_residual = 0.0;
    double energy_phi = 0.0;
    double energy_total = 0.0;
    double dissipation_residual = 0.0;
    /// Number of halvings needed before the step succeeded (0 = none).
    int halvings = 0;
};

struct StateSolution {
    FieldPair state;
    std::vector<StateStepReport> reports;
    double initial_energy = 0.0;
    double initial_phi = 0.0;
};

namespace detail {

/// Nodal nonlinearity of the eta equation:
///   g(eta_i) + (1/m_i) sum_{c ~ i} (h/2) alpha'(etabar_c) f_eps(Dtheta_c),
/// the lumped-mass gradient of int G(eta) + sum_c h alpha(etabar_c) f_eps(Dtheta_c).
inline std::vector<double> eta_nonlinearity(const ModelParams& p, const Grid& g, std::span<const double> eta,
                                            std::span<const double> theta, double eps) {
    const auto etab = ops::cell_average(g, eta);
    const auto dth = ops::cell_gradient(g, theta);
    std::vector<double> q(g.cells());
    for (std::size_t c = 0; c < q.size(); ++c) q[c] = p.alpha.prime(etab[c]) * f_eps(eps, dth[c]);
    auto r = ops::average_form(g, q);
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = r[i] / g.mass(i) + p.g.value(eta[i]);
    return r;
}

/// Neumann stiffness (1/h tridiagonal) scaled by s, added onto m.
inline void add_neumann_stiffness(const Grid& g, Tridiagonal& m, double s) {
    const double k = s / g.h();
    for (std::size_t c = 0; c < g.cells(); ++c) {
        m.diag[c] += k;
        m.diag[c + 1] += k;
        m.upper[c] -= k;
        m.lower[c + 1] -= k;
    }
}

/// Stiffness with per-cell diffusivity d_c scaled by s.
inline void add_cell_stiffness(const Grid& g, Tridiagonal& m, std::span<const double> d, double s) {
    for (std::size_t c = 0; c < g.cells(); ++c) {
        const double k = s * d[c] / g.h();
        m.diag[c] += k;
        m.diag[c + 1] += k;
        m.upper[c] -= k;
        m.lower[c + 1] -= k;
    }
}

/// Cell flux alpha(etabar) f_eps'(Dtheta) + nu^2 Dtheta.
inline std::vector<double> theta_flux(const ModelParams& p, const Grid& g, std::span<const double> etab,
                                      std::span<const double> theta, double eps) {
    const auto dth = ops::cell_gradient(g, theta);
    std::vector<double> q(g.cells());
    for (std::size_t c = 0; c < q.size(); ++c)
        q[c] = p.alpha.value(etab[c]) * f_eps_prime(eps, dth[c]) + p.nu * p.nu * dth[c];
    return q;
}

inline double max_abs(std::span<const double> a) {
    double m = 0.0;
    for (double v : a) m = std::max(m, std::abs(v));
    return m;
}

/// Residual (lumped dual norm) of the implicit theta step
///   m_i w_i (theta_i - theta_prev_i) + [div-form of flux]_i - m_i rhs_i = 0, interior nodes,
/// where w_i is the per-node mass weight (alpha0/tau, possibly + 2L).
inline double theta_step_residual(const ModelParams& p, const Grid& g, std::span<const double> etab,
                                  std::span<const double> theta, std::span<const double> theta_prev,
                                  std::span<const double> weight, std::span<const double> rhs, double eps) {
    const auto q = theta_flux(p, g, etab, theta, eps);
    const auto div = ops::divergence_form(g, q);
    double s = 0.0;
    for (std::size_t i = 1; i + 1 < g.nodes(); ++i) {
        const double r = g.mass(i) * (weight[i] * (theta[i] - theta_prev[i]) - rhs[i]) + div[i];
        s += r * r / g.mass(i);
    }
    return std::sqrt(s);
}

/// Value of the theta-step functional
///   sum_i m_i w_i/2 (theta_i - theta_prev_i)^2 + sum_c h (nu^2/2 (Dtheta)^2 + alpha_c f_eps(Dtheta))
///   - sum_i m_i rhs_i theta_i.
inline double theta_step_functional(const ModelParams& p, const Grid& g, std::span<const double> alpha_c,
                                    std::span<const double> theta, std::span<const double> theta_prev,
                                    std::span<const double> weight, std::span<const double> rhs, double eps) {
    const auto dth = ops::cell_gradient(g, theta);
    double s = 0.0;
    for (std::size_t c = 0; c < dth.size(); ++c)
        s += g.h() * (0.5 * p.nu * p.nu * dth[c] * dth[c] + alpha_c[c] * f_eps(eps, dth[c]));
    for (std::size_t i = 1; i + 1 < g.nodes(); ++i) {
        const double d = theta[i] - theta_prev[i];
        s += g.mass(i) * (0.5 * weight[i] * d * d - rhs[i] * theta[i]);
    }
    return s;
}

/// Minimizes the theta-step functional (zero Dirichlet values) by lagged
/// diffusivity: each iterate solves the linear problem with diffusivity
/// alpha_c / f_eps(Dtheta_prev_iterate) + nu^2. Every iteration also tries a
/// Newton step from the current iterate and keeps whichever candidate has the
/// lower functional value; both are descent steps for the strictly convex
/// functional, the Newton candidate restores fast local convergence at small eps.
inline std::vector<double> kacanov(const ModelParams& p, const Grid& g, std::span<const double> etab,
                                   std::span<const double> theta_start, std::span<const double> theta_prev,
                                   std::span<const double> weight, std::span<const double> rhs, double eps,
                                   const SolverOptions& opt, InnerReport& report) {
    const std::size_t n = g.nodes();
    std::vector<double> theta(theta_start.begin(), theta_start.end());
    theta.front() = 0.0;
    theta.back() = 0.0;
    std::vector<double> alpha_c(g.cells());
    for (std::size_t c = 0; c < g.cells(); ++c) alpha_c[c] = p.alpha.value(etab[c]);
    std::vector<double> b(n, 0.0), diff(g.cells()), curv(g.cells());
    for (std::size_t i = 1; i + 1 < n; ++i) b[i] = g.mass(i) * (weight[i] * theta_prev[i] + rhs[i]);
    auto functional = [&](std::span<const double> th) {
        return theta_step_functional(p, g, alpha_c, th, theta_prev, weight, rhs, eps);
    };
    double f_cur = functional(theta);

    report = InnerReport{};
    for (int m = 1; m <= opt.m_max; ++m) {
        const auto dth = ops::cell_gradient(g, theta);
        for (std::size_t c = 0; c < g.cells(); ++c) {
            diff[c] = alpha_c[c] / f_eps(eps, dth[c]) + p.nu * p.nu;
            curv[c] = alpha_c[c] * f_eps_second(eps, dth[c]) + p.nu * p.nu;
        }
        Tridiagonal lagged(n), newton(n);
        for (std::size_t i = 0; i < n; ++i) lagged.diag[i] = newton.diag[i] = g.mass(i) * weight[i];
        add_cell_stiffness(g, lagged, diff, 1.0);
        add_cell_stiffness(g, newton, curv, 1.0);
        lagged.pin(0);
        lagged.pin(n - 1);
        newton.pin(0);
        newton.pin(n - 1);
        auto cand = solve_tridiagonal(lagged, b);
        double f_cand = functional(cand);

        // Newton direction from the gradient of the functional.
        const auto div = ops::divergence_form(g, theta_flux(p, g, etab, theta, eps));
        std::vector<double> grad(n, 0.0);
        for (std::size_t i = 1; i + 1 < n; ++i)
            grad[i] = g.mass(i) * (weight[i] * (theta[i] - theta_prev[i]) - rhs[i]) + div[i];
        const auto dir = solve_tridiagonal(newton, grad);
        std::vector<double> trial(n);
        for (double step = 1.0; step > 1e-4; step *= 0.5) {
            for (std::size_t i = 0; i < n; ++i) trial[i] = theta[i] - step * dir[i];
            const double f_trial = functional(trial);
            if (f_trial < f_cand || (step == 1.0 && f_trial <= f_cand)) {
                cand = trial;
                f_cand = f_trial;
                break;
            }
        }

        double upd = 0.0;
        for (std::size_t i = 0; i < n; ++i) upd = std::max(upd, std::abs(cand[i] - theta[i]));
        theta = std::move(cand);
        f_cur = f_cand;
        report.iterations = m;
        const double scale = std::max(max_abs(theta), std::numeric_limits<double>::min());
        report.residual = upd / scale;
        if (upd <= opt.inner_tol * scale || upd == 0.0) {
            report.converged = true;
            break;
        }
    }
    (void)f_cur;
    report.equation_residual = theta_step_residual(p, g, etab, theta, theta_prev, weight, rhs, eps);
    return theta;
}

} // namespace detail

/// Semi-implicit Euler step of the eta equation:
///   (I - tau Lap_h) eta_new = eta_prev + tau (M_u u - g(eta_prev) - alpha'(eta_prev) f_eps(theta_x,prev)),
/// with the homogeneous-Neumann lumped-mass Laplacian.
inline Nodes step_eta(const ModelParams& p, const Grid& g, std::span<const double> eta_prev,
                      std::span<const double> theta_prev, std::span<const double> u_slice, double tau,
                      double eps) {
    require_nodes(g, eta_prev, "step_eta eta_prev");
    require_nodes(g, theta_prev, "step_eta theta_prev");
    require_nodes(g, u_slice, "step_eta u_slice");
    if (!(tau > 0.0)) throw ConfigError("step_eta: tau must be > 0");
    const std::size_t n = g.nodes();
    const auto nl = detail::eta_nonlinearity(p, g, eta_prev, theta_prev, eps);
    Tridiagonal mat(n);
    std::vector<double> rhs(n);
    for (std::size_t i = 0; i < n; ++i) {
        mat.diag[i] = g.mass(i);
        rhs[i] = g.mass(i) * (eta_prev[i] + tau * (p.M_u * u_slice[i] - nl[i]));
    }
    detail::add_neumann_stiffness(g, mat, tau);
    return solve_tridiagonal(mat, rhs);
}

inline Nodes step_eta(const ModelParams& p, const Grid& g, std::span<const double> eta_prev,
                      std::span<const double> theta_prev, std::span<const double> u_slice, double tau) {
    return step_eta(p, g, eta_prev, theta_prev, u_slice, tau, p.eps);
}

/// Implicit theta step
///   alpha0 (theta_new - theta_prev)/tau - d_x(alpha(eta_new) f_eps'(theta_x) + nu^2 theta_x) = M_v v
/// solved by lagged diffusivity; alpha0_slice holds alpha0 at the new level.
inline Nodes step_theta(const ModelParams& p, const Grid& g, std::span<const double> theta_prev,
                        std::span<const double> eta_new, std::span<const double> v_slice,
                        std::span<const double> alpha0_slice, double tau, const SolverOptions& opt,
                        InnerReport& report) {
    require_nodes(g, theta_prev, "step_theta theta_prev");
    require_nodes(g, eta_new, "step_theta eta_new");
    require_nodes(g, v_slice, "step_theta v_slice");
    if (!(tau > 0.0)) throw ConfigError("step_theta: tau must be > 0");
    const double eps = effective_eps(p, opt);
    const auto etab = ops::cell_average(g, eta_new);
    std::vector<double> weight(g.nodes()), rhs(g.nodes());
    for (std::size_t i = 0; i < g.nodes(); ++i) {
        weight[i] = alpha0_slice[i] / tau;
        rhs[i] = p.M_v * v_slice[i];
    }
    return detail::kacanov(p, g, etab, theta_prev, theta_prev, weight, rhs, eps, opt, report);
}

inline Nodes step_theta(const ModelParams& p, const Grid& g, std::span<const double> theta_prev,
                        std::span<const double> eta_new, std::span<const double> v_slice, double tau,
                        const SolverOptions& opt, InnerReport& report) {
    Nodes a0(g.nodes());
    for (std::size_t i = 0; i < a0.size(); ++i) a0[i] = p.alpha0.value(0.0, g.x(i));
    return step_theta(p, g, theta_prev, eta_new, v_slice, a0, tau, opt, report);
}

inline Nodes alpha0_level(const ModelParams& p, const Grid& g, double t) {
    Nodes a0(g.nodes());
    for (std::size_t i = 0; i < a0.size(); ++i) a0[i] = p.alpha0.value(t, g.x(i));
    return a0;
}

/// Total energy Phi_eps + G_hat.
inline double total_energy(const ModelParams& p, const Grid& g, std::span<const double> eta,
                           std::span<const double> theta, double eps) {
    return energy_phi(p, g, eta, theta, eps) + potential_g_hat(p, g, eta, theta);
}

/// Full trajectory: eta step with the previous theta, then theta step with the new eta.
/// Step k uses the forcing averaged over [t_{k-1}, t_k].
inline StateSolution solve_state(const ModelParams& p, const Grid& g, const ControlPair& control,
                                 const SolverOptions& opt = {}) {
    require_pair(g, control, "solve_state control");
    require_nodes(g, p.eta0, "eta0");
    require_nodes(g, p.theta0, "theta0");
    const double eps = effective_eps(p, opt);
    const std::size_t n = g.nodes();
    StateSolution out{FieldPair(g), {}, 0.0, 0.0};
    out.state.first.set_level(0, p.eta0);
    out.state.second.set_level(0, p.theta0);
    out.initial_phi = energy_phi(p, g, p.eta0, p.theta0, eps);
    out.initial_energy = out.initial_phi + potential_g_hat(p, g, p.eta0, p.theta0);
    double e_prev = out.initial_energy;
    out.reports.reserve(g.levels() - 1);

    std::vector<double> ubar(n), vbar(n);
    for (std::size_t k = 1; k < g.levels(); ++k) {
        for (std::size_t i = 0; i < n; ++i) {
            ubar[i] = 0.5 * (control.first(k - 1, i) + control.first(k, i));
            vbar[i] = 0.5 * (control.second(k - 1, i) + control.second(k, i));
        }
        const Nodes eta_prev = out.state.first.level(k - 1);
        const Nodes theta_prev = out.state.second.level(k - 1);
        const double t_prev = g.t(k - 1);
        const double tau = g.t(k) - t_prev;

        StateStepReport rep;
        rep.step_index = static_cast<int>(k);
        Nodes eta_new, theta_new;
        bool done = false;
        for (int halvings = 0; halvings <= opt.max_halvings && !done; ++halvings) {
            const int substeps = 1 << halvings;
            const double dt = tau / substeps;
            Nodes e = eta_prev, th = theta_prev;
            int iters = 0;
            double resid = 0.0;
            bool ok = true;
            for (int s = 1; s <= substeps && ok; ++s) {
                e = step_eta(p, g, e, th, ubar, dt, eps);
                InnerReport ir;
                th = step_theta(p, g, th, e, vbar, alpha0_level(p, g, t_prev + s * dt), dt, opt, ir);
                iters += ir.iterations;
                resid = std::max(resid, ir.residual);
                ok = ir.converged;
            }
            rep.inner_iterations += iters;
            rep.inner_residual = resid;
            if (ok) {
                eta_new = std::move(e);
                theta_new = std::move(th);
                rep.halvings = halvings;
                done = true;
            }
        }
        if (!done)
            throw NumericalError("solve_state: inner iteration failed at step " + std::to_string(k) + " after " +
                                 std::to_string(opt.max_halvings) + " halvings");

        // Dissipation audit: |A^{1/2} dw/tau|^2 tau + E(w_k) - E(w_{k-1}) - (f, dw).
        const Nodes a0 = alpha0_level(p, g, g.t(k));
        double kinetic = 0.0, work = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double de = eta_new[i] - eta_prev[i], dt = theta_new[i] - theta_prev[i];
            kinetic += g.mass(i) * (de * de + a0[i] * dt * dt);
            work += g.mass(i) * (p.M_u * ubar[i] * de + p.M_v * vbar[i] * dt);
        }
        kinetic /= tau;
        rep.energy_phi = energy_phi(p, g, eta_new, theta_new, eps);
        rep.energy_total = rep.energy_phi + potential_g_hat(p, g, eta_new, theta_new);
        rep.dissipation_residual = kinetic + rep.energy_total - e_prev - work;
        e_prev = rep.energy_total;

        out.state.first.set_level(k, eta_new);
        out.state.second.set_level(k, theta_new);
        out.reports.push_back(rep);
    }
    return out;
}

struct EnergyAuditRow {
    int step = 0;
    double t = 0.0;
    double phi = 0.0;
    double ghat = 0.0;
    double total = 0.0;
    double dissipation_residual = 0.0;
};

/// Per-level energies of any trajectory and the per-step dissipation residual
/// |A^{1/2} dw|^2 / tau + E(w_k) - E(w_{k-1}) - (f_k, dw), f_k the step-averaged forcing.
inline std::vector<EnergyAuditRow> energy_audit(const ModelParams& p, const Grid& g, const FieldPair& state,
                                                const ControlPair& control, double eps) {
    require_pair(g, state, "energy_audit state");
    require_pair(g, control, "energy_audit control");
    std::vector<EnergyAuditRow> rows;
    for (std::size_t k = 0; k < g.levels(); ++k) {
        EnergyAuditRow r;
        r.step = static_cast<int>(k);
        r.t = g.t(k);
        r.phi = energy_phi(p, g, state.first[k], state.second[k], eps);
        r.ghat = potential_g_hat(p, g, state.first[k], state.second[k]);
        r.total = r.phi + r.ghat;
        if (k > 0) {
            const double tau = g.t(k) - g.t(k - 1);
            double kinetic = 0.0, work = 0.0;
            for (std::size_t i = 0; i < g.nodes(); ++i) {
                const double de = state.first(k, i) - state.first(k - 1, i);
                const double dt = state.second(k, i) - state.second(k - 1, i);
                const double ub = 0.5 * (control.first(k - 1, i) + control.first(k, i));
                const double vb = 0.5 * (control.second(k - 1, i) + control.second(k, i));
                kinetic += g.mass(i) * (de * de + p.alpha0.value(g.t(k), g.x(i)) * dt * dt);
                work += g.mass(i) * (p.M_u * ub * de + p.M_v * vb * dt);
            }
            r.dissipation_residual = kinetic / tau + r.total - rows.back().total - work;
        }
        rows.push_back(r);
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Minimizing-movement scheme: each step minimizes
//   1/(2 tau) |A^{1/2}(w - w_prev)|^2 + L |w - w_prev|^2 + Phi_eps(w) + G_hat(w) - (f_i, w)
// with f_i the forcing averaged over the step.
// ---------------------------------------------------------------------------

struct MinMoveOptions {
    /// Convexity shift; <= 0 selects L_0 + 1.
    double L = 0.0;
    double min_tol = 1e-9;
    int max_sweeps = 200;
};

/// Constants entering the step-size condition and the per-step energy inequality.
struct MinMoveConstants {
    double L0 = 0.0;      ///< Lipschitz constant of the non-convex part
    double L = 0.0;       ///< chosen shift
    double kappa0 = 0.0;  ///< coercivity of A(t)
    double A_star = 0.0;  ///< sup of |A|, |A'|
    double tau_max = 0.0; ///< kappa0 / (5L + A_star)
};

inline MinMoveConstants minmove_constants(const ModelParams& p, const Grid& g, const MinMoveOptions& o) {
    MinMoveConstants c;
    const double r = p.alpha.clip();
    c.L0 = 1.0 + p.g.lipschitz(r) + p.alpha.product_lipschitz() / (p.nu * p.nu);
    c.L = o.L > 0.0 ? o.L : c.L0 + 1.0;
    c.kappa0 = p.delta_star;
    const double a0_sup = std::max(std::abs(p.alpha0.lower_bound(g.t_final())), std::abs(p.alpha0.upper_bound(g.t_final())));
    c.A_star = 1.0 + a0_sup + std::abs(p.alpha0.dt(0.0, 0.0));
    c.tau_max = c.kappa0 / (5.0 * c.L + c.A_star);
    return c;
}

struct MinMoveStepReport {
    int step_index = 0;
    int sweeps = 0;
    double gradient_norm = 0.0;
    /// Left side of the per-step energy inequality:
    /// kappa0/(2 tau)|dw|^2 + (Phi + F_L)(w_i) - (Phi + F_L)(w_{i-1}).
    double inequality_lhs = 0.0;
    /// Right side with the a-priori bound r1* (may be +inf when the bound overflows).
    double inequality_rhs = 0.0;
    /// Right side with r1* replaced by |w_{i-1}|^2, the quantity it bounds.
    double inequality_rhs_sharp = 0.0;
};

struct MinMoveSolution {
    FieldPair state;
    std::vector<MinMoveStepReport> reports;
    MinMoveConstants constants;
    double r1_star = 0.0;
};

namespace detail {

/// Block minimization over eta with theta fixed, by Newton's method on a tridiagonal Hessian.
inline void minmove_eta_block(const ModelParams& p, const Grid& g, std::vector<double>& eta,
                              std::span<const double> eta_prev, std::span<const double> theta,
                              std::span<const double> fbar, double tau, double L, double eps, double tol) {
    const std::size_t n = g.nodes();
    const auto dth = ops::cell_gradient(g, theta);
    std::vector<double> fc(g.cells());
    for (std::size_t c = 0; c < fc.size(); ++c) fc[c] = f_eps(eps, dth[c]);
    const double w = 1.0 / tau + 2.0 * L;
    for (int it = 0; it < 50; ++it) {
        const auto etab = ops::cell_average(g, eta);
        std::vector<double> q(g.cells());
        for (std::size_t c = 0; c < q.size(); ++c) q[c] = p.alpha.prime(etab[c]) * fc[c];
        auto grad = ops::average_form(g, q);
        const auto deta = ops::cell_gradient(g, eta);
        const auto stiff = ops::divergence_form(g, deta);
        double gn = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            grad[i] += stiff[i] + g.mass(i) * (w * (eta[i] - eta_prev[i]) + p.g.value(eta[i]) - p.M_u * fbar[i]);
            gn += grad[i] * grad[i] / g.mass(i);
        }
        if (std::sqrt(gn) <= tol) return;
        Tridiagonal hess(n);
        for (std::size_t i = 0; i < n; ++i) hess.diag[i] = g.mass(i) * (w + p.g.prime(eta[i]));
        add_neumann_stiffness(g, hess, 1.0);
        for (std::size_t c = 0; c < g.cells(); ++c) {
            const double k = 0.25 * g.h() * p.alpha.second(etab[c]) * fc[c];
            hess.diag[c] += k;
            hess.diag[c + 1] += k;
            hess.upper[c] += k;
            hess.lower[c + 1] += k;
        }
        const auto step = solve_tridiagonal(hess, grad);
        for (std::size_t i = 0; i < n; ++i) eta[i] -= step[i];
    }
}

/// Lumped dual norm of the gradient of the step functional.
inline double minmove_gradient_norm(const ModelParams& p, const Grid& g, std::span<const double> eta,
                                    std::span<const double> theta, std::span<const double> eta_prev,
                                    std::span<const double> theta_prev, std::span<const double> a0,
                                    std::span<const double> fbar, std::span<const double> gbar, double tau,
                                    double L, double eps) {
    const std::size_t n = g.nodes();
    const auto nl = eta_nonlinearity(p, g, eta, theta, eps);
    const auto stiff = ops::divergence_form(g, ops::cell_gradient(g, eta));
    const auto etab = ops::cell_average(g, eta);
    const auto div = ops::divergence_form(g, theta_flux(p, g, etab, theta, eps));
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double ge = stiff[i] + g.mass(i) * ((1.0 / tau + 2.0 * L) * (eta[i] - eta_prev[i]) + nl[i] - p.M_u * fbar[i]);
        s += ge * ge / g.mass(i);
        if (i > 0 && i + 1 < n) {
            const double gt = div[i] + g.mass(i) * ((a0[i] / tau + 2.0 * L) * (theta[i] - theta_prev[i]) - p.M_v * gbar[i]);
            s += gt * gt / g.mass(i);
        }
    }
    return std::sqrt(s);
}

} // namespace detail

inline MinMoveSolution solve_state_minmove(const ModelParams& p, const Grid& g, const ControlPair& control,
                                           const SolverOptions& opt = {}, const MinMoveOptions& mm = {}) {
    require_pair(g, control, "solve_state_minmove control");
    const MinMoveConstants c = minmove_constants(p, g, mm);
    if (c.L < c.L0 + 1.0)
        throw ConfigError("minmove: L = " + std::to_string(c.L) + " must be >= L0 + 1 = " + std::to_string(c.L0 + 1.0));
    if (!(g.tau() * (5.0 * c.L + c.A_star) < c.kappa0)) {
        char msg[200];
        std::snprintf(msg, sizeof msg, "minmove: step-size condition (5L + A*) tau < kappa0 violated: tau = %g, need tau < %g",
                      g.tau(), c.tau_max);
        throw ConfigError(msg);
    }
    const double eps = effective_eps(p, opt);
    const std::size_t n = g.nodes();
    const double L = c.L;

    MinMoveSolution out;
    out.constants = c;
    out.state = FieldPair(g);
    out.state.first.set_level(0, p.eta0);
    out.state.second.set_level(0, p.theta0);

    // F_L(w) = G_hat(w) + L|w|^2 + C0 (C0 cancels in differences but enters r1*).
    auto norm2 = [&](std::span<const double> a, std::span<const double> b) {
        return ops::dot_mass(g, a, a) + ops::dot_mass(g, b, b);
    };
    const Nodes zero(n, 0.0);
    const double g_lin0 = p.g.value(0.0) - p.alpha.value(0.0) * p.alpha.prime(0.0) / (p.nu * p.nu);
    const double c0_hat = std::abs(potential_g_hat(p, g, zero, zero)) + g_lin0 * g_lin0 / (2.0 * c.L0);
    auto psi_plus_fl = [&](std::span<const double> e, std::span<const double> t) {
        return energy_phi(p, g, e, t, eps) + potential_g_hat(p, g, e, t) + L * norm2(e, t) + c0_hat;
    };

    // A-priori bound r1* from the discrete Gronwall argument.
    double f_l2 = 0.0;
    std::vector<double> fnorm(g.levels(), 0.0);
    for (std::size_t k = 1; k < g.levels(); ++k) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double fu = p.M_u * 0.5 * (control.first(k - 1, i) + control.first(k, i));
            const double fv = p.M_v * 0.5 * (control.second(k - 1, i) + control.second(k, i));
            s += g.mass(i) * (fu * fu + fv * fv);
        }
        fnorm[k] = s;
        f_l2 += g.tau() * s;
    }
    const double w0 = norm2(p.eta0, p.theta0);
    const double T = g.t_final();
    const double r0 = (1.0 + 2.0 * L * L) / L * std::exp(4.0 * T * (c.A_star + 5.0 * L) / c.kappa0) *
                      (f_l2 + T * (w0 + psi_plus_fl(p.eta0, p.theta0)));
    out.r1_star = 2.0 * (w0 + r0 / c.kappa0);

    std::vector<double> fbar(n), gbar(n);
    for (std::size_t k = 1; k < g.levels(); ++k) {
        const double tau = g.t(k) - g.t(k - 1);
        for (std::size_t i = 0; i < n; ++i) {
            fbar[i] = 0.5 * (control.first(k - 1, i) + control.first(k, i));
            gbar[i] = 0.5 * (control.second(k - 1, i) + control.second(k, i));
        }
        const Nodes eta_prev = out.state.first.level(k - 1);
        const Nodes theta_prev = out.state.second.level(k - 1);
        const Nodes a0 = alpha0_level(p, g, g.t(k));
        Nodes eta = eta_prev, theta = theta_prev;
        std::vector<double> weight(n), rhs(n);
        for (std::size_t i = 0; i < n; ++i) {
            weight[i] = a0[i] / tau + 2.0 * L;
            rhs[i] = p.M_v * gbar[i];
        }
        MinMoveStepReport rep;
        rep.step_index = static_cast<int>(k);
        double gn = std::numeric_limits<double>::infinity();
        for (int sweep = 1; sweep <= mm.max_sweeps; ++sweep) {
            detail::minmove_eta_block(p, g, eta, eta_prev, theta, fbar, tau, L, eps, 0.1 * mm.min_tol);
            InnerReport ir;
            SolverOptions inner = opt;
            inner.inner_tol = std::min(opt.inner_tol, 1e-13);
            inner.m_max = std::max(opt.m_max, 400);
            theta = detail::kacanov(p, g, ops::cell_average(g, eta), theta, theta_prev, weight, rhs, eps, inner, ir);
            gn = detail::minmove_gradient_norm(p, g, eta, theta, eta_prev, theta_prev, a0, fbar, gbar, tau, L, eps);
            rep.sweeps = sweep;
            if (gn <= mm.min_tol) break;
        }
        rep.gradient_norm = gn;
        if (!(gn <= mm.min_tol))
            throw NumericalError("minmove: step " + std::to_string(k) + " did not reach gradient norm " +
                                 std::to_string(mm.min_tol) + " (got " + std::to_string(gn) + ")");

        double dw2 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double de = eta[i] - eta_prev[i], dt = theta[i] - theta_prev[i];
            dw2 += g.mass(i) * (de * de + dt * dt);
        }
        rep.inequality_lhs =
            c.kappa0 / (2.0 * tau) * dw2 + psi_plus_fl(eta, theta) - psi_plus_fl(eta_prev, theta_prev);
        const double fi2 = fnorm[k];
        const double factor = (1.0 + 4.0 * L * L) / c.kappa0 * tau;
        rep.inequality_rhs = factor * (out.r1_star + fi2);
        rep.inequality_rhs_sharp = factor * (norm2(eta_prev, theta_prev) + fi2);

        out.state.first.set_level(k, eta);
        out.state.second.set_level(k, theta);
        out.reports.push_back(rep);
    }
    return out;
}

} // namespace kwc
