#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <limits>
#include <vector>

#include "adjoint.hpp"

namespace kwc {

struct OptimizeReport {
    int iterations = 0;
    std::vector<double> cost_history;
    std::vector<double> residual_history;
    std::vector<double> step_sizes;
    bool converged = false;
};

struct OptimizeOptions {
    double c1 = 1e-4;
    int max_halvings = 40;
};

struct OptimizeResult {
    ControlPair control;
    OptimizeReport report;
};

/// Steepest descent on J in the space-time L2 metric with Barzilai-Borwein steps
/// and Armijo backtracking. The residual is |[M_u(u+p), M_v(v+z)]|.
inline OptimizeResult optimize(const ModelParams& p, const Grid& g, const ControlPair& initial, double tol, int max_iter,
                               const SolverOptions& opt = {}, const OptimizeOptions& oo = {}) {
    if (!(tol > 0.0)) throw ConfigError("optimize: tol must be > 0");
    if (max_iter < 0) throw ConfigError("optimize: max_iter must be >= 0");
    if (!(p.M_u + p.M_v > 0.0))
        throw ConfigError("optimize: M_u = M_v = 0, the cost has no control regularization and stationarity degenerates");
    require_pair(g, initial, "optimize initial control");

    OptimizeResult out{initial, {}};
    auto& rep = out.report;
    GradientResult cur = gradient(p, g, initial, opt);
    rep.cost_history.push_back(cur.cost);
    rep.residual_history.push_back(cur.gradient_norm);
    if (cur.gradient_norm <= tol) {
        rep.converged = true;
        return out;
    }

    double step = 1.0 / std::max(p.M_u, p.M_v);
    ControlPair x_prev, g_prev;
    for (int it = 1; it <= max_iter; ++it) {
        if (it > 1) {
            ControlPair s = out.control;
            s -= x_prev;
            ControlPair y = cur.gradient;
            y -= g_prev;
            const double sy = ops::dot_spacetime(g, s, y);
            const double ss = ops::dot_spacetime(g, s, s);
            if (sy > 0.0 && std::isfinite(ss / sy)) step = ss / sy;
        }
        const double gg = cur.gradient_norm * cur.gradient_norm;
        bool accepted = false;
        ControlPair trial;
        double trial_cost = 0.0;
        for (int j = 0; j <= oo.max_halvings; ++j) {
            trial = out.control;
            trial.axpy(-step, cur.gradient);
            trial_cost = cost_at(p, g, trial, opt);
            if (trial_cost <= cur.cost - oo.c1 * step * gg && trial_cost < cur.cost) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) return out;

        x_prev = out.control;
        g_prev = cur.gradient;
        out.control = trial;
        cur = gradient(p, g, out.control, opt);
        rep.iterations = it;
        rep.step_sizes.push_back(step);
        rep.cost_history.push_back(cur.cost);
        rep.residual_history.push_back(cur.gradient_norm);
        if (cur.gradient_norm <= tol) {
            rep.converged = true;
            return out;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Limiting optimality conditions.
// ---------------------------------------------------------------------------

/// Cells with |theta_x| <= threshold count as facet cells.
inline constexpr double kFacetThreshold = 1e-3;

/// Fraction of cells over levels 1..n with |theta_x| <= threshold.
inline double facet_fraction(const Grid& g, const SpaceTimeField& theta, double threshold = kFacetThreshold) {
    std::size_t flat = 0, total = 0;
    for (std::size_t k = 1; k < g.levels(); ++k) {
        for (double d : ops::cell_gradient(g, theta[k])) {
            flat += std::abs(d) <= threshold ? 1 : 0;
            ++total;
        }
    }
    return total ? static_cast<double>(flat) / static_cast<double>(total) : 0.0;
}

/// max over cells of dist(f_eps'(theta_x), Sgn(theta_x)): on facet cells the
/// excess of |f_eps'| over 1, elsewhere |f_eps' - sign(theta_x)|. Levels 1..n.
inline double sgn_violation(const Grid& g, const SpaceTimeField& theta, double eps, double threshold = kFacetThreshold) {
    double worst = 0.0;
    for (std::size_t k = 1; k < g.levels(); ++k) {
        for (double d : ops::cell_gradient(g, theta[k])) {
            const double fp = f_eps_prime(eps, d);
            const double v = std::abs(d) <= threshold ? std::max(0.0, std::abs(fp) - 1.0)
                                                      : std::abs(fp - (d > 0.0 ? 1.0 : -1.0));
            worst = std::max(worst, v);
        }
    }
    return worst;
}

namespace detail {

/// Norm of a functional r (values on space-time hats, levels k_first..n) in the
/// dual of the test space. Spatially the Riesz map is diagonalized by the
/// discrete eigenvectors of the lumped P1 Laplacian: sines on interior nodes
/// (dirichlet) or cosines on all nodes (Neumann).
///   with_time_derivative: test norm int |psi_t|^2_H + |psi|^2_V with psi(t_0) = 0,
///                         Riesz map solved per mode with a tridiagonal time matrix;
///   otherwise:            test norm int |psi|^2_V (time-lumped, diagonal).
struct ModalBasis {
    std::size_t j0 = 0, j1 = 0;
    std::vector<std::vector<double>> vec; ///< mass-orthonormal eigenvectors, indexed by j - j0
    std::vector<double> lam;
};

inline ModalBasis modal_basis(const Grid& g, bool dirichlet) {
    using std::numbers::pi;
    const std::size_t N = g.cells();
    const double h = g.h();
    ModalBasis b;
    b.j0 = dirichlet ? 1 : 0;
    b.j1 = dirichlet ? N - 1 : N;
    for (std::size_t j = b.j0; j <= b.j1; ++j) {
        const double norm = dirichlet || (j != 0 && j != N) ? std::sqrt(2.0) : 1.0;
        std::vector<double> v(g.nodes());
        for (std::size_t i = 0; i < v.size(); ++i)
            v[i] = norm * (dirichlet ? std::sin(j * pi * i * h) : std::cos(j * pi * i * h));
        b.vec.push_back(std::move(v));
        b.lam.push_back((2.0 - 2.0 * std::cos(j * pi * h)) / (h * h));
    }
    return b;
}

inline double hat_dual_norm(const Grid& g, const ModalBasis& basis, const SpaceTimeField& r, std::size_t k_first,
                            bool with_time_derivative) {
    const std::size_t levels = g.levels(), m = levels - k_first;
    double total = 0.0;
    std::vector<double> rhat(m);
    for (std::size_t jj = 0; jj < basis.vec.size(); ++jj) {
        const double lam = basis.lam[jj];
        const auto& v = basis.vec[jj];
        for (std::size_t k = k_first; k < levels; ++k) {
            double s = 0.0;
            const auto rk = r[k];
            for (std::size_t i = 0; i < v.size(); ++i) s += v[i] * rk[i];
            rhat[k - k_first] = s;
        }
        if (!with_time_derivative) {
            for (std::size_t q = 0; q < m; ++q) total += rhat[q] * rhat[q] / (g.time_weight(q + k_first) * (1.0 + lam));
            continue;
        }
        Tridiagonal t(m);
        const double tau = g.tau();
        for (std::size_t q = 0; q < m; ++q) {
            const std::size_t k = q + k_first;
            t.diag[q] = (k + 1 < levels ? 2.0 : 1.0) / tau + (1.0 + lam) * g.time_weight(k);
            if (q + 1 < m) {
                t.upper[q] = -1.0 / tau;
                t.lower[q + 1] = -1.0 / tau;
            }
        }
        const auto c = solve_tridiagonal(t, rhat);
        for (std::size_t q = 0; q < m; ++q) total += rhat[q] * c[q];
    }
    return std::sqrt(std::max(total, 0.0));
}

inline double scaled_residual(const Grid& g, const std::vector<SpaceTimeField>& terms, const SpaceTimeField& rhs,
                              std::size_t k_first, bool dirichlet, bool with_time_derivative) {
    SpaceTimeField r = terms.front();
    for (std::size_t j = 1; j < terms.size(); ++j) r += terms[j];
    r -= rhs;
    const ModalBasis basis = modal_basis(g, dirichlet);
    auto nrm = [&](const SpaceTimeField& f) { return hat_dual_norm(g, basis, f, k_first, with_time_derivative); };
    double scale = nrm(rhs);
    for (const auto& t : terms) scale = std::max(scale, nrm(t));
    const double n = nrm(r);
    return scale > 0.0 ? n / scale : n;
}

} // namespace detail

/// Weak p-equation residual of the limiting system, with xi the limit of omega z_x
/// (omega already carries the alpha' factor, so xi enters without another one):
///   int (p, phi_t) + (p(0), phi(0)) + (p_x, phi_x) + (alpha''|theta_x| p + g' p + xi, phi) = (M_eta(eta - eta_ad), phi)
/// tested on nodal hats times time hats at every level.
inline double p_equation_residual(const ModelParams& p, const Grid& g, const FieldPair& state, const FieldPair& adj,
                                  double eps) {
    const std::size_t n = g.nodes(), levels = g.levels(), last = levels - 1;
    SpaceTimeField dt_term(g), stiff(g), zero_order(g), coupling(g), rhs(g);
    for (std::size_t k = 0; k < levels; ++k) {
        const auto pk = adj.first[k];
        for (std::size_t i = 0; i < n; ++i) {
            double v = 0.0;
            if (k >= 1) v += 0.5 * (adj.first(k - 1, i) + pk[i]);
            if (k < last) v -= 0.5 * (pk[i] + adj.first(k + 1, i));
            if (k == 0) v += pk[i];
            if (k == last) v -= pk[i];
            dt_term(k, i) = g.mass(i) * v;
        }
        const double w = g.time_weight(k);
        const auto eta = state.first[k];
        const auto etab = ops::cell_average(g, eta);
        const auto dth = ops::cell_gradient(g, state.second[k]);
        const auto dz = ops::cell_gradient(g, adj.second[k]);
        std::vector<double> mu(g.cells()), xi(g.cells());
        for (std::size_t c = 0; c < g.cells(); ++c) {
            mu[c] = p.alpha.second(etab[c]) * std::abs(dth[c]);
            xi[c] = p.alpha.prime(etab[c]) * f_eps_prime(eps, dth[c]) * dz[c];
        }
        const auto st = ops::divergence_form(g, ops::cell_gradient(g, pk));
        const auto mp = detail::mu_form(g, mu, pk);
        const auto cp = ops::average_form(g, xi);
        for (std::size_t i = 0; i < n; ++i) {
            stiff(k, i) = w * st[i];
            zero_order(k, i) = w * (mp[i] + g.mass(i) * p.g.prime(eta[i]) * pk[i]);
            coupling(k, i) = w * cp[i];
            rhs(k, i) = w * g.mass(i) * p.M_eta * (eta[i] - p.target.first(k, i));
        }
    }
    return detail::scaled_residual(g, {dt_term, stiff, zero_order, coupling}, rhs, 0, false, false);
}

/// Weak z-equation residual of the limiting system with nu = f_eps'(theta_x) and
/// zeta = -(A z_x)_x taken from the eps-level coefficient:
///   int (alpha0 z, psi_t) + <zeta, psi> + (nu^2 z_x + alpha' nu p, psi_x) = (M_theta(theta - theta_ad), psi)
/// tested on interior hats times time hats vanishing at t = 0.
inline double z_equation_residual(const ModelParams& p, const Grid& g, const FieldPair& state, const FieldPair& adj,
                                  double eps) {
    const std::size_t n = g.nodes(), levels = g.levels(), last = levels - 1;
    SpaceTimeField dt_term(g), zeta(g), stiff(g), coupling(g), rhs(g);
    auto az = [&](std::size_t k, std::size_t i) { return p.alpha0.value(g.t(k), g.x(i)) * adj.second(k, i); };
    for (std::size_t k = 1; k < levels; ++k) {
        const double w = g.time_weight(k);
        const auto etab = ops::cell_average(g, state.first[k]);
        const auto dth = ops::cell_gradient(g, state.second[k]);
        const auto dz = ops::cell_gradient(g, adj.second[k]);
        const auto pb = ops::cell_average(g, adj.first[k]);
        std::vector<double> qa(g.cells()), qn(g.cells()), qc(g.cells());
        for (std::size_t c = 0; c < g.cells(); ++c) {
            qa[c] = p.alpha.value(etab[c]) * f_eps_second(eps, dth[c]) * dz[c];
            qn[c] = p.nu * p.nu * dz[c];
            qc[c] = p.alpha.prime(etab[c]) * f_eps_prime(eps, dth[c]) * pb[c];
        }
        const auto fa = ops::divergence_form(g, qa);
        const auto fn = ops::divergence_form(g, qn);
        const auto fc = ops::divergence_form(g, qc);
        for (std::size_t i = 1; i + 1 < n; ++i) {
            double v = 0.5 * (az(k - 1, i) + az(k, i));
            if (k < last) v -= 0.5 * (az(k, i) + az(k + 1, i));
            dt_term(k, i) = g.mass(i) * v;
            zeta(k, i) = w * fa[i];
            stiff(k, i) = w * fn[i];
            coupling(k, i) = w * fc[i];
            rhs(k, i) = w * g.mass(i) * p.M_theta * (state.second(k, i) - p.target.second(k, i));
        }
    }
    return detail::scaled_residual(g, {dt_term, zeta, stiff, coupling}, rhs, 1, true, true);
}

struct OptimalityResiduals {
    double stationarity = 0.0;
    double p_equation = 0.0;
    double z_equation = 0.0;
};

inline OptimalityResiduals optimality_residuals(const ModelParams& p, const Grid& g, const ControlPair& control,
                                                const SolverOptions& opt = {}) {
    const GradientResult gr = gradient(p, g, control, opt);
    const double eps = effective_eps(p, opt);
    // The weak forms are checked on the time-reversal adjoint, whose terminal
    // level is exactly zero; the transposed pair lags it by half a step.
    const FieldPair adj = solve_adjoint(p, g, gr.state, opt);
    return {gr.gradient_norm, p_equation_residual(p, g, gr.state, adj, eps), z_equation_residual(p, g, gr.state, adj, eps)};
}

struct LimitCertificate {
    std::vector<double> eps_sequence;
    std::vector<double> control_drift;
    std::vector<double> facet_fraction;
    std::vector<int> iterations;
    std::vector<bool> converged;
    double sgn_violation = 0.0;
    double weak_form_residual = 0.0;
};

struct ContinuationResult {
    ControlPair control;
    LimitCertificate certificate;
    std::vector<OptimizeReport> reports;
};

/// Warm-started optimize over a decreasing eps sequence.
inline ContinuationResult eps_continuation(const ModelParams& params, const Grid& g, const std::vector<double>& eps_list,
                                           const ControlPair& initial, double tol, int max_iter,
                                           const SolverOptions& opt = {}, const OptimizeOptions& oo = {}) {
    if (eps_list.empty()) throw ConfigError("eps_continuation: eps_list is empty");
    for (std::size_t j = 0; j < eps_list.size(); ++j) {
        if (!(eps_list[j] >= opt.eps_floor))
            throw ConfigError("eps_continuation: every eps must be >= eps_floor = " + std::to_string(opt.eps_floor));
        if (j > 0 && !(eps_list[j] < eps_list[j - 1]))
            throw ConfigError("eps_continuation: eps_list must be strictly decreasing");
    }
    ContinuationResult out{initial, {}, {}};
    auto& cert = out.certificate;
    ModelParams p = params;
    FieldPair last_state;
    for (std::size_t j = 0; j < eps_list.size(); ++j) {
        p.eps = eps_list[j];
        OptimizeResult r = optimize(p, g, out.control, tol, max_iter, opt, oo);
        if (j > 0) {
            ControlPair d = r.control;
            d -= out.control;
            cert.control_drift.push_back(ops::norm_spacetime(g, d));
        }
        out.control = std::move(r.control);
        cert.eps_sequence.push_back(p.eps);
        cert.iterations.push_back(r.report.iterations);
        cert.converged.push_back(r.report.converged);
        out.reports.push_back(std::move(r.report));
        last_state = solve_state(p, g, out.control, opt).state;
        cert.facet_fraction.push_back(facet_fraction(g, last_state.second));
    }
    const double eps = effective_eps(p, opt);
    cert.sgn_violation = sgn_violation(g, last_state.second, eps);
    const FieldPair adj = solve_adjoint(p, g, last_state, opt);
    cert.weak_form_residual = z_equation_residual(p, g, last_state, adj, eps);
    return out;
}

} // namespace kwc
