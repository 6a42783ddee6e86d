#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "linear_p.hpp"
#include "state_solver.hpp"

namespace kwc {

/// Sextuplet of the linearized state map, sampled from a solved trajectory.
using LinearizationCoeffs = Sextuplet;
/// Time-reversed sextuplet driving the adjoint as a forward solve.
using AdjointCoeffs = Sextuplet;

/// Level k -> n_time - k for every coefficient field.
inline Sextuplet reverse_time(const Sextuplet& s) {
    Sextuplet r = s;
    r.a = reverse_time(s.a);
    r.b = reverse_time(s.b);
    r.lambda = reverse_time(s.lambda);
    r.mu = reverse_time(s.mu);
    r.omega = reverse_time(s.omega);
    r.A = reverse_time(s.A);
    return r;
}

/// a = alpha0, b = 0, lambda = g'(eta), mu = alpha''(etabar) f(theta_x),
/// omega = alpha'(etabar) f'(theta_x), A = alpha(etabar) f''(theta_x).
inline LinearizationCoeffs linearization_coeffs(const ModelParams& p, const Grid& g, const FieldPair& state, double eps) {
    require_pair(g, state, "linearization_coeffs state");
    LinearizationCoeffs s = Sextuplet::zeros(g, p.nu);
    s.stiffness_positivity_only = true;
    for (std::size_t k = 0; k < g.levels(); ++k) {
        const auto eta = state.first[k];
        const auto etab = ops::cell_average(g, eta);
        const auto dth = ops::cell_gradient(g, state.second[k]);
        for (std::size_t i = 0; i < g.nodes(); ++i) {
            s.a(k, i) = p.alpha0.value(g.t(k), g.x(i));
            s.lambda(k, i) = p.g.prime(eta[i]);
        }
        for (std::size_t c = 0; c < g.cells(); ++c) {
            s.mu(k, c) = p.alpha.second(etab[c]) * f_eps(eps, dth[c]);
            s.omega(k, c) = p.alpha.prime(etab[c]) * f_eps_prime(eps, dth[c]);
            s.A(k, c) = p.alpha.value(etab[c]) * f_eps_second(eps, dth[c]);
        }
    }
    return s;
}

/// Reversed coefficients with [a, b] = R[alpha0, -d_t alpha0].
inline AdjointCoeffs adjoint_coeffs(const ModelParams& p, const Grid& g, const LinearizationCoeffs& lin) {
    AdjointCoeffs r = reverse_time(lin);
    for (std::size_t k = 0; k < g.levels(); ++k) {
        const double t = g.t(g.levels() - 1 - k);
        for (std::size_t i = 0; i < g.nodes(); ++i) {
            r.a(k, i) = p.alpha0.value(t, g.x(i));
            r.b(k, i) = -p.alpha0.dt(t, g.x(i));
        }
    }
    return r;
}

/// [chi, gamma] = P[M_u h, M_v k] with zero initial data.
inline FieldPair solve_linearized(const ModelParams& p, const LinearizationCoeffs& coeffs, const Grid& g,
                                  const SpaceTimeField& h_dir, const SpaceTimeField& k_dir) {
    SpaceTimeField h = h_dir, k = k_dir;
    h *= p.M_u;
    k *= p.M_v;
    const Nodes zero(g.nodes(), 0.0);
    return solve_P(coeffs, g, zero, zero, h, k);
}

/// Weighted tracking residual [M_eta (eta - eta_ad), M_theta (theta - theta_ad)].
inline FieldPair tracking_residual(const ModelParams& p, const Grid& g, const FieldPair& state) {
    require_pair(g, p.target, "target");
    FieldPair r = state;
    r -= p.target;
    r.first *= p.M_eta;
    r.second *= p.M_theta;
    return r;
}

/// Adjoint pair by time reversal: the backward problem is run forward on the
/// reversed coefficients and reversed right side, then reversed back. The
/// terminal level is zero by construction.
inline FieldPair solve_adjoint(const ModelParams& p, const Grid& g, const FieldPair& state,
                               const SolverOptions& opt = {}) {
    const auto lin = linearization_coeffs(p, g, state, effective_eps(p, opt));
    const auto rhs = reverse_time(tracking_residual(p, g, state));
    const Nodes zero(g.nodes(), 0.0);
    return reverse_time(solve_P(adjoint_coeffs(p, g, lin), g, zero, zero, rhs.first, rhs.second));
}

/// Adjoint pair as the exact transpose of the discrete linearized solve.
/// This is what the gradient uses.
inline FieldPair discrete_adjoint(const ModelParams& p, const Grid& g, const FieldPair& state,
                                  const SolverOptions& opt = {}) {
    const auto lin = linearization_coeffs(p, g, state, effective_eps(p, opt));
    return solve_P_transpose(lin, g, tracking_residual(p, g, state));
}

struct GradientResult {
    ControlPair gradient;
    double cost = 0.0;
    FieldPair state;
    FieldPair adjoint;
    double adjoint_norm = 0.0;
    double gradient_norm = 0.0;
};

/// grad J = [M_u (u + p), M_v (v + z)] in the space-time trapezoid inner product.
inline GradientResult gradient(const ModelParams& p, const Grid& g, const ControlPair& control,
                               const SolverOptions& opt = {}) {
    GradientResult r;
    r.state = solve_state(p, g, control, opt).state;
    r.cost = cost_J(p, g, r.state, control);
    r.adjoint = discrete_adjoint(p, g, r.state, opt);
    r.gradient = control;
    r.gradient += r.adjoint;
    r.gradient.first *= p.M_u;
    r.gradient.second *= p.M_v;
    r.adjoint_norm = ops::norm_spacetime(g, r.adjoint);
    r.gradient_norm = ops::norm_spacetime(g, r.gradient);
    return r;
}

inline double cost_at(const ModelParams& p, const Grid& g, const ControlPair& control, const SolverOptions& opt = {}) {
    return cost_J(p, g, solve_state(p, g, control, opt).state, control);
}

/// Standard-normal random pair; the second component vanishes on the boundary when dirichlet is set.
inline FieldPair random_pair(const Grid& g, std::mt19937_64& rng, bool dirichlet = false) {
    std::normal_distribution<double> nd;
    FieldPair r(g);
    for (double& v : r.first.data()) v = nd(rng);
    for (double& v : r.second.data()) v = nd(rng);
    if (dirichlet)
        for (std::size_t k = 0; k < g.levels(); ++k) {
            r.second(k, 0) = 0.0;
            r.second(k, g.nodes() - 1) = 0.0;
        }
    return r;
}

/// Relative defect |(P* y, x) - (y, P x)| / scale for one pair (x, y).
inline double conjugacy_defect(const Sextuplet& s, const Grid& g, const FieldPair& x, const FieldPair& y) {
    const Nodes zero(g.nodes(), 0.0);
    const FieldPair px = solve_P(s, g, zero, zero, x.first, x.second);
    const FieldPair pty = solve_P_transpose(s, g, y);
    const double lhs = ops::dot_spacetime(g, pty, x);
    const double rhs = ops::dot_spacetime(g, y, px);
    const double scale = ops::norm_spacetime(g, pty) * ops::norm_spacetime(g, x) +
                         ops::norm_spacetime(g, y) * ops::norm_spacetime(g, px);
    return scale > 0.0 ? std::abs(lhs - rhs) / scale : std::abs(lhs - rhs);
}

/// Max relative conjugacy defect over random trials, coefficients linearized at state.
inline double conjugacy_check(const ModelParams& p, const Grid& g, const FieldPair& state, int trials,
                              std::uint64_t seed = 1, const SolverOptions& opt = {}) {
    if (trials < 1) throw ConfigError("conjugacy_check: trials must be >= 1");
    const auto lin = linearization_coeffs(p, g, state, effective_eps(p, opt));
    std::mt19937_64 rng(seed);
    double worst = 0.0;
    for (int t = 0; t < trials; ++t) {
        const FieldPair x = random_pair(g, rng);
        const FieldPair y = random_pair(g, rng);
        worst = std::max(worst, conjugacy_defect(lin, g, x, y));
    }
    return worst;
}

struct DirectionalCheck {
    double delta = 0.0;
    double fd_value = 0.0;
    double adjoint_value = 0.0;
    double rel_error = 0.0;
};

/// One-sided difference (J(c + delta d) - J(c)) / delta against (grad J, d).
/// With central set, (J(c + delta d) - J(c - delta d)) / (2 delta), exact for quadratic J.
inline std::vector<DirectionalCheck> directional_check(const ModelParams& p, const Grid& g, const ControlPair& control,
                                                       const ControlPair& direction, const std::vector<double>& deltas,
                                                       const SolverOptions& opt = {}, bool central = false) {
    const GradientResult gr = gradient(p, g, control, opt);
    const double adj = ops::dot_spacetime(g, gr.gradient, direction);
    std::vector<DirectionalCheck> out;
    for (double d : deltas) {
        ControlPair c = control;
        c.axpy(d, direction);
        DirectionalCheck r;
        r.delta = d;
        if (central) {
            ControlPair m = control;
            m.axpy(-d, direction);
            r.fd_value = (cost_at(p, g, c, opt) - cost_at(p, g, m, opt)) / (2.0 * d);
        } else {
            r.fd_value = (cost_at(p, g, c, opt) - gr.cost) / d;
        }
        r.adjoint_value = adj;
        const double scale = std::max(std::abs(adj), std::abs(r.fd_value));
        r.rel_error = scale > 0.0 ? std::abs(r.fd_value - adj) / scale : 0.0;
        out.push_back(r);
    }
    return out;
}

} // namespace kwc
