#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "functions.hpp"
#include "grid.hpp"

namespace kwc {

/// Physical and cost parameters of the controlled system.
struct ModelParams {
    double nu = 0.05;
    double eps = 0.1;
    double delta_star = 0.1;
    double M_eta = 1.0;
    double M_theta = 1.0;
    double M_u = 1.0;
    double M_v = 1.0;

    PerturbationG g;
    Mobility alpha;
    TimeWeight alpha0;

    Nodes eta0;
    Nodes theta0;
    /// Target trajectory [eta_ad, theta_ad].
    FieldPair target;
};

/// Range on which the pointwise coefficient assumptions are sampled.
inline constexpr double kWorkingRange = 10.0;

/// Checks every pointwise assumption on the sampled working range and the
/// shapes of the data arrays. Throws ConfigError naming the violated condition.
inline void validate(const ModelParams& p, const Grid& grid) {
    auto fail = [](const std::string& m) { throw ConfigError(m); };
    if (!(p.nu > 0.0) || !std::isfinite(p.nu)) fail("nu must be > 0, got " + std::to_string(p.nu));
    if (!(p.eps >= 0.0) || !std::isfinite(p.eps)) fail("eps must be >= 0, got " + std::to_string(p.eps));
    if (!(p.delta_star > 0.0 && p.delta_star < 1.0))
        fail("delta_star = " + std::to_string(p.delta_star) +
             " outside the admissible range (0,1) required for the mobility lower bound");
    if (p.alpha.delta_star() != p.delta_star) fail("alpha was built with a different delta_star");
    for (double w : {p.M_eta, p.M_theta, p.M_u, p.M_v})
        if (!(w >= 0.0) || !std::isfinite(w)) fail("cost weights M_eta, M_theta, M_u, M_v must be >= 0");

    constexpr int samples = 2001;
    const double r = kWorkingRange;
    for (int j = 0; j < samples; ++j) {
        const double s = -r + 2.0 * r * j / (samples - 1);
        if (p.alpha.value(s) < p.delta_star) fail("alpha(s) < delta_star at s = " + std::to_string(s));
        if (p.alpha.second(s) < 0.0) fail("alpha'' < 0 at s = " + std::to_string(s));
        const double G = p.g.primitive(s);
        if (G < 0.0) fail("G(s) < 0 at s = " + std::to_string(s));
        const double step = 1e-4;
        const double dG = (p.g.primitive(s + step) - p.g.primitive(s - step)) / (2.0 * step);
        if (std::abs(dG - p.g.value(s)) > 1e-6 * (1.0 + std::abs(p.g.value(s))))
            fail("G' does not match g at s = " + std::to_string(s));
    }
    if (p.alpha.prime(0.0) != 0.0) fail("alpha'(0) must vanish");
    const double a0_min = p.alpha0.lower_bound(grid.t_final());
    if (a0_min < p.delta_star) fail("alpha0 < delta_star somewhere on [0,T]");

    require_nodes(grid, p.eta0, "eta0");
    require_nodes(grid, p.theta0, "theta0");
    for (double v : p.eta0)
        if (!std::isfinite(v)) fail("eta0 has a non-finite entry");
    for (double v : p.theta0)
        if (!std::isfinite(v)) fail("theta0 has a non-finite entry");
    if (p.theta0.front() != 0.0 || p.theta0.back() != 0.0) fail("theta0 must vanish at x = 0 and x = 1");
    require_pair(grid, p.target, "target");
    if (!p.target.all_finite()) fail("target trajectory has non-finite entries");
}

// ---------------------------------------------------------------------------
// Discrete operators on the P1 mesh. Nodal fields use lumped (trapezoid) mass,
// gradients live on cells, products with gradients use cell midpoints.
// ---------------------------------------------------------------------------

namespace ops {

inline std::vector<double> cell_gradient(const Grid& g, std::span<const double> w) {
    std::vector<double> d(g.cells());
    const double inv_h = 1.0 / g.h();
    for (std::size_t c = 0; c < d.size(); ++c) d[c] = (w[c + 1] - w[c]) * inv_h;
    return d;
}

inline std::vector<double> cell_average(const Grid& g, std::span<const double> w) {
    std::vector<double> m(g.cells());
    for (std::size_t c = 0; c < m.size(); ++c) m[c] = 0.5 * (w[c] + w[c + 1]);
    return m;
}

/// Lumped-mass inner product sum_i m_i a_i b_i.
inline double dot_mass(const Grid& g, std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += g.mass(i) * a[i] * b[i];
    return s;
}

inline double norm_mass(const Grid& g, std::span<const double> a) { return std::sqrt(dot_mass(g, a, a)); }

/// Midpoint rule over cells of a cell field.
inline double integrate_cells(const Grid& g, std::span<const double> q) {
    double s = 0.0;
    for (double v : q) s += v;
    return s * g.h();
}

/// Node-wise functional derivative of sum_c h q_c (Dw)_c: returns q_{c-} - q_{c+}.
inline std::vector<double> divergence_form(const Grid& g, std::span<const double> cell_flux) {
    std::vector<double> r(g.nodes(), 0.0);
    for (std::size_t c = 0; c < g.cells(); ++c) {
        r[c] -= cell_flux[c];
        r[c + 1] += cell_flux[c];
    }
    return r;
}

/// Node-wise functional derivative of sum_c h q_c wbar_c: returns sum_{c ~ i} (h/2) q_c.
inline std::vector<double> average_form(const Grid& g, std::span<const double> cell_values) {
    std::vector<double> r(g.nodes(), 0.0);
    const double hh = 0.5 * g.h();
    for (std::size_t c = 0; c < g.cells(); ++c) {
        r[c] += hh * cell_values[c];
        r[c + 1] += hh * cell_values[c];
    }
    return r;
}

/// Space-time trapezoid inner product sum_k w_k (a_k, b_k)_M.
inline double dot_spacetime(const Grid& g, const SpaceTimeField& a, const SpaceTimeField& b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.levels(); ++k) s += g.time_weight(k) * dot_mass(g, a[k], b[k]);
    return s;
}

inline double dot_spacetime(const Grid& g, const FieldPair& a, const FieldPair& b) {
    return dot_spacetime(g, a.first, b.first) + dot_spacetime(g, a.second, b.second);
}

inline double norm_spacetime(const Grid& g, const FieldPair& a) { return std::sqrt(dot_spacetime(g, a, a)); }

/// Discrete C([0,T]; H) norm: max over levels of the lumped L2 norm.
inline double norm_sup_time(const Grid& g, const SpaceTimeField& a) {
    double m = 0.0;
    for (std::size_t k = 0; k < a.levels(); ++k) m = std::max(m, norm_mass(g, a[k]));
    return m;
}

} // namespace ops

// ---------------------------------------------------------------------------
// Energies and cost.
// ---------------------------------------------------------------------------

/// Discrete free energy: 1/2 int |eta_x|^2 + 1/2 int eta^2 + 1/2 int (nu f_eps(theta_x) + alpha(eta)/nu)^2.
/// Gradient and mobility terms use cell midpoints, eta^2 the trapezoid rule.
inline double energy_phi(const ModelParams& p, const Grid& g, std::span<const double> eta, std::span<const double> theta,
                         double eps) {
    require_nodes(g, eta, "energy_phi eta");
    require_nodes(g, theta, "energy_phi theta");
    const auto deta = ops::cell_gradient(g, eta);
    const auto dth = ops::cell_gradient(g, theta);
    const auto etab = ops::cell_average(g, eta);
    double grad = 0.0, coupled = 0.0;
    for (std::size_t c = 0; c < g.cells(); ++c) {
        grad += deta[c] * deta[c];
        const double q = p.nu * f_eps(eps, dth[c]) + p.alpha.value(etab[c]) / p.nu;
        coupled += q * q;
    }
    return 0.5 * g.h() * (grad + coupled) + 0.5 * ops::dot_mass(g, eta, eta);
}

inline double energy_phi(const ModelParams& p, const Grid& g, std::span<const double> eta, std::span<const double> theta) {
    return energy_phi(p, g, eta, theta, p.eps);
}

/// Potential of the Lipschitz part: int (G(eta) - eta^2/2 - alpha(eta)^2/(2 nu^2)).
/// The alpha^2 term is integrated at cell midpoints, like its counterpart inside
/// energy_phi, so the two cancel exactly in the total energy.
inline double potential_g_hat(const ModelParams& p, const Grid& g, std::span<const double> eta,
                              std::span<const double> theta) {
    require_nodes(g, eta, "potential_g_hat eta");
    require_nodes(g, theta, "potential_g_hat theta");
    double nodal = 0.0;
    for (std::size_t i = 0; i < g.nodes(); ++i) nodal += g.mass(i) * (p.g.primitive(eta[i]) - 0.5 * eta[i] * eta[i]);
    const auto etab = ops::cell_average(g, eta);
    double mob = 0.0;
    for (double e : etab) {
        const double a = p.alpha.value(e);
        mob += a * a;
    }
    return nodal - g.h() * mob / (2.0 * p.nu * p.nu);
}

/// Tracking cost: (M_eta/2)|eta - eta_ad|^2 + (M_theta/2)|theta - theta_ad|^2 + (M_u/2)|u|^2 + (M_v/2)|v|^2
/// in L2(Q), trapezoid in t and x.
inline double cost_J(const ModelParams& p, const Grid& g, const FieldPair& state, const ControlPair& control) {
    require_pair(g, state, "cost_J state");
    require_pair(g, control, "cost_J control");
    require_pair(g, p.target, "cost_J target");
    double total = 0.0;
    for (std::size_t k = 0; k < g.levels(); ++k) {
        double s = 0.0;
        for (std::size_t i = 0; i < g.nodes(); ++i) {
            const double de = state.first(k, i) - p.target.first(k, i);
            const double dt = state.second(k, i) - p.target.second(k, i);
            const double u = control.first(k, i), v = control.second(k, i);
            s += g.mass(i) * (p.M_eta * de * de + p.M_theta * dt * dt + p.M_u * u * u + p.M_v * v * v);
        }
        total += g.time_weight(k) * s;
    }
    return 0.5 * total;
}

/// Samples a profile at the grid nodes.
inline Nodes sample(const Grid& g, const Profile& prof) {
    Nodes out(g.nodes());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = prof(g.x(i));
    return out;
}

inline SpaceTimeField sample(const Grid& g, const ForcingProfile& f) {
    SpaceTimeField out(g);
    for (std::size_t k = 0; k < g.levels(); ++k)
        for (std::size_t i = 0; i < g.nodes(); ++i) out(k, i) = f(g.t(k), g.x(i));
    return out;
}

/// Constant-in-time trajectory built from two profiles.
inline FieldPair steady_pair(const Grid& g, std::span<const double> first, std::span<const double> second) {
    FieldPair out(g);
    for (std::size_t k = 0; k < g.levels(); ++k) {
        out.first.set_level(k, first);
        out.second.set_level(k, second);
    }
    return out;
}

/// Default problem: g(s) = s - 1, alpha(s) = delta_star + s^2, alpha0 = 1,
/// eta0 = 1, theta0 a double-grain plateau, targets equal to the initial pair.
inline ModelParams default_params(const Grid& grid) {
    ModelParams p;
    p.nu = 0.05;
    p.eps = 0.1;
    p.delta_star = 0.1;
    p.g = PerturbationG(FunctionSpec{"linear", {{"slope", 1.0}, {"root", 1.0}}});
    p.alpha = Mobility(FunctionSpec{"quadratic", {{"curvature", 1.0}, {"clip", 10.0}}}, p.delta_star);
    p.alpha0 = TimeWeight(FunctionSpec{"constant", {{"value", 1.0}}});
    p.eta0 = Nodes(grid.nodes(), 1.0);
    p.theta0 = sample(grid, Profile(FunctionSpec{"plateau", {{"amplitude", 1.0}, {"left", 0.3}, {"right", 0.7}, {"width", 0.05}}}));
    p.target = steady_pair(grid, p.eta0, p.theta0);
    return p;
}

} // namespace kwc
