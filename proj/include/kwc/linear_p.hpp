#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "model.hpp"
#include "tridiag.hpp"

namespace kwc {

/// Coefficients (a, b, mu, lambda, omega, A) of the linear parabolic system
///   p_t - p_xx + mu p + lambda p + omega z_x = h            (Neumann)
///   a z_t + b z - (A z_x + nu^2 z_x + omega p)_x = k          (Dirichlet)
/// a, b, lambda are sampled at nodes; mu, omega, A at cell midpoints (their
/// SpaceTimeField "nodes" dimension is the cell count).
struct Sextuplet {
    double nu = 1.0;
    SpaceTimeField a, b, lambda;
    SpaceTimeField mu, omega, A;
    /// When set, positivity of the stiffness is required of A + nu^2 instead
    /// of A alone (linearization coefficients, where A may vanish).
    bool stiffness_positivity_only = false;

    static Sextuplet zeros(const Grid& g, double nu) {
        Sextuplet s;
        s.nu = nu;
        s.a = SpaceTimeField(g.levels(), g.nodes(), 1.0);
        s.b = SpaceTimeField(g.levels(), g.nodes(), 0.0);
        s.lambda = SpaceTimeField(g.levels(), g.nodes(), 0.0);
        s.mu = SpaceTimeField(g.levels(), g.cells(), 0.0);
        s.omega = SpaceTimeField(g.levels(), g.cells(), 0.0);
        s.A = SpaceTimeField(g.levels(), g.cells(), 1.0);
        return s;
    }
};

/// Initial pair and forcing pair of the linear system.
struct PData {
    Nodes p0, z0;
    SpaceTimeField h, k;

    static PData zeros(const Grid& g) { return {Nodes(g.nodes(), 0.0), Nodes(g.nodes(), 0.0), SpaceTimeField(g), SpaceTimeField(g)}; }
};

namespace detail {

inline double field_min(const SpaceTimeField& f) {
    double m = std::numeric_limits<double>::infinity();
    for (double v : f.data()) m = std::min(m, v);
    return m;
}
inline double field_max_abs(const SpaceTimeField& f) {
    double m = 0.0;
    for (double v : f.data()) m = std::max(m, std::abs(v));
    return m;
}

} // namespace detail

/// Membership test for the admissible coefficient class. Throws DomainError
/// naming the failed condition.
inline void check_membership(const Sextuplet& s, const Grid& g) {
    auto shape = [&](const SpaceTimeField& f, std::size_t cols, const char* name) {
        if (f.levels() != g.levels() || f.nodes() != cols)
            throw ShapeError(std::string("sextuplet field '") + name + "' has the wrong shape");
        if (!f.all_finite()) throw DomainError(std::string("sextuplet field '") + name + "' has non-finite entries (must be bounded)");
    };
    shape(s.a, g.nodes(), "a");
    shape(s.b, g.nodes(), "b");
    shape(s.lambda, g.nodes(), "lambda");
    shape(s.mu, g.cells(), "mu");
    shape(s.omega, g.cells(), "omega");
    shape(s.A, g.cells(), "A");
    if (!(s.nu > 0.0)) throw DomainError("sextuplet: nu must be > 0");
    if (!(detail::field_min(s.a) > 0.0))
        throw DomainError("sextuplet: a must be bounded with bounded log (inf a > 0 violated)");
    if (!(detail::field_min(s.mu) >= 0.0)) throw DomainError("sextuplet: mu >= 0 violated");
    if (s.stiffness_positivity_only) {
        if (!(detail::field_min(s.A) + s.nu * s.nu > 0.0)) throw DomainError("sextuplet: inf (A + nu^2) > 0 violated");
    } else if (!(detail::field_min(s.A) > 0.0)) {
        throw DomainError("sextuplet: A must be bounded with bounded log (inf A > 0 violated)");
    }
}

namespace detail {

/// M + tau K with Neumann boundary.
inline Tridiagonal p_matrix(const Grid& g, double tau) {
    Tridiagonal m(g.nodes());
    for (std::size_t i = 0; i < g.nodes(); ++i) m.diag[i] = g.mass(i);
    const double k = tau / g.h();
    for (std::size_t c = 0; c < g.cells(); ++c) {
        m.diag[c] += k;
        m.diag[c + 1] += k;
        m.upper[c] -= k;
        m.lower[c + 1] -= k;
    }
    return m;
}

/// M (a + tau b) + tau K_{A + nu^2}, restricted to interior nodes (boundary rows
/// pinned, boundary couplings dropped so the matrix stays symmetric).
inline Tridiagonal z_matrix(const Grid& g, const Sextuplet& s, std::size_t k, double tau) {
    const std::size_t n = g.nodes();
    Tridiagonal m(n);
    for (std::size_t i = 0; i < n; ++i) m.diag[i] = g.mass(i) * (s.a(k, i) + tau * s.b(k, i));
    const double nu2 = s.nu * s.nu;
    for (std::size_t c = 0; c < g.cells(); ++c) {
        const double w = tau * (s.A(k, c) + nu2) / g.h();
        m.diag[c] += w;
        m.diag[c + 1] += w;
        m.upper[c] -= w;
        m.lower[c + 1] -= w;
    }
    m.pin(0);
    m.pin(n - 1);
    m.upper[n - 2] = 0.0;
    m.lower[1] = 0.0;
    return m;
}

/// U p = sum_c h mu_c pbar_c (phibar_c) as a nodal vector.
inline std::vector<double> mu_form(const Grid& g, std::span<const double> mu, std::span<const double> p) {
    const auto pb = ops::cell_average(g, p);
    std::vector<double> q(g.cells());
    for (std::size_t c = 0; c < q.size(); ++c) q[c] = mu[c] * pb[c];
    return ops::average_form(g, q);
}

/// B z: derivative in phi of sum_c h omega_c (Dz)_c phibar_c.
inline std::vector<double> omega_grad_form(const Grid& g, std::span<const double> omega, std::span<const double> z) {
    const auto dz = ops::cell_gradient(g, z);
    std::vector<double> q(g.cells());
    for (std::size_t c = 0; c < q.size(); ++c) q[c] = omega[c] * dz[c];
    return ops::average_form(g, q);
}

/// B^T p: derivative in psi of sum_c h omega_c pbar_c (Dpsi)_c.
inline std::vector<double> omega_flux_form(const Grid& g, std::span<const double> omega, std::span<const double> p) {
    const auto pb = ops::cell_average(g, p);
    std::vector<double> q(g.cells());
    for (std::size_t c = 0; c < q.size(); ++c) q[c] = omega[c] * pb[c];
    return ops::divergence_form(g, q);
}

} // namespace detail

/// Time stepping for the linear system. Step k (t_{k-1} -> t_k):
///   p-sweep: implicit diffusion; mu, lambda and the omega z_x coupling use level k-1
///            coefficients and the previous iterate;
///   z-sweep: implicit in z with a, b, A, omega at level k and the fresh p_k.
/// Forcing enters through its average over the step. This is the exact tangent
/// of the state scheme when the coefficients come from a state trajectory.
inline FieldPair solve_P(const Sextuplet& s, const Grid& g, std::span<const double> p0, std::span<const double> z0,
                         const SpaceTimeField& h, const SpaceTimeField& kf) {
    check_membership(s, g);
    require_nodes(g, p0, "solve_P p0");
    require_nodes(g, z0, "solve_P z0");
    require_field(g, h, "solve_P h");
    require_field(g, kf, "solve_P k");
    const std::size_t n = g.nodes();
    FieldPair out(g);
    out.first.set_level(0, p0);
    out.second.set_level(0, z0);
    out.second(0, 0) = 0.0;
    out.second(0, n - 1) = 0.0;
    std::vector<double> rp(n), rz(n);
    for (std::size_t k = 1; k < g.levels(); ++k) {
        const double tau = g.t(k) - g.t(k - 1);
        const auto pp = out.first[k - 1];
        const auto zp = out.second[k - 1];
        const auto up = detail::mu_form(g, s.mu[k - 1], pp);
        const auto bz = detail::omega_grad_form(g, s.omega[k - 1], zp);
        for (std::size_t i = 0; i < n; ++i) {
            const double m = g.mass(i);
            rp[i] = m * pp[i] - tau * (m * s.lambda(k - 1, i) * pp[i] + up[i] + bz[i]) +
                    0.5 * tau * m * (h(k - 1, i) + h(k, i));
        }
        const auto pk = solve_tridiagonal(detail::p_matrix(g, tau), rp);
        out.first.set_level(k, pk);

        const auto cp = detail::omega_flux_form(g, s.omega[k], pk);
        for (std::size_t i = 0; i < n; ++i) {
            const double m = g.mass(i);
            rz[i] = m * s.a(k, i) * zp[i] - tau * cp[i] + 0.5 * tau * m * (kf(k - 1, i) + kf(k, i));
        }
        rz[0] = 0.0;
        rz[n - 1] = 0.0;
        out.second.set_level(k, solve_tridiagonal(detail::z_matrix(g, s, k, tau), rz));
    }
    return out;
}

inline FieldPair solve_P(const Sextuplet& s, const Grid& g, const PData& d) { return solve_P(s, g, d.p0, d.z0, d.h, d.k); }

/// Adjoint of the forcing-to-solution map of solve_P (zero initial data) with
/// respect to the space-time trapezoid inner product: returns x with
/// (x, [h,k]) = (y, solve_P(0, 0, h, k)) for every forcing [h,k].
/// Computed as the exact algebraic transpose of the time stepping, run backwards.
inline FieldPair solve_P_transpose(const Sextuplet& s, const Grid& g, const FieldPair& y) {
    check_membership(s, g);
    require_pair(g, y, "solve_P_transpose y");
    const std::size_t n = g.nodes(), levels = g.levels();
    SpaceTimeField p_hat(g), z_hat(g), h_hat(g), k_hat(g);
    for (std::size_t k = 1; k < levels; ++k)
        for (std::size_t i = 0; i < n; ++i) {
            p_hat(k, i) = g.time_weight(k) * g.mass(i) * y.first(k, i);
            z_hat(k, i) = g.time_weight(k) * g.mass(i) * y.second(k, i);
        }
    std::vector<double> zint(n);
    for (std::size_t k = levels - 1; k >= 1; --k) {
        const double tau = g.t(k) - g.t(k - 1);
        // z-sweep cotangent.
        for (std::size_t i = 0; i < n; ++i) zint[i] = (i == 0 || i == n - 1) ? 0.0 : z_hat(k, i);
        auto zeta = solve_tridiagonal(detail::z_matrix(g, s, k, tau).transposed(), zint);
        zeta[0] = 0.0;
        zeta[n - 1] = 0.0;
        const auto bz = detail::omega_grad_form(g, s.omega[k], zeta);
        for (std::size_t i = 0; i < n; ++i) {
            const double m = g.mass(i);
            z_hat(k - 1, i) += m * s.a(k, i) * zeta[i];
            p_hat(k, i) -= tau * bz[i];
            k_hat(k - 1, i) += 0.5 * tau * m * zeta[i];
            k_hat(k, i) += 0.5 * tau * m * zeta[i];
        }
        // p-sweep cotangent.
        const auto pi = solve_tridiagonal(detail::p_matrix(g, tau).transposed(), p_hat[k]);
        const auto upi = detail::mu_form(g, s.mu[k - 1], pi);
        const auto cpi = detail::omega_flux_form(g, s.omega[k - 1], pi);
        for (std::size_t i = 0; i < n; ++i) {
            const double m = g.mass(i);
            p_hat(k - 1, i) += m * pi[i] - tau * (m * s.lambda(k - 1, i) * pi[i] + upi[i]);
            z_hat(k - 1, i) -= tau * cpi[i];
            h_hat(k - 1, i) += 0.5 * tau * m * pi[i];
            h_hat(k, i) += 0.5 * tau * m * pi[i];
        }
    }
    FieldPair out(g);
    for (std::size_t k = 0; k < levels; ++k)
        for (std::size_t i = 0; i < n; ++i) {
            const double w = g.time_weight(k) * g.mass(i);
            out.first(k, i) = h_hat(k, i) / w;
            out.second(k, i) = k_hat(k, i) / w;
        }
    return out;
}

// ---------------------------------------------------------------------------
// Discrete norms used by the stability estimate and the property tests.
// ---------------------------------------------------------------------------

namespace norms {

/// |w|_V^2 = |w|_H^2 + |w_x|_H^2.
inline double v_norm2(const Grid& g, std::span<const double> w) {
    const auto d = ops::cell_gradient(g, w);
    double s = 0.0;
    for (double v : d) s += v * v;
    return ops::dot_mass(g, w, w) + g.h() * s;
}

/// |w|_{V0}^2 = |w_x|_H^2.
inline double v0_norm2(const Grid& g, std::span<const double> w) {
    const auto d = ops::cell_gradient(g, w);
    double s = 0.0;
    for (double v : d) s += v * v;
    return g.h() * s;
}

/// Dual norm in V*: f^T M r with (K + M) r = M f.
inline double v_dual_norm2(const Grid& g, std::span<const double> f) {
    Tridiagonal m = detail::p_matrix(g, 1.0);
    std::vector<double> rhs(g.nodes());
    for (std::size_t i = 0; i < rhs.size(); ++i) rhs[i] = g.mass(i) * f[i];
    const auto r = solve_tridiagonal(m, rhs);
    return ops::dot_mass(g, f, r);
}

/// Dual norm in V0*: f^T M r with K r = M f, r = 0 on the boundary.
inline double v0_dual_norm2(const Grid& g, std::span<const double> f) {
    const std::size_t n = g.nodes();
    Tridiagonal m(n);
    const double k = 1.0 / g.h();
    for (std::size_t c = 0; c < g.cells(); ++c) {
        m.diag[c] += k;
        m.diag[c + 1] += k;
        m.upper[c] -= k;
        m.lower[c + 1] -= k;
    }
    m.pin(0);
    m.pin(n - 1);
    m.upper[n - 2] = 0.0;
    m.lower[1] = 0.0;
    std::vector<double> rhs(n, 0.0);
    for (std::size_t i = 1; i + 1 < n; ++i) rhs[i] = g.mass(i) * f[i];
    const auto r = solve_tridiagonal(m, rhs);
    return ops::dot_mass(g, f, r);
}

inline double lp_cells(const Grid& g, std::span<const double> q, double pw) {
    double s = 0.0;
    for (double v : q) s += std::pow(std::abs(v), pw);
    return std::pow(g.h() * s, 1.0 / pw);
}

inline double lp_nodes(const Grid& g, std::span<const double> q, double pw) {
    double s = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) s += g.mass(i) * std::pow(std::abs(q[i]), pw);
    return std::pow(s, 1.0 / pw);
}

/// Discrete solution-space norm: C([0,T];H)^2 plus L2(0,T;V) x L2(0,T;V0).
inline double solution_norm(const Grid& g, const FieldPair& s) {
    double y = 0.0;
    for (std::size_t k = 0; k < g.levels(); ++k) y += g.time_weight(k) * (v_norm2(g, s.first[k]) + v0_norm2(g, s.second[k]));
    return ops::norm_sup_time(g, s.first) + ops::norm_sup_time(g, s.second) + std::sqrt(y);
}

/// Discrete data norm: |p0|_H + |z0|_H + |[h,k]| in L2(0,T;V*) x L2(0,T;V0*).
inline double data_norm(const Grid& g, const PData& d) {
    double y = 0.0;
    for (std::size_t k = 0; k < g.levels(); ++k) y += g.time_weight(k) * (v_dual_norm2(g, d.h[k]) + v0_dual_norm2(g, d.k[k]));
    return ops::norm_mass(g, d.p0) + ops::norm_mass(g, d.z0) + std::sqrt(y);
}

} // namespace norms

// ---------------------------------------------------------------------------
// Stability probe: both sides of the Gronwall-integrated difference estimate.
// ---------------------------------------------------------------------------

struct StabilityReport {
    double C0 = 0.0;
    std::vector<double> t;
    std::vector<double> lhs;   ///< |p1-p2|_H^2 + |sqrt(a1)(z1-z2)|_H^2
    std::vector<double> bound; ///< Gronwall-integrated right side (may be +inf)
    double slack = 0.5;
    bool holds = true;
};

/// C0* = 81 (1 + nu^2) / min{1, nu^2, inf a} * (1 + |a|_{W1inf} + |b|_inf + |lambda|_inf + |omega|_inf^2).
inline double stability_constant(const Sextuplet& s, const Grid& g) {
    double dt_max = 0.0, dx_max = 0.0;
    for (std::size_t k = 0; k < g.levels(); ++k)
        for (std::size_t i = 0; i < g.nodes(); ++i) {
            if (k + 1 < g.levels()) dt_max = std::max(dt_max, std::abs(s.a(k + 1, i) - s.a(k, i)) / g.tau());
            if (i + 1 < g.nodes()) dx_max = std::max(dx_max, std::abs(s.a(k, i + 1) - s.a(k, i)) / g.h());
        }
    const double a_w1 = detail::field_max_abs(s.a) + dt_max + dx_max;
    const double om = detail::field_max_abs(s.omega);
    const double nu2 = s.nu * s.nu;
    const double denom = std::min({1.0, nu2, detail::field_min(s.a)});
    return 81.0 * (1.0 + nu2) / denom *
           (1.0 + a_w1 + detail::field_max_abs(s.b) + detail::field_max_abs(s.lambda) + om * om);
}

inline StabilityReport stability_probe(const Sextuplet& s1, const Sextuplet& s2, const Grid& g, const PData& d1,
                                       const PData& d2, double slack = 0.5) {
    const FieldPair x1 = solve_P(s1, g, d1);
    const FieldPair x2 = solve_P(s2, g, d2);
    StabilityReport rep;
    rep.slack = slack;
    rep.C0 = stability_constant(s1, g);
    const std::size_t n = g.nodes(), levels = g.levels();

    double a_diff_sup = 0.0;
    for (std::size_t j = 0; j < s1.a.data().size(); ++j)
        a_diff_sup = std::max(a_diff_sup, std::abs(s1.a.data()[j] - s2.a.data()[j]));

    std::vector<double> forcing(levels);
    for (std::size_t k = 0; k < levels; ++k) {
        std::vector<double> dh(n), dk(n), da(n), db(n), dl(n);
        for (std::size_t i = 0; i < n; ++i) {
            dh[i] = d1.h(k, i) - d2.h(k, i);
            dk[i] = d1.k(k, i) - d2.k(k, i);
            da[i] = s1.a(k, i) - s2.a(k, i);
            db[i] = s1.b(k, i) - s2.b(k, i);
            dl[i] = (s1.lambda(k, i) - s2.lambda(k, i)) * x2.first(k, i);
        }
        std::vector<double> dmu(g.cells()), dom(g.cells()), zx_dom(g.cells()), dA_zx(g.cells());
        const auto zx = ops::cell_gradient(g, x2.second[k]);
        for (std::size_t c = 0; c < g.cells(); ++c) {
            dmu[c] = s1.mu(k, c) - s2.mu(k, c);
            dom[c] = s1.omega(k, c) - s2.omega(k, c);
            zx_dom[c] = zx[c] * dom[c];
            dA_zx[c] = (s1.A(k, c) - s2.A(k, c)) * zx[c];
        }
        // Time derivative of z2 (backward difference; forward at level 0).
        std::vector<double> zt(n);
        const std::size_t k0 = k == 0 ? 0 : k - 1, k1 = k == 0 ? 1 : k;
        for (std::size_t i = 0; i < n; ++i) zt[i] = (x2.second(k1, i) - x2.second(k0, i)) / g.tau();

        const double r0 = norms::v0_dual_norm2(g, zt) * (a_diff_sup * a_diff_sup + std::pow(norms::lp_cells(g, ops::cell_gradient(g, da), 4.0), 2)) +
                          norms::v_norm2(g, x2.first[k]) *
                              (std::pow(norms::lp_cells(g, dmu, 2.0), 2) + std::pow(norms::lp_cells(g, dom, 4.0), 2)) +
                          norms::v0_norm2(g, x2.second[k]) *
                              (std::pow(norms::lp_nodes(g, db, 4.0), 2) + ops::dot_mass(g, dl, dl)) +
                          std::pow(norms::lp_cells(g, zx_dom, 2.0), 2) + std::pow(norms::lp_cells(g, dA_zx, 2.0), 2);
        forcing[k] = norms::v_dual_norm2(g, dh) + norms::v0_dual_norm2(g, dk) + r0;

        double lhs = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double dp = x1.first(k, i) - x2.first(k, i), dz = x1.second(k, i) - x2.second(k, i);
            lhs += g.mass(i) * (dp * dp + s1.a(k, i) * dz * dz);
        }
        rep.t.push_back(g.t(k));
        rep.lhs.push_back(lhs);
    }

    // L(t) <= e^{3C t} L(0) + int_0^t e^{3C (t-s)} 2C F(s) ds, the integral by the trapezoid rule.
    const double C = rep.C0;
    double integral = 0.0; // int_0^t e^{-3C s} 2C F(s) ds
    rep.bound.resize(levels);
    for (std::size_t k = 0; k < levels; ++k) {
        if (k > 0) {
            const double f0 = std::exp(-3.0 * C * g.t(k - 1)) * 2.0 * C * forcing[k - 1];
            const double f1 = std::exp(-3.0 * C * g.t(k)) * 2.0 * C * forcing[k];
            integral += 0.5 * g.tau() * (f0 + f1);
        }
        const double growth = std::exp(3.0 * C * g.t(k));
        const double b = growth * (rep.lhs[0] + integral);
        rep.bound[k] = std::isnan(b) ? std::numeric_limits<double>::infinity() : b;
        if (!(rep.lhs[k] <= rep.bound[k] * (1.0 + slack))) rep.holds = false;
    }
    return rep;
}

} // namespace kwc
