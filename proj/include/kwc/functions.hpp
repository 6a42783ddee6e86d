#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <set>
#include <string>

#include "errors.hpp"

namespace kwc {

// ---------------------------------------------------------------------------
// f_eps(xi) = sqrt(eps^2 + xi^2): regularized absolute value.
// ---------------------------------------------------------------------------

inline double f_eps(double eps, double xi) {
    if (eps < 0.0) throw ConfigError("f_eps: eps must be nonnegative");
    return std::hypot(eps, xi);
}

inline double f_eps_prime(double eps, double xi) {
    if (eps < 0.0) throw ConfigError("f_eps_prime: eps must be nonnegative");
    if (eps == 0.0 && xi == 0.0) throw SubdifferentialPoint();
    const double r = xi / std::hypot(eps, xi);
    return std::clamp(r, -1.0, 1.0);
}

inline double f_eps_second(double eps, double xi) {
    if (eps < 0.0) throw ConfigError("f_eps_second: eps must be nonnegative");
    if (eps == 0.0 && xi == 0.0) throw SubdifferentialPoint();
    const double f = std::hypot(eps, xi);
    return (eps / f) * (eps / f) / f;
}

// ---------------------------------------------------------------------------
// Coefficient catalog. Every function is described by a kind name and a set of
// named constants so a run can be rebuilt from its configuration file.
// ---------------------------------------------------------------------------

struct FunctionSpec {
    std::string kind;
    std::map<std::string, double> constants;

    double get(const std::string& key, double fallback) const {
        auto it = constants.find(key);
        return it == constants.end() ? fallback : it->second;
    }
    bool operator==(const FunctionSpec&) const = default;
};

namespace detail {

inline void check_keys(const FunctionSpec& s, const char* owner, std::initializer_list<const char*> allowed) {
    std::set<std::string> ok;
    for (const char* a : allowed) ok.insert(a);
    for (const auto& [k, v] : s.constants) {
        if (!ok.count(k)) throw ConfigError(std::string(owner) + " kind '" + s.kind + "': unknown constant '" + k + "'");
        if (!std::isfinite(v)) throw ConfigError(std::string(owner) + ": constant '" + k + "' is not finite");
    }
}

[[noreturn]] inline void unknown_kind(const char* owner, const std::string& kind) {
    throw ConfigError(std::string(owner) + ": unknown kind '" + kind + "'");
}

} // namespace detail

/// Perturbation g with nonnegative primitive G.
///   linear:      g(s) = slope (s - root),  G(s) = slope (s - root)^2 / 2
///   double_well: g(s) = s^3 - s,           G(s) = (s^2 - 1)^2 / 4
///   zero:        g = G = 0
class PerturbationG {
public:
    PerturbationG() : PerturbationG(FunctionSpec{"linear", {{"slope", 1.0}, {"root", 1.0}}}) {}
    explicit PerturbationG(FunctionSpec spec) : spec_(std::move(spec)) {
        if (spec_.kind == "linear") {
            detail::check_keys(spec_, "g", {"slope", "root"});
            slope_ = spec_.get("slope", 1.0);
            root_ = spec_.get("root", 1.0);
            if (slope_ < 0.0) throw ConfigError("g linear: slope must be >= 0 so that G >= 0");
        } else if (spec_.kind == "double_well" || spec_.kind == "zero") {
            detail::check_keys(spec_, "g", {});
        } else {
            detail::unknown_kind("g", spec_.kind);
        }
    }

    double value(double s) const {
        if (spec_.kind == "linear") return slope_ * (s - root_);
        if (spec_.kind == "double_well") return s * s * s - s;
        return 0.0;
    }
    double prime(double s) const {
        if (spec_.kind == "linear") return slope_;
        if (spec_.kind == "double_well") return 3.0 * s * s - 1.0;
        return 0.0;
    }
    double primitive(double s) const {
        if (spec_.kind == "linear") return 0.5 * slope_ * (s - root_) * (s - root_);
        if (spec_.kind == "double_well") return 0.25 * (s * s - 1.0) * (s * s - 1.0);
        return 0.0;
    }
    /// sup |g'| over [-r, r].
    double lipschitz(double r) const {
        if (spec_.kind == "linear") return slope_;
        if (spec_.kind == "double_well") return std::max(1.0, 3.0 * r * r - 1.0);
        return 0.0;
    }

    const FunctionSpec& spec() const { return spec_; }

private:
    FunctionSpec spec_;
    double slope_ = 0.0;
    double root_ = 0.0;
};

/// Mobility alpha(s) = delta_star + curvature * s^2 on [-clip, clip], continued
/// linearly (C^1) outside so alpha' stays bounded on R.
class Mobility {
public:
    Mobility() : Mobility(FunctionSpec{"quadratic", {{"curvature", 1.0}, {"clip", 10.0}}}, 0.1) {}
    Mobility(FunctionSpec spec, double delta_star) : spec_(std::move(spec)), delta_star_(delta_star) {
        if (spec_.kind != "quadratic") detail::unknown_kind("alpha", spec_.kind);
        detail::check_keys(spec_, "alpha", {"curvature", "clip"});
        curvature_ = spec_.get("curvature", 1.0);
        clip_ = spec_.get("clip", 10.0);
        if (curvature_ < 0.0) throw ConfigError("alpha quadratic: curvature must be >= 0 so that alpha'' >= 0");
        if (!(clip_ > 0.0)) throw ConfigError("alpha quadratic: clip radius must be > 0");
    }

    double value(double s) const {
        const double a = std::abs(s);
        if (a <= clip_) return delta_star_ + curvature_ * s * s;
        return delta_star_ + curvature_ * (clip_ * clip_ + 2.0 * clip_ * (a - clip_));
    }
    double prime(double s) const {
        const double c = std::clamp(s, -clip_, clip_);
        return 2.0 * curvature_ * c;
    }
    double second(double s) const { return std::abs(s) <= clip_ ? 2.0 * curvature_ : 0.0; }

    double delta_star() const { return delta_star_; }
    double clip() const { return clip_; }
    double curvature() const { return curvature_; }
    /// sup |d/ds (alpha alpha')| over R (attained on the clipped range).
    double product_lipschitz() const {
        // (alpha alpha')' = alpha'^2 + alpha alpha''; maximal at |s| = clip inside the quadratic part.
        const double r = clip_;
        return 4.0 * curvature_ * curvature_ * r * r + (delta_star_ + curvature_ * r * r) * 2.0 * curvature_;
    }
    /// sup |alpha'| over R.
    double prime_bound() const { return 2.0 * curvature_ * clip_; }

    const FunctionSpec& spec() const { return spec_; }

private:
    FunctionSpec spec_;
    double delta_star_;
    double curvature_ = 0.0;
    double clip_ = 10.0;
};

/// Time-derivative weight alpha_0(t, x).
///   constant:       alpha_0 = value
///   linear_in_time: alpha_0 = value + rate * t
class TimeWeight {
public:
    TimeWeight() : TimeWeight(FunctionSpec{"constant", {{"value", 1.0}}}) {}
    explicit TimeWeight(FunctionSpec spec) : spec_(std::move(spec)) {
        if (spec_.kind == "constant") {
            detail::check_keys(spec_, "alpha0", {"value"});
        } else if (spec_.kind == "linear_in_time") {
            detail::check_keys(spec_, "alpha0", {"value", "rate"});
            rate_ = spec_.get("rate", 0.0);
        } else {
            detail::unknown_kind("alpha0", spec_.kind);
        }
        value_ = spec_.get("value", 1.0);
    }

    double value(double t, double /*x*/) const { return value_ + rate_ * t; }
    double dt(double /*t*/, double /*x*/) const { return rate_; }
    double lower_bound(double t_final) const { return std::min(value_, value_ + rate_ * t_final); }
    double upper_bound(double t_final) const { return std::max(value_, value_ + rate_ * t_final); }

    const FunctionSpec& spec() const { return spec_; }

private:
    FunctionSpec spec_;
    double value_ = 1.0;
    double rate_ = 0.0;
};

/// Spatial profile on [0,1].
///   constant: value
///   cosine:   offset + amplitude cos(mode pi x)
///   sine:     amplitude sin(mode pi x)
///   plateau:  amplitude (phi(x) - [(1-x) phi(0) + x phi(1)]),
///             phi(x) = (tanh((x-left)/width) - tanh((x-right)/width)) / 2
class Profile {
public:
    Profile() : Profile(FunctionSpec{"constant", {{"value", 0.0}}}) {}
    explicit Profile(FunctionSpec spec) : spec_(std::move(spec)) {
        if (spec_.kind == "constant") {
            detail::check_keys(spec_, "profile", {"value"});
        } else if (spec_.kind == "cosine") {
            detail::check_keys(spec_, "profile", {"offset", "amplitude", "mode"});
        } else if (spec_.kind == "sine") {
            detail::check_keys(spec_, "profile", {"amplitude", "mode"});
        } else if (spec_.kind == "plateau") {
            detail::check_keys(spec_, "profile", {"amplitude", "left", "right", "width"});
            if (!(spec_.get("width", 0.05) > 0.0)) throw ConfigError("profile plateau: width must be > 0");
        } else {
            detail::unknown_kind("profile", spec_.kind);
        }
    }

    double operator()(double x) const {
        using std::numbers::pi;
        if (spec_.kind == "constant") return spec_.get("value", 0.0);
        if (spec_.kind == "cosine")
            return spec_.get("offset", 0.0) + spec_.get("amplitude", 1.0) * std::cos(spec_.get("mode", 1.0) * pi * x);
        if (spec_.kind == "sine") return spec_.get("amplitude", 1.0) * std::sin(spec_.get("mode", 1.0) * pi * x);
        const double a = spec_.get("amplitude", 1.0), l = spec_.get("left", 0.3), r = spec_.get("right", 0.7),
                     w = spec_.get("width", 0.05);
        auto phi = [&](double s) { return 0.5 * (std::tanh((s - l) / w) - std::tanh((s - r) / w)); };
        return a * (phi(x) - ((1.0 - x) * phi(0.0) + x * phi(1.0)));
    }

    const FunctionSpec& spec() const { return spec_; }

private:
    FunctionSpec spec_;
};

/// Space-time forcing profile(x) * (1 + rate t), or identically zero.
class ForcingProfile {
public:
    ForcingProfile() = default;
    ForcingProfile(Profile space, double rate) : space_(std::move(space)), rate_(rate), zero_(false) {}

    double operator()(double t, double x) const { return zero_ ? 0.0 : space_(x) * (1.0 + rate_ * t); }

    bool is_zero() const { return zero_; }
    const Profile& space() const { return space_; }
    double rate() const { return rate_; }

private:
    Profile space_;
    double rate_ = 0.0;
    bool zero_ = true;
};

} // namespace kwc
