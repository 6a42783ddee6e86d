#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"

namespace kwc {

/// Uniform mesh of (0,1) with n_space cells and a uniform partition of [0,T].
/// Node i sits at x = i/n_space, level k at t = k*T/n_time.
class Grid {
public:
    Grid(int n_space, int n_time, double t_final) : n_space_(n_space), n_time_(n_time), t_final_(t_final) {
        if (n_space < 2) throw ConfigError("grid.n_space must be >= 2, got " + std::to_string(n_space));
        if (n_time < 1) throw ConfigError("grid.n_time must be >= 1, got " + std::to_string(n_time));
        if (!(t_final > 0.0) || !std::isfinite(t_final))
            throw ConfigError("grid.t_final must be a positive finite number");
    }

    int n_space() const { return n_space_; }
    int n_time() const { return n_time_; }
    double t_final() const { return t_final_; }

    std::size_t nodes() const { return static_cast<std::size_t>(n_space_) + 1; }
    std::size_t cells() const { return static_cast<std::size_t>(n_space_); }
    std::size_t levels() const { return static_cast<std::size_t>(n_time_) + 1; }

    double h() const { return 1.0 / n_space_; }
    double tau() const { return t_final_ / n_time_; }
    double x(std::size_t i) const { return static_cast<double>(i) / n_space_; }
    double t(std::size_t k) const { return k == static_cast<std::size_t>(n_time_) ? t_final_ : k * tau(); }
    double x_mid(std::size_t c) const { return (c + 0.5) / n_space_; }

    /// Lumped (trapezoid) mass of node i.
    double mass(std::size_t i) const { return (i == 0 || i == cells()) ? 0.5 * h() : h(); }
    /// Trapezoid weight of level k.
    double time_weight(std::size_t k) const {
        return (k == 0 || k == static_cast<std::size_t>(n_time_)) ? 0.5 * tau() : tau();
    }

    bool operator==(const Grid& o) const {
        return n_space_ == o.n_space_ && n_time_ == o.n_time_ && t_final_ == o.t_final_;
    }

private:
    int n_space_;
    int n_time_;
    double t_final_;
};

using Nodes = std::vector<double>;

/// Node-indexed values for every time level, stored level-major.
class SpaceTimeField {
public:
    SpaceTimeField() = default;
    SpaceTimeField(std::size_t levels, std::size_t nodes, double value = 0.0)
        : levels_(levels), nodes_(nodes), data_(levels * nodes, value) {}
    explicit SpaceTimeField(const Grid& g, double value = 0.0) : SpaceTimeField(g.levels(), g.nodes(), value) {}

    std::size_t levels() const { return levels_; }
    std::size_t nodes() const { return nodes_; }

    std::span<double> operator[](std::size_t k) { return {data_.data() + k * nodes_, nodes_}; }
    std::span<const double> operator[](std::size_t k) const { return {data_.data() + k * nodes_, nodes_}; }
    double& operator()(std::size_t k, std::size_t i) { return data_[k * nodes_ + i]; }
    double operator()(std::size_t k, std::size_t i) const { return data_[k * nodes_ + i]; }

    void set_level(std::size_t k, std::span<const double> values) {
        if (values.size() != nodes_) throw ShapeError("level size mismatch");
        std::copy(values.begin(), values.end(), data_.begin() + static_cast<std::ptrdiff_t>(k * nodes_));
    }
    Nodes level(std::size_t k) const { return Nodes((*this)[k].begin(), (*this)[k].end()); }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool matches(const Grid& g) const { return levels_ == g.levels() && nodes_ == g.nodes(); }
    bool same_shape(const SpaceTimeField& o) const { return levels_ == o.levels_ && nodes_ == o.nodes_; }
    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    SpaceTimeField& operator+=(const SpaceTimeField& o) {
        check(o);
        for (std::size_t j = 0; j < data_.size(); ++j) data_[j] += o.data_[j];
        return *this;
    }
    SpaceTimeField& operator-=(const SpaceTimeField& o) {
        check(o);
        for (std::size_t j = 0; j < data_.size(); ++j) data_[j] -= o.data_[j];
        return *this;
    }
    SpaceTimeField& operator*=(double s) {
        for (double& v : data_) v *= s;
        return *this;
    }
    /// this += s * o
    void axpy(double s, const SpaceTimeField& o) {
        check(o);
        for (std::size_t j = 0; j < data_.size(); ++j) data_[j] += s * o.data_[j];
    }

    friend SpaceTimeField operator+(SpaceTimeField a, const SpaceTimeField& b) { return a += b; }
    friend SpaceTimeField operator-(SpaceTimeField a, const SpaceTimeField& b) { return a -= b; }
    friend SpaceTimeField operator*(double s, SpaceTimeField a) { return a *= s; }
    bool operator==(const SpaceTimeField& o) const = default;

private:
    void check(const SpaceTimeField& o) const {
        if (!same_shape(o)) throw ShapeError("space-time field shape mismatch");
    }

    std::size_t levels_ = 0;
    std::size_t nodes_ = 0;
    std::vector<double> data_;
};

/// Trajectory of a pair of fields: [eta, theta], [p, z], [chi, gamma] ...
struct FieldPair {
    SpaceTimeField first;
    SpaceTimeField second;

    FieldPair() = default;
    explicit FieldPair(const Grid& g) : first(g), second(g) {}
    FieldPair(SpaceTimeField a, SpaceTimeField b) : first(std::move(a)), second(std::move(b)) {}

    FieldPair& operator+=(const FieldPair& o) {
        first += o.first;
        second += o.second;
        return *this;
    }
    FieldPair& operator-=(const FieldPair& o) {
        first -= o.first;
        second -= o.second;
        return *this;
    }
    FieldPair& operator*=(double s) {
        first *= s;
        second *= s;
        return *this;
    }
    void axpy(double s, const FieldPair& o) {
        first.axpy(s, o.first);
        second.axpy(s, o.second);
    }
    friend FieldPair operator+(FieldPair a, const FieldPair& b) { return a += b; }
    friend FieldPair operator-(FieldPair a, const FieldPair& b) { return a -= b; }
    friend FieldPair operator*(double s, FieldPair a) { return a *= s; }
    bool operator==(const FieldPair& o) const = default;

    bool matches(const Grid& g) const { return first.matches(g) && second.matches(g); }
    bool all_finite() const { return first.all_finite() && second.all_finite(); }
};

/// Space-time forcing [u, v]; same storage and algebra as FieldPair.
using ControlPair = FieldPair;

inline void require_nodes(const Grid& g, std::span<const double> a, const char* what) {
    if (a.size() != g.nodes())
        throw ShapeError(std::string(what) + ": expected " + std::to_string(g.nodes()) + " nodes, got " +
                         std::to_string(a.size()));
}

inline void require_field(const Grid& g, const SpaceTimeField& f, const char* what) {
    if (!f.matches(g))
        throw ShapeError(std::string(what) + ": field shape " + std::to_string(f.levels()) + "x" +
                         std::to_string(f.nodes()) + " does not match grid " + std::to_string(g.levels()) + "x" +
                         std::to_string(g.nodes()));
}

inline void require_pair(const Grid& g, const FieldPair& f, const char* what) {
    require_field(g, f.first, what);
    require_field(g, f.second, what);
}

/// Level k -> n_time - k.
inline SpaceTimeField reverse_time(const SpaceTimeField& f) {
    SpaceTimeField out(f.levels(), f.nodes());
    const std::size_t n = f.levels();
    for (std::size_t k = 0; k < n; ++k) out.set_level(n - 1 - k, f[k]);
    return out;
}

inline FieldPair reverse_time(const FieldPair& f) { return {reverse_time(f.first), reverse_time(f.second)}; }

} // namespace kwc
