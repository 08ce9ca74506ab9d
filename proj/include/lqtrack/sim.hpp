#pragma once

#include <cstdio>
#include <fstream>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "lqtrack/model.hpp"

namespace lqtrack {

// ============================================================================
// Flat coupled-state bookkeeping
// ============================================================================

/// Index map from component name to a contiguous slice of the flat state.
class StateLayout {
  public:
    int add(const std::string& name, int size) {
        detail::require(size > 0, "layout component must have positive size");
        for (const auto& c : components_)
            detail::require(c.first != name, "duplicate layout component: " + name);
        components_.emplace_back(name, size);
        const int off = total_;
        offsets_.push_back(off);
        total_ += size;
        return off;
    }

    int offset(const std::string& name) const { return offsets_[index_of(name)]; }
    int size_of(const std::string& name) const { return components_[index_of(name)].second; }
    int size() const { return total_; }

    Eigen::VectorBlock<Vector> slice(Vector& y, const std::string& name) const {
        return y.segment(offset(name), size_of(name));
    }
    Eigen::VectorBlock<const Vector> slice(const Vector& y, const std::string& name) const {
        return y.segment(offset(name), size_of(name));
    }

    const std::vector<std::pair<std::string, int>>& components() const { return components_; }

    /// Per-entry channel names: scalar components keep their name, vectors get _1.._k.
    std::vector<std::string> channel_names() const {
        std::vector<std::string> out;
        for (const auto& [name, size] : components_) {
            if (size == 1) {
                out.push_back(name);
            } else {
                for (int i = 1; i <= size; ++i) out.push_back(name + "_" + std::to_string(i));
            }
        }
        return out;
    }

  private:
    std::size_t index_of(const std::string& name) const {
        for (std::size_t i = 0; i < components_.size(); ++i)
            if (components_[i].first == name) return i;
        throw ScenarioError("unknown layout component: " + name);
    }

    std::vector<std::pair<std::string, int>> components_;
    std::vector<int> offsets_;
    int total_ = 0;
};

// ============================================================================
// Fixed-step integration
// ============================================================================

/// Classical 4th-order Runge-Kutta update.
template <typename F>
Vector rk4_step(F&& f, double t, const Vector& y, double h) {
    detail::require(h > 0.0, "rk4_step: h must be positive");
    const Vector k1 = f(t, y);
    const Vector k2 = f(t + 0.5 * h, Vector(y + 0.5 * h * k1));
    const Vector k3 = f(t + 0.5 * h, Vector(y + 0.5 * h * k2));
    const Vector k4 = f(t + h, Vector(y + h * k3));
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

/// Uniform-grid log of named real channels.
struct TimeSeries {
    double step = 0.0;
    std::vector<std::string> names;
    std::vector<double> time;
    std::vector<Vector> rows;

    int column_index(const std::string& name) const {
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == name) return static_cast<int>(i);
        throw ScenarioError("unknown time-series column: " + name);
    }

    std::vector<double> column(const std::string& name) const {
        const int j = column_index(name);
        std::vector<double> out;
        out.reserve(rows.size());
        for (const auto& r : rows) out.push_back(r(j));
        return out;
    }

    void write_csv(const std::string& path) const {
        std::ofstream out(path);
        detail::require(out.good(), "cannot open for writing: " + path);
        out << "t";
        for (const auto& n : names) out << "," << n;
        out << "\n";
        char buf[32];
        for (std::size_t i = 0; i < rows.size(); ++i) {
            std::snprintf(buf, sizeof(buf), "%.17g", time[i]);
            out << buf;
            for (int j = 0; j < rows[i].size(); ++j) {
                std::snprintf(buf, sizeof(buf), "%.17g", rows[i](j));
                out << "," << buf;
            }
            out << "\n";
        }
    }
};

/// Integrate dy/dt = rhs(t, y) on [t0, t_end] with fixed step h, logging
/// observer(t, y) every log_every-th sample (plus the initial and final ones).
template <typename Rhs, typename Obs>
TimeSeries integrate(Rhs&& rhs, const Vector& y0, double t0, double t_end, double h,
                     int log_every, std::vector<std::string> channel_names, Obs&& observer) {
    detail::require(h > 0.0 && t_end >= t0, "integrate: bad time grid");
    detail::require(log_every >= 1, "integrate: log_every must be >= 1");

    TimeSeries ts;
    ts.step = h * log_every;
    ts.names = std::move(channel_names);

    Vector y = y0;
    double t = t0;
    const long steps = std::lround((t_end - t0) / h);

    ts.time.push_back(t);
    ts.rows.push_back(observer(t, y));
    for (long i = 1; i <= steps; ++i) {
        y = rk4_step(rhs, t, y, h);
        t = t0 + static_cast<double>(i) * h;
        if (!y.allFinite()) throw IntegrationError("state became non-finite", t);
        if (i % log_every == 0 || i == steps) {
            ts.time.push_back(t);
            ts.rows.push_back(observer(t, y));
        }
    }
    return ts;
}

/// Raw-state integration: channels are the layout's per-entry names.
template <typename Rhs>
TimeSeries integrate(Rhs&& rhs, const StateLayout& layout, const Vector& y0, double t0,
                     double t_end, double h, int log_every = 1) {
    return integrate(std::forward<Rhs>(rhs), y0, t0, t_end, h, log_every, layout.channel_names(),
                     [](double, const Vector& y) { return y; });
}

} // namespace lqtrack
