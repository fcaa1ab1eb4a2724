#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "rmpc/common.hpp"

namespace rmpc {

/// Values sampled on the uniform grid t0 + k*dt, k = 0..values.size()-1.
template <class T>
struct SampledSignal {
    double t0 = 0.0;
    double dt = 0.0;
    std::vector<T> values;

    std::size_t size() const { return values.size(); }
    double time(std::size_t k) const { return t0 + static_cast<double>(k) * dt; }

    std::size_t nearest_index(double t) const {
        require(dt > 0.0 && !values.empty(), "SampledSignal: empty or zero-step signal");
        double k = std::round((t - t0) / dt);
        if (k < 0.0) k = 0.0;
        const double kmax = static_cast<double>(values.size() - 1);
        if (k > kmax) k = kmax;
        return static_cast<std::size_t>(k);
    }

    const T& at_time(double t) const { return values[nearest_index(t)]; }
};

using MatrixPath = SampledSignal<Matrix>;

/// Piecewise-constant vector signal on a uniform grid with a constant tail.
/// Value on [t0 + k*dt, t0 + (k+1)*dt) is values[k]; tail applies from the
/// end of the grid (and everywhere if the grid is empty).
struct PiecewiseConstantSignal {
    double t0 = 0.0;
    double dt = 0.0;
    std::vector<Vector> values;
    Vector tail;

    static PiecewiseConstantSignal zero(Eigen::Index n) {
        PiecewiseConstantSignal s;
        s.tail = Vector::Zero(n);
        return s;
    }

    static PiecewiseConstantSignal constant(Vector v) {
        PiecewiseConstantSignal s;
        s.tail = std::move(v);
        return s;
    }

    Eigen::Index dim() const { return tail.size(); }

    const Vector& at(double t) const {
        if (values.empty() || dt <= 0.0) return tail;
        const double k = std::floor((t - t0) / dt + 1e-12);
        if (k < 0.0) return values.front();
        if (k >= static_cast<double>(values.size())) return tail;
        return values[static_cast<std::size_t>(k)];
    }

    bool is_zero() const {
        if (!tail.isZero(0.0)) return false;
        for (const auto& v : values)
            if (!v.isZero(0.0)) return false;
        return true;
    }

    /// sup-norm of the signal over [0, t].
    double sup_norm(double t) const {
        double m = tail.norm();
        for (std::size_t k = 0; k < values.size(); ++k) {
            if (time_of(k) > t) break;
            m = std::max(m, values[k].norm());
        }
        return m;
    }

    double time_of(std::size_t k) const { return t0 + static_cast<double>(k) * dt; }
};

/// Sampled state/control pair on a uniform grid. Controls are left-aligned:
/// controls[k] acts on [times(k), times(k+1)), so controls has one entry
/// fewer than states.
struct Trajectory {
    double t0 = 0.0;
    double dt = 0.0;
    std::vector<Vector> states;
    std::vector<Vector> controls;

    std::size_t steps() const { return controls.size(); }
    double time(std::size_t k) const { return t0 + static_cast<double>(k) * dt; }
    double t_end() const { return time(states.empty() ? 0 : states.size() - 1); }

    void check() const {
        require(dt > 0.0, "Trajectory: dt must be positive");
        require(!states.empty(), "Trajectory: empty state sequence");
        require(controls.size() + 1 == states.size(),
                "Trajectory: controls must have one entry fewer than states");
    }
};

}  // namespace rmpc
