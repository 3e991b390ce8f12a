#pragma once

// Adaptive Dormand-Prince RK45 for complex linear/nonlinear systems in the
// radial variable, plus a fixed-step RK4 used when the caller owns the grid.

#include <cmath>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "neckflow/errors.hpp"

namespace neckflow {

using Vec = Eigen::VectorXcd;
using Mat = Eigen::MatrixXcd;

struct Trajectory {
    std::vector<double> rho;
    std::vector<Vec> states;
    int steps_accepted = 0;
    int steps_rejected = 0;

    const Vec& back() const { return states.back(); }
};

struct OdeOptions {
    double rtol = 1e-10;
    double atol = 1e-12;
    double h_init = 1e-3;
    double h_min = 1e-14;
    int max_steps = 2000000;
};

// Integrate y' = rhs(rho, y) from span[0] to span[1] (either direction).
inline Trajectory integrate(const std::function<Vec(double, const Vec&)>& rhs,
                            const Vec& y0, double rho0, double rho1,
                            const OdeOptions& opt = {}) {
    // Dormand-Prince 5(4) coefficients.
    static const double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
    static const double a21 = 1.0 / 5;
    static const double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static const double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static const double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187,
                        a53 = 64448.0 / 6561, a54 = -212.0 / 729;
    static const double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                        a64 = 49.0 / 176, a65 = -5103.0 / 18656;
    static const double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                        b5 = -2187.0 / 6784, b6 = 11.0 / 84;
    static const double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                        e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

    double dir = (rho1 >= rho0) ? 1.0 : -1.0;
    double span = std::abs(rho1 - rho0);
    double h = std::min(opt.h_init, span);
    double x = rho0;
    Vec y = y0;

    Trajectory traj;
    traj.rho.push_back(x);
    traj.states.push_back(y);
    if (span == 0) return traj;

    Vec k1 = rhs(x, y);
    for (int it = 0; it < opt.max_steps; ++it) {
        if (std::abs(x - rho0) >= span) break;
        h = std::min(h, span - std::abs(x - rho0));
        double hs = dir * h;

        Vec k2 = rhs(x + c2 * hs, y + hs * (a21 * k1));
        Vec k3 = rhs(x + c3 * hs, y + hs * (a31 * k1 + a32 * k2));
        Vec k4 = rhs(x + c4 * hs, y + hs * (a41 * k1 + a42 * k2 + a43 * k3));
        Vec k5 = rhs(x + c5 * hs, y + hs * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
        Vec k6 = rhs(x + hs, y + hs * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
        Vec y5 = y + hs * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
        Vec k7 = rhs(x + hs, y5);
        Vec err_vec = hs * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);

        double err = 0;
        for (Eigen::Index i = 0; i < y.size(); ++i) {
            double sc = opt.atol + opt.rtol * std::max(std::abs(y[i]), std::abs(y5[i]));
            err = std::max(err, std::abs(err_vec[i]) / sc);
        }

        if (err <= 1.0) {
            x += hs;
            y = y5;
            k1 = k7;  // FSAL
            traj.rho.push_back(x);
            traj.states.push_back(y);
            ++traj.steps_accepted;
        } else {
            ++traj.steps_rejected;
        }

        double fac = 0.9 * std::pow(std::max(err, 1e-10), -0.2);
        h *= std::clamp(fac, 0.2, 5.0);
        if (h < opt.h_min)
            throw numerical_error("integrate: step size underflow at rho=" +
                                  std::to_string(x));
    }
    if (std::abs(x - rho0) < span * (1 - 1e-12))
        throw numerical_error("integrate: max step count exceeded");
    return traj;
}

// Classical RK4 on a caller-supplied grid; records every node.
inline Trajectory integrate_fixed(const std::function<Vec(double, const Vec&)>& rhs,
                                  const Vec& y0, const std::vector<double>& grid) {
    if (grid.size() < 2) throw domain_error("integrate_fixed: need >= 2 grid points");
    Trajectory traj;
    Vec y = y0;
    traj.rho.push_back(grid[0]);
    traj.states.push_back(y);
    for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
        double x = grid[i], h = grid[i + 1] - grid[i];
        Vec k1 = rhs(x, y);
        Vec k2 = rhs(x + h / 2, y + (h / 2) * k1);
        Vec k3 = rhs(x + h / 2, y + (h / 2) * k2);
        Vec k4 = rhs(x + h, y + h * k3);
        y += (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4);
        traj.rho.push_back(grid[i + 1]);
        traj.states.push_back(y);
        ++traj.steps_accepted;
    }
    return traj;
}

inline std::vector<double> linspace(double a, double b, std::size_t n) {
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i)
        out[i] = a + (b - a) * double(i) / double(n - 1);
    return out;
}

}  // namespace neckflow
