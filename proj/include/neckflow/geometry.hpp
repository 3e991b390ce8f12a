#pragma once

// Neck geometry of the long-cylinder gluing: the radius/length scales driven
// by the gluing parameter T, the two boundary profile functions, and the
// five-piece cutoff partition of unity on the rectangle with its gradient
// bound, plus the endpoint cutoffs on the t-axis.

#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "neckflow/errors.hpp"
#include "neckflow/ode.hpp"

namespace neckflow {

struct NeckGeometry {
    double T = 0, r0 = 0;
    double R = 0;           // (e^T + T) / pi
    double half_angle = 0;  // pi T / (e^T + T)
    double ell = 0;         // R sin(half_angle)
    double r = 0;           // r0 + R cos(half_angle)
    double eps = 0;         // 1 / R
};

inline NeckGeometry neck_geometry(double T, double r0) {
    if (!(T > 0)) throw domain_error("neck_geometry: T must be positive");
    if (!(r0 > 0)) throw domain_error("neck_geometry: r0 must be positive");
    NeckGeometry g;
    g.T = T;
    g.r0 = r0;
    g.R = (std::exp(T) + T) / std::numbers::pi;
    g.half_angle = std::numbers::pi * T / (std::exp(T) + T);
    g.ell = g.R * std::sin(g.half_angle);
    g.r = r0 + g.R * std::cos(g.half_angle);
    g.eps = 1.0 / g.R;
    return g;
}

// Distance from the outer edge down to the disk boundary, measured along s.
inline double upsilon(double t, const NeckGeometry& g) {
    if (std::abs(t) > g.R) throw domain_error("upsilon: |t| exceeds R(T)");
    return g.r - std::sqrt(g.R * g.R - t * t);
}

inline double upsilon_tilde(double t, const NeckGeometry& g) {
    if (std::abs(t) > 1.0) throw domain_error("upsilon_tilde: |t| exceeds 1");
    double c = std::cos(g.half_angle);
    return g.r0 + c - std::min(std::sqrt(1.0 - t * t), c);
}

namespace detail {

// quintic smoothstep: 0 below, 1 above, max slope 15/8 at the midpoint;
// satisfies S(x) + S(1-x) = 1, which the endpoint-cutoff blend relies on
inline double smoothstep(double x) {
    if (x <= 0) return 0;
    if (x >= 1) return 1;
    return x * x * x * (10.0 + x * (-15.0 + 6.0 * x));
}

}  // namespace detail

// Analytic evaluators for the five cutoffs on the rectangle s in [-r, r],
// t in [-R, R], plus the endpoint cutoffs on the t axis. The s coordinate
// runs across the neck with the two boundary pieces at s = +-r; the disk of
// radius R sits at the origin. The five cutoffs are built from three
// independent smoothstep profiles (radial for the disk, s-sign, and
// small-strip selector), so their sum telescopes to 1 exactly. Sampled
// partitions and coarser solver grids both evaluate through this object.
struct PartitionProfiles {
    NeckGeometry geo;
    double w = 0;  // collar width shared by all three profiles

    double radial(double s, double t) const {  // disk cutoff, 1 well inside
        return detail::smoothstep((geo.R - std::hypot(s, t)) / w);
    }
    double side(double s) const {  // 1 toward the outer-edge (s > 0) pieces
        return detail::smoothstep(s / w + 0.5);
    }
    double strip(double t) const {  // 1 on the small strip |t| <= ell
        return detail::smoothstep((geo.ell + w - std::abs(t)) / w);
    }
    // i is the 1-based cutoff tag (1..5)
    double eta(int i, double s, double t) const {
        double e2 = radial(s, t), a = side(s), b = strip(t);
        switch (i) {
            case 1: return (1 - e2) * a * (1 - b);
            case 2: return e2;
            case 3: return (1 - e2) * a * b;
            case 4: return (1 - e2) * (1 - a) * (1 - b);
            case 5: return (1 - e2) * (1 - a) * b;
        }
        throw domain_error("PartitionProfiles::eta: tag must be 1..5");
    }
    double chi(double t) const { return detail::smoothstep(geo.R - std::abs(t)); }
    // complementary blend on [R-1, R]: chi + chi_+ + chi_- == 1 there
    double chi_plus(double t) const { return t >= geo.R - 1 ? 1.0 - chi(t) : 0.0; }
    double chi_minus(double t) const { return t <= -(geo.R - 1) ? 1.0 - chi(t) : 0.0; }
    double q() const { return (15.0 / 8.0) * 3.0 / w; }
};

inline PartitionProfiles partition_profiles(const NeckGeometry& g) {
    PartitionProfiles p;
    p.geo = g;
    p.w = 0.45 * (g.R - g.ell);
    return p;
}

// Region tags on the rectangle: 2 is the disk, 3/5 the small strips toward
// the outer edge and the knot side, 1/4 the two large pieces.
inline int region_of(const NeckGeometry& g, double s, double t) {
    if (std::hypot(s, t) <= g.R) return 2;
    if (std::abs(t) <= g.ell) return s > 0 ? 3 : 5;
    return s > 0 ? 1 : 4;
}

struct CutoffPartition {
    std::vector<double> s, t;               // grid axes
    std::array<Eigen::MatrixXd, 5> eta;     // eta[i](is, it)
    std::vector<double> chi, chi_plus, chi_minus;  // on the t axis
    double q = 0;              // analytic gradient bound of the construction
    double grad_measured = 0;  // discrete sup |grad eta_i| over the grid
};

inline CutoffPartition build_partition(const NeckGeometry& g, double ds, double dt) {
    double spacing_cap = std::pow(g.eps, -0.5) / 10.0;
    if (!(ds > 0) || !(dt > 0) || ds > spacing_cap || dt > spacing_cap)
        throw domain_error("build_partition: grid spacing exceeds collar resolution");

    CutoffPartition p;
    auto axis = [](double lo, double hi, double h) {
        std::size_t n = std::size_t(std::ceil((hi - lo) / h)) + 1;
        return linspace(lo, hi, n < 2 ? 2 : n);
    };
    p.s = axis(-g.r, g.r, ds);
    p.t = axis(-g.R, g.R, dt);

    PartitionProfiles prof = partition_profiles(g);

    int ns = int(p.s.size()), nt = int(p.t.size());
    for (auto& m : p.eta) m = Eigen::MatrixXd::Zero(ns, nt);
    for (int i = 0; i < ns; ++i)
        for (int j = 0; j < nt; ++j)
            for (int tag = 1; tag <= 5; ++tag)
                p.eta[tag - 1](i, j) = prof.eta(tag, p.s[i], p.t[j]);

    p.q = prof.q();
    double hs = p.s[1] - p.s[0], ht = p.t[1] - p.t[0];
    for (const auto& m : p.eta) {
        for (int i = 0; i + 1 < ns; ++i)
            for (int j = 0; j < nt; ++j)
                p.grad_measured = std::max(
                    p.grad_measured, std::abs(m(i + 1, j) - m(i, j)) / hs);
        for (int i = 0; i < ns; ++i)
            for (int j = 0; j + 1 < nt; ++j)
                p.grad_measured = std::max(
                    p.grad_measured, std::abs(m(i, j + 1) - m(i, j)) / ht);
    }

    p.chi.resize(nt);
    p.chi_plus.resize(nt);
    p.chi_minus.resize(nt);
    for (int j = 0; j < nt; ++j) {
        double tv = p.t[j];
        p.chi[j] = detail::smoothstep(g.R - std::abs(tv));
        // complementary blend on [R-1, R]: chi + chi_+ + chi_- == 1 there
        p.chi_plus[j] = tv >= g.R - 1 ? 1.0 - p.chi[j] : 0.0;
        p.chi_minus[j] = tv <= -(g.R - 1) ? 1.0 - p.chi[j] : 0.0;
    }
    return p;
}

}  // namespace neckflow
