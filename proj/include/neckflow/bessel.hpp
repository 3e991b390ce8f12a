#pragma once

// Modified Bessel functions I0, I1, K0, K1 (series plus large-argument
// asymptotics) and the cokernel radial analysis: the second-order equation
// h'' = e^{-2rho} R^{-2} (k^2 + l^2) h, its two fundamental branches matched
// to I0(z) and K0(z) at z = sqrt(k^2+l^2) e^{-rho} / R, and the
// square-integrability verdicts for the reconstructed data.

#include <cmath>
#include <vector>

#include "neckflow/errors.hpp"
#include "neckflow/fit.hpp"
#include "neckflow/modes.hpp"
#include "neckflow/ode.hpp"

namespace neckflow {

namespace detail {

constexpr double euler_gamma = 0.57721566490153286;

// K_nu(z) = integral_0^inf e^{-z cosh t} cosh(nu t) dt. The trapezoid rule on
// this analytic, even integrand converges faster than any power of the step,
// so a modest step reaches machine precision; used where the power series
// loses digits to cancellation (z > 6).
inline double bessel_k_quadrature(int nu, double z) {
    const double h = 0.01;
    double sum = 0.5 * std::exp(-z);
    for (int i = 1; i < 4000; ++i) {
        double t = i * h;
        double term = std::exp(-z * std::cosh(t)) * std::cosh(nu * t);
        sum += term;
        if (t > 1.0 && term < 1e-18 * sum) break;
    }
    return sum * h;
}

}  // namespace detail

// Power series sum (z^2/4)^m / (m!)^2. All terms positive, so it is accurate
// for any z we can afford to represent.
inline double bessel_I0(double z) {
    double q = z * z / 4.0, term = 1.0, sum = 1.0;
    for (int m = 1; m <= 400; ++m) {
        term *= q / (double(m) * m);
        sum += term;
        if (term < 1e-18 * sum) break;
    }
    return sum;
}

inline double bessel_I1(double z) {
    double q = z * z / 4.0, term = z / 2.0, sum = term;
    for (int m = 1; m <= 400; ++m) {
        term *= q / (double(m) * (m + 1.0));
        sum += term;
        if (term < 1e-18 * sum) break;
    }
    return sum;
}

inline double bessel_K0(double z) {
    if (z <= 0) throw domain_error("bessel_K0: requires z > 0");
    if (z > 6.0) return detail::bessel_k_quadrature(0, z);
    double q = z * z / 4.0, term = 1.0, sum = 0.0, harmonic = 0.0;
    for (int m = 1; m <= 400; ++m) {
        term *= q / (double(m) * m);
        harmonic += 1.0 / m;
        sum += harmonic * term;
        if (harmonic * term < 1e-18 * (std::abs(sum) + 1.0)) break;
    }
    return -(std::log(z / 2.0) + detail::euler_gamma) * bessel_I0(z) + sum;
}

inline double bessel_K1(double z) {
    if (z <= 0) throw domain_error("bessel_K1: requires z > 0");
    if (z > 6.0) return detail::bessel_k_quadrature(1, z);
    // K1 = ln(z/2) I1 + 1/z - (z/4) sum [psi(m+1)+psi(m+2)] (z^2/4)^m / (m!(m+1)!)
    double q = z * z / 4.0, term = 1.0, sum = 0.0;
    double psi_a = -detail::euler_gamma;        // psi(1)
    double psi_b = 1.0 - detail::euler_gamma;   // psi(2)
    sum = (psi_a + psi_b) * term;
    for (int m = 1; m <= 400; ++m) {
        term *= q / (double(m) * (m + 1.0));
        psi_a += 1.0 / m;
        psi_b += 1.0 / (m + 1.0);
        sum += (psi_a + psi_b) * term;
        if (std::abs((psi_a + psi_b) * term) < 1e-18 * (std::abs(sum) + 1.0)) break;
    }
    return std::log(z / 2.0) * bessel_I1(z) + 1.0 / z - (z / 4.0) * sum;
}

inline double bessel_I0_asymptotic(double z) {
    return std::exp(z) / std::sqrt(2.0 * pi * z);
}

// One fundamental branch of the cokernel radial system, sampled on a common
// rho grid, together with the reconstructed transverse components
// u' = -e^{-2rho} i k h, v' = e^{-2rho} i l h.
struct CokernelBranch {
    std::vector<double> h, dh;       // h(rho) and dh/drho
    std::vector<cplx> u, v;          // reconstructed pair, zero at rho_hi
    double series_deviation = 0;     // max relative gap to the I0/K0 reference
    double tail_rate_h = 0;          // fitted d log|h| / d rho near rho_lo
    double tail_rate_u = 0, tail_rate_v = 0;
    bool integrable_flat = false;        // all of h,u,v in L^2(d rho d theta)
    bool integrable_conformal = false;   // ... in L^2(e^{2rho} d rho d theta)
};

struct CokernelReport {
    int l = 0, k = 0;
    double R = 1;
    std::vector<double> rho;         // increasing grid
    CokernelBranch grow;             // I0-type branch
    CokernelBranch decay;            // K0-type branch
    double wronskian_drift = 0;      // max |h_I dh_K - dh_I h_K - 1|
    double growth_exponent = 0;          // fitted d log h_I / dz at large z
    double growth_exponent_expected = 0; // asymptotic 1 - 1/(2z) there
};

namespace detail {

// Tail exponential rate a in |f| ~ e^{a rho} as rho -> rho_lo, fitted over the
// lowest quarter of the grid. L^2(d rho) needs a > 0, L^2(e^{2rho} d rho)
// needs a > -1; a small margin guards the fit noise.
inline double tail_rate(const std::vector<double>& rho, const std::vector<double>& mag) {
    std::vector<double> xs, ys;
    std::size_t quarter = std::max<std::size_t>(rho.size() / 4, 8);
    for (std::size_t i = 0; i < quarter && i < rho.size(); ++i)
        if (mag[i] > 0) {
            xs.push_back(rho[i]);
            ys.push_back(std::log(mag[i]));
        }
    if (xs.size() < 4) return 1e9;  // identically zero tail: trivially integrable
    return fit_line(xs, ys).slope;
}

}  // namespace detail

inline CokernelReport coker_bessel(int l, int k, double R, double rho_lo, double rho_hi,
                                   int samples = 4001) {
    if (l == 0 && k == 0) throw domain_error("coker_bessel: (l,k) = (0,0) has no Bessel reduction");
    if (!(R > 0)) throw domain_error("coker_bessel: R must be positive");
    if (!(rho_lo < rho_hi)) throw domain_error("coker_bessel: empty rho span");
    if (samples < 16) throw domain_error("coker_bessel: too few samples");

    CokernelReport rep;
    rep.l = l;
    rep.k = k;
    rep.R = R;
    rep.rho = linspace(rho_lo, rho_hi, samples);
    double c = std::sqrt(double(l) * l + double(k) * k) / R;
    auto zof = [&](double rho) { return c * std::exp(-rho); };

    // State (h, h', u, v); h'' = z(rho)^2 h. The growing branch starts from
    // series data at rho_hi (small z) and integrates downward; the decaying
    // branch starts from asymptotic/series data at rho_lo (large z) and
    // integrates upward, so each branch is followed in its stable direction.
    auto rhs = [&](double rho, const Vec& y) -> Vec {
        double z2 = zof(rho) * zof(rho);
        double e2 = std::exp(-2.0 * rho);
        Vec dy(4);
        dy(0) = y(1);
        dy(1) = z2 * y(0);
        dy(2) = -e2 * cplx(0, k) * y(0);
        dy(3) = e2 * cplx(0, l) * y(0);
        return dy;
    };

    auto fill = [&](CokernelBranch& br, bool grow_branch) {
        int n = samples;
        std::vector<double> grid;
        Vec y0(4);
        if (grow_branch) {
            for (int i = n - 1; i >= 0; --i) grid.push_back(rep.rho[i]);
            double z = zof(rho_hi);
            y0 << bessel_I0(z), -z * bessel_I1(z), 0, 0;
        } else {
            grid = rep.rho;
            double z = zof(rho_lo);
            y0 << bessel_K0(z), z * bessel_K1(z), 0, 0;
        }
        auto traj = integrate_fixed(rhs, y0, grid);

        br.h.resize(n);
        br.dh.resize(n);
        br.u.resize(n);
        br.v.resize(n);
        for (int i = 0; i < n; ++i) {
            int at = grow_branch ? n - 1 - i : i;
            br.h[at] = traj.states[i](0).real();
            br.dh[at] = traj.states[i](1).real();
            br.u[at] = traj.states[i](2);
            br.v[at] = traj.states[i](3);
        }
        // re-anchor u, v to vanish at rho_hi so both branches share the gauge
        cplx u_hi = br.u[n - 1], v_hi = br.v[n - 1];
        for (int i = 0; i < n; ++i) {
            br.u[i] -= u_hi;
            br.v[i] -= v_hi;
        }

        for (int i = 0; i < n; ++i) {
            double z = zof(rep.rho[i]);
            double ref = grow_branch ? bessel_I0(z) : bessel_K0(z);
            br.series_deviation =
                std::max(br.series_deviation, std::abs(br.h[i] - ref) / std::abs(ref));
        }

        std::vector<double> hm(n), um(n), vm(n);
        for (int i = 0; i < n; ++i) {
            hm[i] = std::abs(br.h[i]);
            um[i] = std::abs(br.u[i]);
            vm[i] = std::abs(br.v[i]);
        }
        br.tail_rate_h = detail::tail_rate(rep.rho, hm);
        br.tail_rate_u = detail::tail_rate(rep.rho, um);
        br.tail_rate_v = detail::tail_rate(rep.rho, vm);
        double margin = 0.05;
        double worst = std::min({br.tail_rate_h, br.tail_rate_u, br.tail_rate_v});
        br.integrable_flat = worst > margin;
        br.integrable_conformal = worst > -1.0 + margin;
    };

    fill(rep.grow, true);
    fill(rep.decay, false);

    for (int i = 0; i < samples; ++i) {
        double w = rep.grow.h[i] * rep.decay.dh[i] - rep.grow.dh[i] * rep.decay.h[i];
        rep.wronskian_drift = std::max(rep.wronskian_drift, std::abs(w - 1.0));
    }

    // Log-growth of the I0 branch in z over the deepest tenth of the span.
    int win = std::max(samples / 10, 4);
    double z0 = zof(rep.rho[win - 1]), z1 = zof(rep.rho[0]);
    rep.growth_exponent =
        (std::log(rep.grow.h[0]) - std::log(rep.grow.h[win - 1])) / (z1 - z0);
    double zmid = 0.5 * (z0 + z1);
    rep.growth_exponent_expected = 1.0 - 1.0 / (2.0 * zmid);
    return rep;
}

}  // namespace neckflow
