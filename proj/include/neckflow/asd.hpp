#pragma once

// The abelian anti-self-dual equation in radial gauge on the neck end:
// per-mode ODE systems, their 2x2 reductions and eigenvalues, the
// finite-energy solution families, radial limits, and the gauge
// transformation that flattens a flat connection in s and t.

#include <cmath>
#include <complex>
#include <functional>
#include <map>

#include <Eigen/Dense>

#include "neckflow/errors.hpp"
#include "neckflow/modes.hpp"
#include "neckflow/ode.hpp"

namespace neckflow {

using Mat3 = Eigen::Matrix3cd;
using Mat2 = Eigen::Matrix2cd;
using Vec3 = Eigen::Vector3cd;
using Vec2 = Eigen::Vector2cd;

inline const cplx I{0.0, 1.0};

// Mode system for (u, v, f) = (e^rho a_x, e^rho a_y, f).
inline Mat3 asd_matrix(ModeIndex m, double rho) {
    double er = std::exp(rho);
    Mat3 A;
    A << 1.0, -I * double(m.n), I * double(m.k) * er,
         I * double(m.n), 1.0, -I * double(m.l) * er,
         I * double(m.k) * er, -I * double(m.l) * er, 0.0;
    return A;
}

// Same system in the unscaled variables (a_x, a_y, f); the two matrices are
// conjugate under diag(e^rho, e^rho, 1) plus the derivative of the scaling.
inline Mat3 asd_matrix_avars(ModeIndex m, double rho) {
    double e2r = std::exp(2 * rho);
    Mat3 A;
    A << 0.0, -I * double(m.n), I * double(m.k),
         I * double(m.n), 0.0, -I * double(m.l),
         I * double(m.k) * e2r, -I * double(m.l) * e2r, 0.0;
    return A;
}

struct LeadingEigen {
    cplx lambda_plus, lambda_minus;
    Vec2 U_plus, U_minus;
};

// Reduced 2x2 system in the variables (nu, phi) after dividing out the
// rho-constant solution direction.
inline Mat2 reduced_system_matrix(ModeIndex m, double rho) {
    if (m.l == 0 && m.k == 0)
        throw domain_error("reduced_system_matrix: (l,k)=(0,0) is the constant-coefficient branch");
    double er = std::exp(rho);
    double n = m.n, l = m.l, k = m.k;
    Mat2 A;
    if (m.l != 0) {
        A << (I * n * k + l) / l, -I * (k * k + l * l) * er / l,
             I * (n * n / er - l * l * er) / l, -I * n * k / l;
    } else {
        A << 1.0, I * k * er,
             -I * n * n / (k * er) + I * k * er, 0.0;
    }
    return A;
}

inline Mat2 reduced_leading_matrix(ModeIndex m, double rho) {
    if (m.l == 0 && m.k == 0)
        throw domain_error("reduced_leading_matrix: degenerate (l,k)");
    double er = std::exp(rho);
    double l = m.l, k = m.k;
    Mat2 L;
    if (m.l != 0) {
        L << 0.0, -I * (k * k + l * l) * er / l,
             -I * l * er, 0.0;
    } else {
        L << 0.0, I * k * er,
             I * k * er, 0.0;
    }
    return L;
}

inline LeadingEigen leading_eigenvalues(int l, int k, double rho) {
    if (l == 0 && k == 0)
        throw domain_error("leading_eigenvalues: (l,k)=(0,0); use the constant-coefficient branch");
    double er = std::exp(rho);
    double root = std::sqrt(double(k) * k + double(l) * l);
    LeadingEigen out;
    out.lambda_plus = I * er * root;
    out.lambda_minus = -I * er * root;
    if (l != 0) {
        out.U_plus = Vec2(1.0, l / root);
        out.U_minus = Vec2(1.0, -l / root);
    } else {
        out.U_plus = Vec2(1.0, 1.0);
        out.U_minus = Vec2(1.0, -1.0);
    }
    return out;
}

inline std::pair<cplx, cplx> perturbed_eigenvalues(ModeIndex m, double rho) {
    if (m.l == 0 && m.k == 0)
        throw domain_error("perturbed_eigenvalues: degenerate (l,k)");
    double e2r = std::exp(2 * rho);
    double n = m.n, l = m.l, k = m.k;
    cplx disc;
    if (m.l != 0)
        disc = 1.0 - 4.0 * (e2r * (k * k + l * l) - n * n - I * n * k / l);
    else
        disc = 1.0 - 4.0 * (k * k * e2r - n * n);
    cplx root = std::sqrt(disc);
    return {(1.0 + root) / 2.0, (1.0 - root) / 2.0};
}

// Closed-form solution of the constant-coefficient (l,k)=(0,0) branch:
// eigenvectors (1, i) and (1, -i) of [[1,-in],[in,1]] with rates 1+n, 1-n.
inline Vec3 constant_mode_solution(int n, cplx c1, cplx c2, cplx c3, double rho) {
    cplx ep = std::exp(cplx((1.0 + n) * rho));
    cplx em = std::exp(cplx((1.0 - n) * rho));
    return Vec3(c1 * ep + c2 * em, I * c1 * ep - I * c2 * em, c3);
}

// Finite-energy family on the end: constants, theta-decaying terms, and the
// rho-constant disk coefficients c_{nlk}.
struct AsdFiniteEnergyFamily {
    cplx u0{}, v0{}, f0{};
    std::map<int, cplx> u_decay;          // u_n for n != 0; v_n = -i sgn(n) u_n
    std::map<ModeIndex, cplx> c;          // c_{nlk}

    // The decaying terms solve the radial equations only in the pairing
    // v_n = -i sgn(n) u_n, which also preserves the reality constraint.
    void set_decay_pair(int n, cplx un) {
        if (n == 0) throw domain_error("set_decay_pair: n must be nonzero");
        u_decay[n] = un;
        u_decay[-n] = -std::conj(un);
    }

    void set_disk_pair(ModeIndex m, cplx val) {
        c[m] = val;
        c[-m] = -std::conj(val);
    }

    struct Reality {
        bool ok;
        double worst;
    };
    Reality reality() const {
        double worst = 0;
        for (const auto& [n, un] : u_decay) {
            auto it = u_decay.find(-n);
            cplx other = it == u_decay.end() ? cplx{} : it->second;
            worst = std::max(worst, std::abs(un + std::conj(other)));
        }
        for (const auto& [m, cm] : c) {
            auto it = c.find(-m);
            cplx other = it == c.end() ? cplx{} : it->second;
            worst = std::max(worst, std::abs(cm + std::conj(other)));
        }
        return {worst <= 1e-12, worst};
    }

    // Truncated surrogate of the summability constraint.
    double energy_sum() const {
        double acc = 0;
        for (const auto& [n, un] : u_decay) acc += std::norm(double(n) * un);
        for (const auto& [m, cm] : c) {
            double w = double(m.n) * m.n + double(m.l) * m.l + double(m.k) * m.k;
            acc += std::norm(w * cm);
        }
        return acc;
    }
};

struct AsdEval {
    cplx ax{}, ay{}, f{};
};

inline AsdEval finite_energy_evaluate(const AsdFiniteEnergyFamily& fam, double x,
                                      double y, double rho, double theta) {
    AsdEval out;
    out.ax = fam.u0;
    out.ay = fam.v0;
    out.f = fam.f0;
    for (const auto& [n, un] : fam.u_decay) {
        cplx ph = std::exp(cplx(-std::abs(n) * rho, n * theta));
        out.ax += un * ph;
        out.ay += -I * double(n > 0 ? 1 : -1) * un * ph;
    }
    for (const auto& [m, cm] : fam.c) {
        cplx ph = std::exp(I * (m.l * x + m.k * y + m.n * theta));
        out.ax += double(m.l) * cm * ph;
        out.ay += double(m.k) * cm * ph;
        out.f += double(m.n) * cm * ph;
    }
    return out;
}

// Variant without the theta-decaying terms (the family that extends over the
// whole disk), and the decaying-only variant with constant f.
inline AsdEval finite_energy_evaluate_disk(const AsdFiniteEnergyFamily& fam, double x,
                                           double y, double theta) {
    AsdFiniteEnergyFamily g = fam;
    g.u_decay.clear();
    return finite_energy_evaluate(g, x, y, 0.0, theta);
}

struct RadialLimit {
    // mode coefficients of a_inf - (u0 dx + v0 dy) and of gamma
    std::map<ModeIndex, cplx> ax_modes, ay_modes, f_modes, gamma_modes;
    double exactness = 0;  // worst |d gamma - (a_inf - const)| over modes
};

inline RadialLimit radial_limit(const AsdFiniteEnergyFamily& fam) {
    RadialLimit out;
    for (const auto& [m, cm] : fam.c) {
        out.ax_modes[m] = double(m.l) * cm;
        out.ay_modes[m] = double(m.k) * cm;
        out.f_modes[m] = double(m.n) * cm;
        out.gamma_modes[m] = -I * cm;
    }
    // d_{T^2} gamma has x-component il * gamma_m and y-component ik * gamma_m.
    for (const auto& [m, g] : out.gamma_modes) {
        out.exactness = std::max(out.exactness,
                                 std::abs(I * double(m.l) * g - out.ax_modes[m]));
        out.exactness = std::max(out.exactness,
                                 std::abs(I * double(m.k) * g - out.ay_modes[m]));
    }
    return out;
}

// Pointwise residual of the radial-gauge equations on a family evaluation.
// T^2 and theta derivatives are exact (term-by-term); the rho derivative is
// a Richardson-extrapolated central difference.
inline double radial_residual(const AsdFiniteEnergyFamily& fam, double x, double y,
                              double rho, double theta, double h = 1e-4) {
    struct D {
        cplx dth_ax{}, dth_ay{}, dx_f{}, dy_f{}, dx_ay{}, dy_ax{};
    } d;
    for (const auto& [n, un] : fam.u_decay) {
        cplx ph = std::exp(cplx(-std::abs(n) * rho, n * theta));
        cplx vn = -I * double(n > 0 ? 1 : -1) * un;
        d.dth_ax += I * double(n) * un * ph;
        d.dth_ay += I * double(n) * vn * ph;
    }
    for (const auto& [m, cm] : fam.c) {
        cplx ph = std::exp(I * (m.l * x + m.k * y + m.n * theta));
        cplx axm = double(m.l) * cm, aym = double(m.k) * cm, fm = double(m.n) * cm;
        d.dth_ax += I * double(m.n) * axm * ph;
        d.dth_ay += I * double(m.n) * aym * ph;
        d.dx_f += I * double(m.l) * fm * ph;
        d.dy_f += I * double(m.k) * fm * ph;
        d.dx_ay += I * double(m.l) * aym * ph;
        d.dy_ax += I * double(m.k) * axm * ph;
    }

    auto drho = [&](auto pick) {
        auto central = [&](double step) {
            AsdEval p = finite_energy_evaluate(fam, x, y, rho + step, theta);
            AsdEval q = finite_energy_evaluate(fam, x, y, rho - step, theta);
            return (pick(p) - pick(q)) / (2 * step);
        };
        cplx ch = central(h), ch2 = central(h / 2);
        return (4.0 * ch2 - ch) / 3.0;
    };
    cplx r1x = drho([](const AsdEval& e) { return e.ax; }) - (-d.dth_ay + d.dy_f);
    cplx r1y = drho([](const AsdEval& e) { return e.ay; }) - (d.dth_ax - d.dx_f);
    cplx r2 = drho([](const AsdEval& e) { return e.f; }) -
              std::exp(2 * rho) * (d.dy_ax - d.dx_ay);
    return std::max({std::abs(r1x), std::abs(r1y), std::abs(r2)});
}

inline Trajectory integrate_asd(ModeIndex m, const Vec3& y0, double rho0, double rho1,
                                const OdeOptions& opt = {}) {
    auto rhs = [m](double rho, const Vec& y) -> Vec {
        return asd_matrix(m, rho) * y;
    };
    return integrate(rhs, y0, rho0, rho1, opt);
}

// ---------------------------------------------------------------------------
// Gauge flattening on a (x, y, s, t) grid.

struct GaugeField {
    std::size_t nx = 0, ny = 0;
    std::vector<double> s, t;
    // index ((ix*ny + iy)*ns + is)*nt + it
    std::vector<cplx> ax, ay, f, h;

    GaugeField() = default;
    GaugeField(std::size_t nx_, std::size_t ny_, std::vector<double> s_,
               std::vector<double> t_)
        : nx(nx_), ny(ny_), s(std::move(s_)), t(std::move(t_)) {
        std::size_t total = nx * ny * s.size() * t.size();
        ax.assign(total, {});
        ay.assign(total, {});
        f.assign(total, {});
        h.assign(total, {});
    }

    std::size_t idx(std::size_t ix, std::size_t iy, std::size_t is,
                    std::size_t it) const {
        return ((ix * ny + iy) * s.size() + is) * t.size() + it;
    }
};

struct FlattenResult {
    GaugeField transformed;
    std::vector<cplx> lambda;
    double max_ds = 0, max_dt = 0;   // discrete derivatives of the T^2 part
    double flatness_residual = 0;
};

// lambda = exp(-i int_{r0}^s h dsigma - i int_0^t f(., tau, r0) dtau); the
// transformed connection a - i d_{T^2} Phi is constant in s and t up to the
// trapezoid error of the accumulated integrals.
inline FlattenResult flatten_gauge(const GaugeField& in, double tol = 1e-6) {
    const std::size_t nx = in.nx, ny = in.ny, ns = in.s.size(), nt = in.t.size();
    if (nx < 4 || ny < 4 || ns < 3 || nt < 3)
        throw domain_error("flatten_gauge: grid too small");
    const double hx = 2 * pi / nx, hy = 2 * pi / ny;

    auto dx = [&](const std::vector<cplx>& g, std::size_t ix, std::size_t iy,
                  std::size_t is, std::size_t it) {
        return (g[in.idx((ix + 1) % nx, iy, is, it)] -
                g[in.idx((ix + nx - 1) % nx, iy, is, it)]) / (2 * hx);
    };
    auto dy = [&](const std::vector<cplx>& g, std::size_t ix, std::size_t iy,
                  std::size_t is, std::size_t it) {
        return (g[in.idx(ix, (iy + 1) % ny, is, it)] -
                g[in.idx(ix, (iy + ny - 1) % ny, is, it)]) / (2 * hy);
    };
    auto dgrid = [&](const std::vector<cplx>& g, const std::vector<double>& ax_,
                     int axis, std::size_t ix, std::size_t iy, std::size_t is,
                     std::size_t it) {
        // central in the interior, one-sided at the ends, on s (axis 0) or t
        std::size_t m = axis == 0 ? is : it;
        std::size_t nmax = ax_.size() - 1;
        auto at = [&](std::size_t q) {
            return axis == 0 ? g[in.idx(ix, iy, q, it)] : g[in.idx(ix, iy, is, q)];
        };
        if (m == 0) return (at(1) - at(0)) / (ax_[1] - ax_[0]);
        if (m == nmax) return (at(nmax) - at(nmax - 1)) / (ax_[nmax] - ax_[nmax - 1]);
        return (at(m + 1) - at(m - 1)) / (ax_[m + 1] - ax_[m - 1]);
    };

    // Flatness system: F_a = 0, d_t a = d_{T^2}(i f), d_s a = d_{T^2}(i h),
    // d_t h = d_s f, checked in discrete form.
    double res = 0;
    for (std::size_t ix = 0; ix < nx; ++ix)
        for (std::size_t iy = 0; iy < ny; ++iy)
            for (std::size_t is = 0; is < ns; ++is)
                for (std::size_t it = 0; it < nt; ++it) {
                    res = std::max(res, std::abs(dx(in.ay, ix, iy, is, it) -
                                                 dy(in.ax, ix, iy, is, it)));
                    res = std::max(res, std::abs(dgrid(in.ax, in.t, 1, ix, iy, is, it) -
                                                 I * dx(in.f, ix, iy, is, it)));
                    res = std::max(res, std::abs(dgrid(in.ay, in.t, 1, ix, iy, is, it) -
                                                 I * dy(in.f, ix, iy, is, it)));
                    res = std::max(res, std::abs(dgrid(in.ax, in.s, 0, ix, iy, is, it) -
                                                 I * dx(in.h, ix, iy, is, it)));
                    res = std::max(res, std::abs(dgrid(in.ay, in.s, 0, ix, iy, is, it) -
                                                 I * dy(in.h, ix, iy, is, it)));
                    res = std::max(res, std::abs(dgrid(in.h, in.t, 1, ix, iy, is, it) -
                                                 dgrid(in.f, in.s, 0, ix, iy, is, it)));
                }
    if (res > tol)
        throw domain_error("flatten_gauge: flatness residual " + std::to_string(res) +
                           " exceeds tolerance");

    FlattenResult out;
    out.flatness_residual = res;
    out.transformed = in;
    out.lambda.assign(in.ax.size(), cplx{});

    std::vector<cplx> phi(in.ax.size(), cplx{});
    for (std::size_t ix = 0; ix < nx; ++ix)
        for (std::size_t iy = 0; iy < ny; ++iy) {
            for (std::size_t it = 0; it < nt; ++it) {
                cplx acc = 0;
                // int_0^t f(., tau, r0) dtau along the first s slice
                for (std::size_t q = 0; q + 1 <= it; ++q) {
                    if (q + 1 > nt - 1) break;
                    acc += 0.5 * (in.f[in.idx(ix, iy, 0, q)] +
                                  in.f[in.idx(ix, iy, 0, q + 1)]) *
                           (in.t[q + 1] - in.t[q]);
                }
                cplx acc_t = acc;
                cplx acc_s = 0;
                phi[in.idx(ix, iy, 0, it)] = acc_t;
                for (std::size_t is = 1; is < ns; ++is) {
                    acc_s += 0.5 * (in.h[in.idx(ix, iy, is - 1, it)] +
                                    in.h[in.idx(ix, iy, is, it)]) *
                             (in.s[is] - in.s[is - 1]);
                    phi[in.idx(ix, iy, is, it)] = acc_t + acc_s;
                }
            }
        }

    for (std::size_t ix = 0; ix < nx; ++ix)
        for (std::size_t iy = 0; iy < ny; ++iy)
            for (std::size_t is = 0; is < ns; ++is)
                for (std::size_t it = 0; it < nt; ++it) {
                    std::size_t q = in.idx(ix, iy, is, it);
                    out.lambda[q] = std::exp(-I * phi[q]);
                    out.transformed.ax[q] = in.ax[q] - I * dx(phi, ix, iy, is, it);
                    out.transformed.ay[q] = in.ay[q] - I * dy(phi, ix, iy, is, it);
                    out.transformed.f[q] = in.f[q] - dgrid(phi, in.t, 1, ix, iy, is, it);
                    out.transformed.h[q] = in.h[q] - dgrid(phi, in.s, 0, ix, iy, is, it);
                }

    for (std::size_t ix = 0; ix < nx; ++ix)
        for (std::size_t iy = 0; iy < ny; ++iy)
            for (std::size_t is = 1; is + 1 < ns; ++is)
                for (std::size_t it = 1; it + 1 < nt; ++it) {
                    out.max_ds = std::max(
                        {out.max_ds,
                         std::abs(dgrid(out.transformed.ax, in.s, 0, ix, iy, is, it)),
                         std::abs(dgrid(out.transformed.ay, in.s, 0, ix, iy, is, it))});
                    out.max_dt = std::max(
                        {out.max_dt,
                         std::abs(dgrid(out.transformed.ax, in.t, 1, ix, iy, is, it)),
                         std::abs(dgrid(out.transformed.ay, in.t, 1, ix, iy, is, it))});
                }
    return out;
}

}  // namespace neckflow
