#include <catch2/catch_amalgamated.hpp>

#include <random>

#include <unsupported/Eigen/MatrixFunctions>

#include "neckflow/asd.hpp"
#include "neckflow/fit.hpp"

using namespace neckflow;

static void require_multiset_close(std::vector<cplx> a, std::vector<cplx> b, double tol) {
    REQUIRE(a.size() == b.size());
    for (cplx x : a) {
        double best = 1e300;
        std::size_t arg = 0;
        for (std::size_t j = 0; j < b.size(); ++j)
            if (std::abs(x - b[j]) < best) {
                best = std::abs(x - b[j]);
                arg = j;
            }
        REQUIRE(best < tol);
        b.erase(b.begin() + arg);
    }
}

TEST_CASE("asd matrix spot values") {
    Mat3 A = asd_matrix({0, 0, 0}, 1.7);
    Mat3 E;
    E << 1, 0, 0, 0, 1, 0, 0, 0, 0;
    REQUIRE((A - E).norm() < 1e-15);

    Mat3 B = asd_matrix({1, 1, 0}, 0.0);
    Mat3 EB;
    EB << 1.0, -I, 0.0, I, 1.0, -I, 0.0, -I, 0.0;
    REQUIRE((B - EB).norm() < 1e-15);

    Mat3 C = asd_matrix({0, 0, 1}, std::log(2.0));
    Mat3 EC;
    EC << 1.0, 0.0, 2.0 * I, 0.0, 1.0, 0.0, 2.0 * I, 0.0, 0.0;
    REQUIRE((C - EC).norm() < 1e-15);
}

TEST_CASE("leading eigenvalue spot values") {
    auto e1 = leading_eigenvalues(1, 0, 0.0);
    REQUIRE(std::abs(e1.lambda_plus - I) < 1e-14);
    auto e2 = leading_eigenvalues(3, 4, 0.0);
    REQUIRE(std::abs(e2.lambda_plus - 5.0 * I) < 1e-14);
    auto e3 = leading_eigenvalues(1, 1, std::log(2.0));
    REQUIRE(std::abs(e3.lambda_plus - 2.0 * std::sqrt(2.0) * I) < 1e-13);
    REQUIRE_THROWS_AS(leading_eigenvalues(0, 0, 0.0), domain_error);
}

TEST_CASE("leading eigenvalues match reduced-system eigensolve") {
    std::mt19937_64 rng(101);
    std::uniform_int_distribution<int> freq(-6, 6);
    std::uniform_real_distribution<double> rd(-1.0, 2.0);
    int done = 0;
    while (done < 100) {
        int l = freq(rng), k = freq(rng);
        if (l == 0 && k == 0) continue;
        double rho = rd(rng);
        auto lead = leading_eigenvalues(l, k, rho);
        Eigen::ComplexEigenSolver<Mat2> es(reduced_leading_matrix({0, l, k}, rho));
        require_multiset_close({lead.lambda_plus, lead.lambda_minus},
                               {es.eigenvalues()(0), es.eigenvalues()(1)}, 1e-10);
        ++done;
    }
}

TEST_CASE("perturbed eigenvalue formulas") {
    auto [lp, lm] = perturbed_eigenvalues({0, 1, 0}, -20.0);
    REQUIRE(std::abs(lp - 1.0) < 1e-8);
    REQUIRE(std::abs(lm) < 1e-8);

    auto [lp0, lm0] = perturbed_eigenvalues({0, 1, 0}, 0.0);
    REQUIRE(std::abs(lp0 - cplx(0.5, std::sqrt(3.0) / 2)) < 1e-14);
    REQUIRE(std::abs(lm0 - cplx(0.5, -std::sqrt(3.0) / 2)) < 1e-14);

    auto [lp1, lm1] = perturbed_eigenvalues({1, 0, 1}, 0.0);
    REQUIRE(std::abs(lp1 - 1.0) < 1e-14);
    REQUIRE(std::abs(lm1) < 1e-14);

    REQUIRE_THROWS_AS(perturbed_eigenvalues({1, 0, 0}, 0.0), domain_error);
}

TEST_CASE("perturbed eigenvalues equal reduced-system spectrum") {
    std::mt19937_64 rng(202);
    std::uniform_int_distribution<int> freq(-5, 5);
    std::uniform_real_distribution<double> rd(-1.0, 1.5);
    int done = 0;
    while (done < 60) {
        ModeIndex m{freq(rng), freq(rng), freq(rng)};
        if (m.l == 0 && m.k == 0) continue;
        double rho = rd(rng);
        auto [lp, lm] = perturbed_eigenvalues(m, rho);
        Eigen::ComplexEigenSolver<Mat2> es(reduced_system_matrix(m, rho));
        require_multiset_close({lp, lm}, {es.eigenvalues()(0), es.eigenvalues()(1)},
                               1e-10);
        ++done;
    }
}

TEST_CASE("constant-coefficient closed form solves the system") {
    for (int n : {-2, -1, 0, 1, 3}) {
        cplx c1(0.4, -0.2), c2(-0.1, 0.9), c3(0.3, 0.3);
        Vec3 y0 = constant_mode_solution(n, c1, c2, c3, 0.0);
        auto rhs = [n](double, const Vec& y) -> Vec {
            Mat3 A;
            A << 1.0, -I * double(n), 0.0, I * double(n), 1.0, 0.0, 0.0, 0.0, 0.0;
            return A * y;
        };
        auto traj = integrate(rhs, y0, 0.0, 0.8);
        Vec3 expect = constant_mode_solution(n, c1, c2, c3, 0.8);
        REQUIRE((traj.back() - expect).norm() < 1e-8 * expect.norm());
    }
}

TEST_CASE("integrate_asd trivial modes") {
    auto t1 = integrate_asd({0, 0, 0}, Vec3(1, 0, 0), 0.0, 1.5);
    REQUIRE(std::abs(t1.back()(0) - std::exp(1.5)) < 1e-8);
    REQUIRE(std::abs(t1.back()(1)) < 1e-10);

    auto t2 = integrate_asd({0, 0, 0}, Vec3(0, 0, 1), 0.0, 2.0);
    REQUIRE((t2.back() - Vec3(0, 0, 1)).norm() < 1e-12);
}

TEST_CASE("integrate_asd matches product-integration oracle") {
    ModeIndex m{0, 1, 0};
    Vec3 y0(0.2, -0.4, 0.6);
    auto traj = integrate_asd(m, y0, 0.0, 1.0);

    const int steps = 10000;
    Mat3 P = Mat3::Identity();
    double h = 1.0 / steps;
    for (int i = 0; i < steps; ++i) {
        double mid = (i + 0.5) * h;
        P = (asd_matrix(m, mid) * h).exp() * P;
    }
    Vec3 oracle = P * y0;
    REQUIRE((traj.back() - oracle).norm() < 1e-7);
}

TEST_CASE("generic growth is e^rho, reduced stable directions grow slower") {
    // The full 3x3 system carries the rho-constant family (l e^rho, k e^rho, n),
    // so generic data grows like e^rho.  In the reduced (nu, phi) variables the
    // trace is 1 and the two oscillatory solutions share amplitude e^{rho/2};
    // the printed amplitude e^rho describes the back-transformed full vector.
    ModeIndex m{1, 1, 1};
    Vec3 y0(0.3, 0.7, -0.2);
    auto traj = integrate_asd(m, y0, 3.0, 5.5);
    std::vector<double> rho, nrm;
    for (std::size_t i = 0; i < traj.rho.size(); i += std::max<std::size_t>(1, traj.rho.size() / 200)) {
        rho.push_back(traj.rho[i]);
        nrm.push_back(std::log(traj.states[i].norm()));
    }
    auto fit = fit_line(rho, nrm);
    REQUIRE(fit.slope == Catch::Approx(1.0).epsilon(0.05));

    auto rhs = [m](double r, const Vec& y) -> Vec { return reduced_system_matrix(m, r) * y; };
    auto rtraj = integrate(rhs, Vec2(0.4, -0.3), 3.0, 5.5);
    std::vector<double> rr, rn;
    for (std::size_t i = 0; i < rtraj.rho.size(); i += std::max<std::size_t>(1, rtraj.rho.size() / 200)) {
        rr.push_back(rtraj.rho[i]);
        rn.push_back(std::log(rtraj.states[i].norm()));
    }
    auto rfit = fit_line(rr, rn);
    REQUIRE(rfit.slope < 0.55);
}

TEST_CASE("finite-energy family constants only") {
    AsdFiniteEnergyFamily fam;
    fam.u0 = I;
    auto e = finite_energy_evaluate(fam, 0.3, 1.2, 0.5, -0.7);
    REQUIRE(std::abs(e.ax - I) < 1e-15);
    REQUIRE(std::abs(e.ay) < 1e-15);
    REQUIRE(std::abs(e.f) < 1e-15);
}

TEST_CASE("finite-energy family satisfies the radial equations") {
    AsdFiniteEnergyFamily fam;
    fam.u0 = I;
    fam.v0 = cplx(0, -0.4);
    fam.f0 = cplx(0, 0.2);
    fam.set_decay_pair(1, cplx(0, 1));
    fam.set_decay_pair(2, cplx(0.3, 0.1));
    fam.set_disk_pair({0, 1, 0}, I);
    fam.set_disk_pair({1, 1, -1}, cplx(0.2, 0.5));
    REQUIRE(fam.reality().ok);

    std::mt19937_64 rng(303);
    std::uniform_real_distribution<double> ang(-pi, pi);
    std::uniform_real_distribution<double> rr(0.2, 2.0);
    for (int i = 0; i < 25; ++i) {
        double res = radial_residual(fam, ang(rng), ang(rng), rr(rng), ang(rng) / 2);
        REQUIRE(res < 1e-8);
    }
}

TEST_CASE("finen-type solutions have constant f") {
    AsdFiniteEnergyFamily fam;
    fam.f0 = cplx(0, 0.7);
    fam.set_decay_pair(1, cplx(0.1, 0.4));
    for (double rho : {0.1, 0.8, 1.7}) {
        auto e1 = finite_energy_evaluate(fam, 0.0, 0.0, rho, 0.3);
        REQUIRE(std::abs(e1.f - fam.f0) < 1e-15);
    }
}

TEST_CASE("disk coefficient example") {
    AsdFiniteEnergyFamily fam;
    fam.c[{0, 1, 0}] = I;
    auto e = finite_energy_evaluate(fam, 0.7, 0.0, 1.0, 0.0);
    REQUIRE(std::abs(e.ax - I * std::exp(I * 0.7)) < 1e-15);
    REQUIRE(std::abs(e.f) < 1e-15);
}

TEST_CASE("radial limit and gauge potential") {
    AsdFiniteEnergyFamily fam;
    fam.u0 = cplx(0, 0.3);
    auto lim0 = radial_limit(fam);
    REQUIRE(lim0.gamma_modes.empty());
    REQUIRE(lim0.exactness == 0.0);

    fam.c[{0, 1, 0}] = 1.0;
    auto lim = radial_limit(fam);
    REQUIRE(std::abs(lim.gamma_modes[{0, 1, 0}] + I) < 1e-15);
    REQUIRE(std::abs(lim.ax_modes[{0, 1, 0}] - 1.0) < 1e-15);
    REQUIRE(lim.exactness < 1e-14);

    // decaying terms do not affect the limit
    AsdFiniteEnergyFamily fam2 = fam;
    fam2.set_decay_pair(3, cplx(0.5, -0.5));
    auto lim2 = radial_limit(fam2);
    REQUIRE(lim2.ax_modes.size() == lim.ax_modes.size());
}

// --- gauge flattening -------------------------------------------------------

namespace {

// Constant connection gauged by lambda = exp(-i Phi) with Phi vanishing on
// the anchor slice s = s[0], t = 0.
GaugeField gauged_constant(std::size_t nx, std::size_t ny, std::size_t ns,
                           std::size_t nt, cplx a0x, cplx a0y) {
    GaugeField g(nx, ny, linspace(1.0, 2.0, ns), linspace(0.0, 1.0, nt));
    auto phi = [](double x, double y, double s, double t) {
        double q = 0.3 * std::sin(x) + 0.2 * std::cos(x + y);
        double gst = std::sin(0.7 * (s - 1.0)) + 0.8 * (1 - std::cos(0.5 * t));
        return q * gst;
    };
    auto phix = [&](double x, double y, double s, double t) {
        double dq = 0.3 * std::cos(x) - 0.2 * std::sin(x + y);
        double gst = std::sin(0.7 * (s - 1.0)) + 0.8 * (1 - std::cos(0.5 * t));
        return dq * gst;
    };
    auto phiy = [&](double x, double y, double s, double t) {
        double dq = -0.2 * std::sin(x + y);
        double gst = std::sin(0.7 * (s - 1.0)) + 0.8 * (1 - std::cos(0.5 * t));
        return dq * gst;
    };
    auto phis = [&](double x, double y, double s, double) {
        double q = 0.3 * std::sin(x) + 0.2 * std::cos(x + y);
        return q * 0.7 * std::cos(0.7 * (s - 1.0));
    };
    auto phit = [&](double x, double y, double, double t) {
        double q = 0.3 * std::sin(x) + 0.2 * std::cos(x + y);
        return q * 0.4 * std::sin(0.5 * t);
    };
    (void)phi;
    for (std::size_t ix = 0; ix < nx; ++ix)
        for (std::size_t iy = 0; iy < ny; ++iy)
            for (std::size_t is = 0; is < ns; ++is)
                for (std::size_t it = 0; it < nt; ++it) {
                    double x = 2 * pi * ix / nx, y = 2 * pi * iy / ny;
                    double s = g.s[is], t = g.t[it];
                    std::size_t q = g.idx(ix, iy, is, it);
                    g.ax[q] = a0x + I * phix(x, y, s, t);
                    g.ay[q] = a0y + I * phiy(x, y, s, t);
                    g.f[q] = phit(x, y, s, t);
                    g.h[q] = phis(x, y, s, t);
                }
    return g;
}

}  // namespace

TEST_CASE("flatten_gauge leaves trivial input unchanged") {
    GaugeField g(4, 4, linspace(1.0, 2.0, 5), linspace(0.0, 1.0, 5));
    auto res = flatten_gauge(g, 1e-10);
    for (cplx l : res.lambda) REQUIRE(std::abs(l - 1.0) < 1e-15);
    REQUIRE(res.max_ds < 1e-14);
    REQUIRE(res.max_dt < 1e-14);
}

TEST_CASE("flatten_gauge rejects non-flat input") {
    GaugeField g(4, 4, linspace(1.0, 2.0, 5), linspace(0.0, 1.0, 5));
    for (std::size_t q = 0; q < g.h.size(); ++q) g.h[q] = std::sin(double(q));
    REQUIRE_THROWS_AS(flatten_gauge(g, 1e-6), domain_error);
}

TEST_CASE("flatten_gauge reconstructs the constant connection at order 2") {
    cplx a0x(0, 0.7), a0y(0, -0.3);
    std::vector<double> ds_norm, dt_norm, err;
    for (std::size_t n : {8u, 16u, 32u}) {
        auto g = gauged_constant(n, n, n + 1, n + 1, a0x, a0y);
        auto res = flatten_gauge(g, 1.0);  // coarse-grid discrete flatness is O(h^2)
        ds_norm.push_back(res.max_ds);
        dt_norm.push_back(res.max_dt);
        double worst = 0;
        for (std::size_t q = 0; q < res.transformed.ax.size(); ++q) {
            worst = std::max(worst, std::abs(res.transformed.ax[q] - a0x));
            worst = std::max(worst, std::abs(res.transformed.ay[q] - a0y));
        }
        err.push_back(worst);
    }
    for (int i = 0; i < 2; ++i) {
        REQUIRE(ds_norm[i + 1] < ds_norm[i] / 3.2);
        REQUIRE(dt_norm[i + 1] < dt_norm[i] / 3.2);
        REQUIRE(err[i + 1] < err[i] / 3.2);
    }
}

TEST_CASE("flatten_gauge with analytic single-mode gauge") {
    // a = a0 + i t d_{T^2} g, f = g(x,y), h = 0; lambda = exp(-i t g).
    std::size_t nx = 24, ny = 24, ns = 9, nt = 25;
    GaugeField g(nx, ny, linspace(1.0, 1.5, ns), linspace(0.0, 1.0, nt));
    cplx a0x(0, 0.2);
    for (std::size_t ix = 0; ix < nx; ++ix)
        for (std::size_t iy = 0; iy < ny; ++iy)
            for (std::size_t is = 0; is < ns; ++is)
                for (std::size_t it = 0; it < nt; ++it) {
                    double x = 2 * pi * ix / nx;
                    double t = g.t[it];
                    std::size_t q = g.idx(ix, iy, is, it);
                    g.ax[q] = a0x + I * t * 0.4 * std::cos(x);
                    g.f[q] = 0.4 * std::sin(x);
                }
    auto res = flatten_gauge(g, 1.0);
    for (std::size_t ix = 0; ix < nx; ++ix)
        for (std::size_t is = 0; is < ns; ++is)
            for (std::size_t it = 0; it < nt; ++it) {
                double x = 2 * pi * ix / nx;
                double t = g.t[it];
                cplx expected = std::exp(-I * cplx(t * 0.4 * std::sin(x)));
                REQUIRE(std::abs(res.lambda[g.idx(ix, 0, is, it)] - expected) < 1e-3);
            }
    REQUIRE(res.max_dt < 0.01);
}
