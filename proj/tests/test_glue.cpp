#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "neckflow/fit.hpp"
#include "neckflow/glue.hpp"

using namespace neckflow;

namespace {

// C-infinity bump supported on |u| < 1, normalized to 1 at the origin.
double bump(double u) {
    return std::abs(u) < 1.0 ? std::exp(1.0 - 1.0 / (1.0 - u * u)) : 0.0;
}

Eigen::VectorXcd random_field(const GlueGrid& G, std::mt19937_64& rng) {
    std::normal_distribution<double> gauss;
    Eigen::VectorXcd v(G.field_size());
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = cplx(gauss(rng), gauss(rng));
    return v;
}

Eigen::VectorXcd random_residual(const GlueGrid& G, std::mt19937_64& rng) {
    std::normal_distribution<double> gauss;
    Eigen::VectorXcd v(G.res_size());
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = cplx(gauss(rng), gauss(rng));
    return v;
}

// Constant flat connection with a fixed generic holonomy, zero spinor.
Eigen::VectorXcd holonomy_base(const GlueGrid& G) {
    static const double hol[4] = {0.31, 0.17, 0.23, 0.11};
    Eigen::VectorXcd xi = Eigen::VectorXcd::Zero(G.field_size());
    for (int is = 0; is < G.ns; ++is)
        for (int it = 0; it < G.nt; ++it)
            for (int c = 0; c < 4; ++c) xi[G.idx(is, it, 0, 0, c, 6)] = hol[c];
    return xi;
}

GluePieces zero_pieces(const GlueGrid& G) {
    GluePieces P;
    for (auto& p : P.piece) p = Eigen::VectorXcd::Zero(G.field_size());
    P.cap_plus = Eigen::VectorXcd::Zero(G.field_size());
    P.cap_minus = Eigen::VectorXcd::Zero(G.field_size());
    return P;
}

}  // namespace

TEST_CASE("rescaled norm rejects mismatched layouts and unresolved grids") {
    auto geo = neck_geometry(5.0, 1.0);
    auto G = make_glue_grid(geo, 13, 13, 0);
    Eigen::VectorXcd f = Eigen::VectorXcd::Zero(G.field_size());
    Eigen::VectorXcd r = Eigen::VectorXcd::Zero(G.res_size());

    REQUIRE_THROWS_AS(rescaled_norm(G, geo, f, 0, NormSector::selfdual),
                      dimension_error);
    REQUIRE_THROWS_AS(rescaled_norm(G, geo, r, 0, NormSector::mixed_form),
                      dimension_error);
    REQUIRE_THROWS_AS(rescaled_norm(G, geo, f, 2, NormSector::mixed_form),
                      domain_error);
    Eigen::VectorXcd bad = Eigen::VectorXcd::Zero(G.field_size() + 1);
    REQUIRE_THROWS_AS(rescaled_norm(G, geo, bad, 0, NormSector::mixed_form),
                      dimension_error);

    // an even t axis at large T has no sample row inside the small strips
    auto geo7 = neck_geometry(7.0, 1.0);
    auto G7 = make_glue_grid(geo7, 48, 48, 0);
    Eigen::VectorXcd f7 = Eigen::VectorXcd::Zero(G7.field_size());
    REQUIRE_THROWS_WITH(rescaled_norm(G7, geo7, f7, 0, NormSector::mixed_form),
                        Catch::Matchers::ContainsSubstring("region"));
}

TEST_CASE("rescaled norm applies the region weights to the spinor slots") {
    auto geo = neck_geometry(5.0, 1.0);
    auto G = make_glue_grid(geo, 49, 49, 0);
    std::mt19937_64 rng(11);
    std::normal_distribution<double> gauss;
    double hs = G.s[1] - G.s[0], ht = G.t[1] - G.t[0];

    auto plain_l2 = [&](const Eigen::VectorXcd& v, int ncomp) {
        double acc = 0;
        for (int is = 0; is < G.ns; ++is)
            for (int it = 0; it < G.nt; ++it) {
                double quad = hs * ht * ((is == 0 || is == G.ns - 1) ? 0.5 : 1.0) *
                              ((it == 0 || it == G.nt - 1) ? 0.5 : 1.0);
                for (int c = 0; c < ncomp; ++c)
                    acc += quad * std::norm(v[G.idx(is, it, 0, 0, c, ncomp)]);
            }
        return std::sqrt(acc);
    };

    SECTION("deep small-strip support reduces to the plain L2 norm") {
        Eigen::VectorXcd v = Eigen::VectorXcd::Zero(G.field_size());
        int hits = 0;
        for (int is = 0; is < G.ns; ++is)
            for (int it = 0; it < G.nt; ++it)
                if (region_of(geo, G.s[is], G.t[it]) == 3) {
                    for (int c = 0; c < 6; ++c)
                        v[G.idx(is, it, 0, 0, c, 6)] = cplx(gauss(rng), gauss(rng));
                    ++hits;
                }
        REQUIRE(hits > 0);
        double got = rescaled_norm(G, geo, v, 0, NormSector::mixed_form);
        REQUIRE(got == Catch::Approx(plain_l2(v, 6)).epsilon(1e-13));
    }

    SECTION("pure spinor on the disk is weighted by epsilon") {
        Eigen::VectorXcd v = Eigen::VectorXcd::Zero(G.field_size());
        for (int is = 0; is < G.ns; ++is)
            for (int it = 0; it < G.nt; ++it)
                if (std::hypot(G.s[is], G.t[it]) < 0.9 * geo.R)
                    for (int c : {c_alpha, c_beta})
                        v[G.idx(is, it, 0, 0, c, 6)] = cplx(gauss(rng), gauss(rng));
        double got = rescaled_norm(G, geo, v, 0, NormSector::mixed_form);
        REQUIRE(got == Catch::Approx(geo.eps * plain_l2(v, 6)).epsilon(1e-13));
    }

    SECTION("pure spinor on a large piece is weighted by sqrt epsilon") {
        Eigen::VectorXcd v = Eigen::VectorXcd::Zero(G.field_size());
        for (int is = 0; is < G.ns; ++is)
            for (int it = 0; it < G.nt; ++it)
                if (G.s[is] > 0 && G.t[it] > geo.ell + 1.0 &&
                    std::hypot(G.s[is], G.t[it]) > 1.05 * geo.R)
                    for (int c : {c_alpha, c_beta})
                        v[G.idx(is, it, 0, 0, c, 6)] = cplx(gauss(rng), gauss(rng));
        double got = rescaled_norm(G, geo, v, 0, NormSector::mixed_form);
        REQUIRE(got ==
                Catch::Approx(std::sqrt(geo.eps) * plain_l2(v, 6)).epsilon(1e-13));
    }
}

TEST_CASE("rescaled norm agrees with independent quadrature on the model side") {
    // Per region, push a random field through the model-to-composite map and
    // compare against a separately coded L2 sum on the model-side grid. The
    // disk is a dilation by R (1-forms pick up the factor R, the epsilon
    // spinor weight cancels the area element); the large pieces carry the
    // sqrt-epsilon spinor rescale in the identification; the small strips
    // are isometric as they stand.
    auto geo = neck_geometry(5.0, 1.0);
    auto G = make_glue_grid(geo, 49, 49, 0);
    std::mt19937_64 rng(23);
    std::normal_distribution<double> gauss;
    double hs = G.s[1] - G.s[0], ht = G.t[1] - G.t[0];

    struct Transport {
        double jac;     // model-side cell area / composite cell area
        double conn;    // factor on connection slots under the pullback
        double spinor;  // factor on spinor slots under the pullback
    };
    auto transport_for = [&](int reg) -> Transport {
        if (reg == 2) return {1.0 / (geo.R * geo.R), geo.R, 1.0};
        if (reg == 1 || reg == 4) return {1.0, 1.0, std::sqrt(geo.eps)};
        return {1.0, 1.0, 1.0};
    };

    for (int reg = 1; reg <= 5; ++reg) {
        Transport tr = transport_for(reg);
        for (int trial = 0; trial < 5; ++trial) {
            Eigen::VectorXcd v = Eigen::VectorXcd::Zero(G.field_size());
            double model = 0;
            for (int is = 1; is + 1 < G.ns; ++is)
                for (int it = 1; it + 1 < G.nt; ++it) {
                    if (region_of(geo, G.s[is], G.t[it]) != reg) continue;
                    for (int c = 0; c < 6; ++c) {
                        cplx z(gauss(rng), gauss(rng));
                        v[G.idx(is, it, 0, 0, c, 6)] = z;
                        double f = c >= c_alpha ? tr.spinor : tr.conn;
                        model += hs * ht * tr.jac * std::norm(f * z);
                    }
                }
            double got = rescaled_norm(G, geo, v, 0, NormSector::mixed_form);
            REQUIRE(got == Catch::Approx(std::sqrt(model)).epsilon(1e-4));
        }
    }
}

TEST_CASE("monopole map vanishes on flat data") {
    auto geo = neck_geometry(5.0, 1.0);
    auto G = make_glue_grid(geo, 13, 13, 1);
    Eigen::VectorXcd zero = Eigen::VectorXcd::Zero(G.field_size());
    REQUIRE(sw_residual_map(G, zero).norm() == 0.0);
    REQUIRE(sw_residual_map(G, holonomy_base(G)).norm() < 1e-13);
}

TEST_CASE("monopole map vanishes on a curved anti-self-dual profile") {
    // a_x + i a_y holomorphic in s + i t solves the anti-self-duality
    // equations; a cubic is reproduced exactly by the fourth-order stencils,
    // so the discrete curvature rows vanish to roundoff while the curvature
    // itself is far from zero.
    auto geo = neck_geometry(5.0, 1.0);
    auto G = make_glue_grid(geo, 49, 49, 0);
    Eigen::VectorXcd xi = Eigen::VectorXcd::Zero(G.field_size());
    double scale = geo.R * geo.R * geo.R;
    for (int is = 0; is < G.ns; ++is)
        for (int it = 0; it < G.nt; ++it) {
            cplx z(G.s[is], G.t[it]);
            cplx w = z * z * z / scale;
            xi[G.idx(is, it, 0, 0, ca_x, 6)] = w.real();
            xi[G.idx(is, it, 0, 0, ca_y, 6)] = w.imag();
        }
    Eigen::VectorXcd r = sw_residual_map(G, xi);
    double worst = 0;
    for (int is = 0; is < G.ns; ++is)
        for (int it = 0; it < G.nt; ++it)
            for (int c : {r_xy, r_xs, r_xt})
                worst = std::max(worst, std::abs(r[G.idx(is, it, 0, 0, c, 5)]));
    REQUIRE(worst < 1e-8);

    Eigen::VectorXcd f_xs = Eigen::VectorXcd::Zero(G.field_size());
    glue_detail::d_s(G, false, -1.0, xi, ca_x, 6, f_xs, ca_x, 6);
    REQUIRE(f_xs.cwiseAbs().maxCoeff() > 1e-2);
}

TEST_CASE("monopole map splits exactly into linear and quadratic parts") {
    auto geo = neck_geometry(5.0, 1.0);
    auto G = make_glue_grid(geo, 9, 9, 1);
    std::mt19937_64 rng(31);
    Eigen::VectorXcd x0 = 0.1 * random_field(G, rng);
    Eigen::VectorXcd h = random_field(G, rng);

    Eigen::VectorXcd full = sw_residual_map(G, x0 + h);
    Eigen::VectorXcd split =
        sw_residual_map(G, x0) + sw_dapply(G, x0, h) + sw_bilinear(G, h, h);
    REQUIRE((full - split).norm() < 1e-12 * full.norm());
}

TEST_CASE("perturbed residual grows linearly with a quadratic remainder") {
    auto geo = neck_geometry(5.0, 1.0);
    auto G = make_glue_grid(geo, 9, 9, 1);
    std::mt19937_64 rng(37);
    Eigen::VectorXcd x0 = holonomy_base(G);
    Eigen::VectorXcd dir = random_field(G, rng);
    dir /= dir.norm();

    Eigen::VectorXcd base = sw_residual_map(G, x0);
    Eigen::VectorXcd lin = sw_dapply(G, x0, dir);
    double q_ref = sw_bilinear(G, dir, dir).norm();
    for (double tau : {1e-3, 1e-4, 1e-5}) {
        Eigen::VectorXcd diff = sw_residual_map(G, x0 + tau * dir) - base;
        REQUIRE((diff - tau * lin).norm() ==
                Catch::Approx(tau * tau * q_ref).epsilon(1e-6));
        REQUIRE(diff.norm() == Catch::Approx(tau * lin.norm()).epsilon(1e-3));
    }
}

TEST_CASE("linearization and its adjoint agree under the real pairing") {
    auto geo = neck_geometry(5.0, 1.0);
    std::mt19937_64 rng(41);
    for (bool periodic : {false, true}) {
        auto G = make_glue_grid(geo, 9, 9, 1, periodic);
        Eigen::VectorXcd x0 = 0.3 * random_field(G, rng);
        Eigen::VectorXcd h = random_field(G, rng);
        Eigen::VectorXcd y = random_residual(G, rng);
        double lhs = y.dot(sw_dapply(G, x0, h)).real();
        double rhs = sw_dstar(G, x0, y).dot(h).real();
        REQUIRE(lhs == Catch::Approx(rhs).epsilon(1e-12));
    }
}

TEST_CASE("assembly of identical flat pieces is exact") {
    auto geo = neck_geometry(5.0, 1.0);
    auto G = make_glue_grid(geo, 49, 49, 0);
    GluePieces P = zero_pieces(G);
    const cplx flat(0.37, 0.0);
    for (auto& p : P.piece)
        for (int is = 0; is < G.ns; ++is)
            for (int it = 0; it < G.nt; ++it)
                p[G.idx(is, it, 0, 0, ca_x, 6)] = flat;
    // caps must carry the same value where chi_pm is active
    for (int is = 0; is < G.ns; ++is)
        for (int it = 0; it < G.nt; ++it) {
            P.cap_plus[G.idx(is, it, 0, 0, ca_x, 6)] = flat;
            P.cap_minus[G.idx(is, it, 0, 0, ca_x, 6)] = flat;
        }
    auto cfg = assemble_approximate(G, geo, P);
    PartitionProfiles prof = partition_profiles(geo);
    for (int is = 0; is < G.ns; ++is)
        for (int it = 0; it < G.nt; ++it) {
            double blend = prof.chi(G.t[it]) + prof.chi_plus(G.t[it]) +
                           prof.chi_minus(G.t[it]);
            REQUIRE(std::abs(cfg.xi[G.idx(is, it, 0, 0, ca_x, 6)] - blend * flat) <
                    1e-13);
        }
    REQUIRE(cfg.residual_norm < 1e-10);
}

TEST_CASE("assembly gates on disk-map boundary compatibility") {
    auto geo = neck_geometry(5.0, 1.0);
    auto G = make_glue_grid(geo, 49, 49, 0);
    GluePieces P = zero_pieces(G);
    P.disk_boundary = {cplx(0.2, 0.0), cplx(0.1, 0.0), cplx(0.4, 0.0), cplx(0.3, 0.0)};
    P.limit_values = P.disk_boundary;
    REQUIRE_NOTHROW(assemble_approximate(G, geo, P));
    P.limit_values[2] += 1e-3;
    REQUIRE_THROWS_WITH(assemble_approximate(G, geo, P),
                        Catch::Matchers::ContainsSubstring("angle 0"));
}

TEST_CASE("collar disagreement between pieces is bounded by the cutoff gradient") {
    auto geo = neck_geometry(5.0, 1.0);
    auto G = make_glue_grid(geo, 49, 49, 0);
    double delta = 1e-3;
    GluePieces P = zero_pieces(G);
    for (auto& p : P.piece)
        for (int is = 0; is < G.ns; ++is)
            for (int it = 0; it < G.nt; ++it)
                p[G.idx(is, it, 0, 0, ca_x, 6)] = 0.37;
    for (int is = 0; is < G.ns; ++is)
        for (int it = 0; it < G.nt; ++it) {
            P.cap_plus[G.idx(is, it, 0, 0, ca_x, 6)] = 0.37;
            P.cap_minus[G.idx(is, it, 0, 0, ca_x, 6)] = 0.37;
        }
    // the small-strip piece disagrees by delta; eta_3 lives where chi == 1,
    // so the residual is delta times the cutoff gradient on the collars
    for (int is = 0; is < G.ns; ++is)
        for (int it = 0; it < G.nt; ++it)
            P.piece[2][G.idx(is, it, 0, 0, ca_x, 6)] += delta;
    auto cfg = assemble_approximate(G, geo, P);
    REQUIRE(cfg.residual_norm > 0.0);

    double hs = G.s[1] - G.s[0], ht = G.t[1] - G.t[0], collar_volume = 0;
    for (int is = 0; is < G.ns; ++is)
        for (int it = 0; it < G.nt; ++it) {
            double m = 0;
            for (int c = 0; c < 5; ++c)
                m = std::max(m, std::abs(cfg.residual[G.idx(is, it, 0, 0, c, 5)]));
            if (m > delta * 1e-12) collar_volume += hs * ht;
        }
    PartitionProfiles prof = partition_profiles(geo);
    REQUIRE(cfg.residual_norm <=
            prof.q() * delta * std::sqrt(collar_volume) * 1.05);
}

TEST_CASE("assembled residual scales like the square root of epsilon") {
    // A spinor defect of fixed shape relative to the rectangle has a
    // scale-invariant gradient energy, so the residual norm tracks the
    // sqrt-epsilon spinor weight of the large piece it sits in.
    std::vector<double> log_R, log_res;
    for (double T : {4.0, 5.0, 6.0, 7.0}) {
        auto geo = neck_geometry(T, 1.0);
        auto G = make_glue_grid(geo, 49, 49, 0);
        GluePieces P = zero_pieces(G);
        double s0 = 0.82 * geo.r, t0 = 0.82 * geo.R;
        double ws = 0.08 * geo.r, wt = 0.08 * geo.R;
        for (int is = 0; is < G.ns; ++is)
            for (int it = 0; it < G.nt; ++it)
                P.piece[0][G.idx(is, it, 0, 0, c_alpha, 6)] =
                    1e-6 * bump((G.s[is] - s0) / ws) * bump((G.t[it] - t0) / wt);
        auto cfg = assemble_approximate(G, geo, P);
        REQUIRE(cfg.residual_norm > 0.0);
        log_R.push_back(std::log(geo.R));
        log_res.push_back(std::log(cfg.residual_norm));
    }
    auto f = fit_line(log_R, log_res);
    REQUIRE(f.slope == Catch::Approx(-0.5).margin(0.1));
}

namespace {

// Two-complex-dimensional model problem sigma(x) = M x + gamma q(x) with an
// explicitly solvable Newton recursion.
struct ToyProblem {
    Eigen::Matrix2cd M;
    double gamma = 0.1;

    Eigen::Matrix2cd jacobian(const Eigen::Vector2cd& x) const {
        Eigen::Matrix2cd J = M;
        J(0, 0) += gamma * 2.0 * x[0];
        J(1, 0) += gamma * x[1];
        J(1, 1) += gamma * x[0];
        return J;
    }

    Eigen::VectorXcd sigma(const Eigen::VectorXcd& x) const {
        Eigen::Vector2cd v(x[0], x[1]);
        Eigen::Vector2cd q(v[0] * v[0], v[0] * v[1]);
        return M * v + gamma * q;
    }
    Eigen::VectorXcd dapply(const Eigen::VectorXcd& x0,
                            const Eigen::VectorXcd& h) const {
        return jacobian(Eigen::Vector2cd(x0[0], x0[1])) * Eigen::Vector2cd(h[0], h[1]);
    }
    Eigen::VectorXcd dstar(const Eigen::VectorXcd& x0,
                           const Eigen::VectorXcd& y) const {
        return jacobian(Eigen::Vector2cd(x0[0], x0[1])).adjoint() *
               Eigen::Vector2cd(y[0], y[1]);
    }
    double norm0(const Eigen::VectorXcd& v) const { return v.norm(); }
    double norm1(const Eigen::VectorXcd& v) const { return v.norm(); }
    double epsilon() const { return 1.0; }
};

}  // namespace

TEST_CASE("newton iteration matches a hand-run solve on the model problem") {
    ToyProblem pb;
    pb.M << cplx(2.0, 0.0), cplx(0.0, 0.0), cplx(0.0, 0.0), cplx(3.0, 0.0);
    Eigen::VectorXcd x0(2);
    x0 << cplx(0.05, 0.02), cplx(-0.04, 0.01);

    NewtonOptions opt;
    opt.tol = 1e-14;
    auto res = newton_glue(pb, x0, opt);
    REQUIRE(res.converged);
    REQUIRE(res.c < 1.0);
    REQUIRE(pb.sigma(res.xi).norm() < 1e-13);

    // hand-run Newton with dense solves
    Eigen::Vector2cd x(x0[0], x0[1]);
    for (int k = 0; k < 8; ++k) {
        Eigen::Vector2cd s(pb.sigma(Eigen::VectorXcd(x))[0],
                           pb.sigma(Eigen::VectorXcd(x))[1]);
        x -= pb.jacobian(x).fullPivLu().solve(s);
    }
    REQUIRE((Eigen::Vector2cd(res.xi[0], res.xi[1]) - x).norm() < 1e-10);
}

TEST_CASE("newton iteration accepts an exact solution without correcting") {
    auto geo = neck_geometry(5.0, 1.0);
    auto G = make_glue_grid(geo, 13, 13, 1, true);
    NeckProblem pb{geo, G};
    NewtonOptions opt;
    opt.drop = selfdual_constant_cokernel(G);
    auto res = newton_glue(pb, holonomy_base(G), opt);
    REQUIRE(res.converged);
    REQUIRE(res.trace.empty());
    REQUIRE(res.correction_norm == 0.0);
}

TEST_CASE("newton iteration contracts on the truncated neck problem") {
    auto geo = neck_geometry(5.0, 1.0);
    auto G = make_glue_grid(geo, 13, 13, 1, true);
    NeckProblem pb{geo, G};
    Eigen::VectorXcd xi = holonomy_base(G);
    double amp = 1e-2, w = 0.3 * geo.R;
    for (int is = 0; is < G.ns; ++is)
        for (int it = 0; it < G.nt; ++it) {
            double g = std::exp(-((G.s[is] - 0.2 * geo.r) * (G.s[is] - 0.2 * geo.r) +
                                  G.t[it] * G.t[it]) / (w * w));
            xi[G.idx(is, it, 0, 0, c_alpha, 6)] += amp * g;
            xi[G.idx(is, it, 0, 0, ca_x, 6)] += 0.5 * amp * g;
            xi[G.idx(is, it, 1, 0, c_beta, 6)] += 0.3 * amp * g;
            xi[G.idx(is, it, 0, 1, ca_y, 6)] += 0.2 * amp * g;
        }

    NewtonOptions opt;
    opt.tol = 1e-9;
    opt.drop = selfdual_constant_cokernel(G);
    auto res = newton_glue(pb, xi, opt);

    REQUIRE(res.converged);
    REQUIRE(res.c < 1.0);
    REQUIRE(res.sigma_min_estimate > opt.sigma_min_gate);
    REQUIRE(res.trace.size() >= 2);

    // geometric decrease and the per-step quadratic residual law
    for (std::size_t i = 0; i + 1 < res.trace.size(); ++i) {
        REQUIRE(res.trace[i + 1].sigma_norm < res.trace[i].sigma_norm * res.c);
        REQUIRE(res.trace[i + 1].sigma_norm <=
                res.c2 * res.trace[i].xi_norm * res.trace[i].xi_norm * (1 + 1e-12));
    }
    // the geometric-sum bound on the total correction
    REQUIRE(res.correction_norm <=
            res.c0 * res.c1 / (1.0 - res.c) * std::sqrt(geo.eps) * (1 + 1e-9));
}

TEST_CASE("newton iteration reports a contraction failure honestly") {
    auto geo = neck_geometry(5.0, 1.0);
    auto G = make_glue_grid(geo, 13, 13, 1, true);
    NeckProblem pb{geo, G};
    Eigen::VectorXcd xi = holonomy_base(G);
    double amp = 0.1, w = 0.3 * geo.R;
    for (int is = 0; is < G.ns; ++is)
        for (int it = 0; it < G.nt; ++it) {
            double g = std::exp(-((G.s[is] - 0.2 * geo.r) * (G.s[is] - 0.2 * geo.r) +
                                  G.t[it] * G.t[it]) / (w * w));
            xi[G.idx(is, it, 0, 0, c_alpha, 6)] += amp * g;
            xi[G.idx(is, it, 0, 0, ca_x, 6)] += 0.5 * amp * g;
        }
    NewtonOptions opt;
    opt.drop = selfdual_constant_cokernel(G);
    REQUIRE_THROWS_WITH(newton_glue(pb, xi, opt),
                        Catch::Matchers::ContainsSubstring("contraction"));
}

TEST_CASE("newton corrections across the stretch sweep scale like sqrt epsilon") {
    // The spinor defect amplitude follows the exponentially small piece
    // mismatch, amp ~ epsilon; the large-piece spinor weight then puts the
    // residual and the dominant correction on the sqrt-epsilon curve. The
    // stopping rule is residual-relative: the closed desk model crowds
    // low-frequency one-form modes toward zero as R grows, so iterating into
    // the form-sector tail would mix in a block whose conditioning is not
    // T-uniform (full convergence is exercised at fixed T above).
    std::vector<double> log_eps, log_corr;
    for (double T : {4.0, 5.0, 6.0, 7.0}) {
        auto geo = neck_geometry(T, 1.0);
        auto G = make_glue_grid(geo, 13, 13, 1, true);
        NeckProblem pb{geo, G};
        Eigen::VectorXcd xi = holonomy_base(G);
        double amp = 0.05 * geo.eps;
        double s0 = 0.8 * geo.r, t0 = 0.8 * geo.R;
        double ws = 0.15 * geo.r, wt = 0.15 * geo.R;
        for (int is = 0; is < G.ns; ++is)
            for (int it = 0; it < G.nt; ++it) {
                double g = bump((G.s[is] - s0) / ws) * bump((G.t[it] - t0) / wt);
                xi[G.idx(is, it, 0, 0, c_alpha, 6)] += amp * g;
                xi[G.idx(is, it, 1, 0, c_beta, 6)] += 0.4 * amp * g;
            }
        NewtonOptions opt;
        opt.nu_max = 1;
        opt.tol = 0.05 * pb.norm0(pb.sigma(xi));
        opt.drop = selfdual_constant_cokernel(G);
        auto res = newton_glue(pb, xi, opt);
        REQUIRE(res.converged);
        REQUIRE(res.c < 1.0);
        REQUIRE(res.correction_norm > 0.0);
        log_eps.push_back(std::log(geo.eps));
        log_corr.push_back(std::log(res.correction_norm));
    }
    auto f = fit_line(log_eps, log_corr);
    REQUIRE(f.slope == Catch::Approx(0.5).margin(0.1));
}
