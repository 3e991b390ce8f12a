#pragma once

// Gluing engine on the composite rectangle grid: T-rescaled norms, the
// four-dimensional monopole map sigma = (F+_A - tau(Psi,Psi), D_A Psi) in a
// torus-mode / finite-difference discretization, its linearization with a
// hand-adjoint, approximate-solution assembly from cutoff pieces, and the
// Newton iteration on the normal equations with measured constants.
//
// Fields live on the rectangle grid (s, t) x torus modes (l, k) with six
// components per sample: the connection slots a_x, a_y, a_s, a_t and the
// spinor slots alpha, beta. Residuals have five components: the three
// self-dual curvature rows and the two Dirac rows. The x, y derivatives act
// as mode multipliers il, ik; the s, t derivatives are the shared 4th-order
// difference matrices.

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "neckflow/errors.hpp"
#include "neckflow/fit.hpp"
#include "neckflow/geometry.hpp"
#include "neckflow/linops.hpp"
#include "neckflow/ode.hpp"

namespace neckflow {

struct GlueGrid {
    std::vector<double> s, t;
    int cutoff = 0;
    int ns = 0, nt = 0, nm = 0;  // nm = 2*cutoff + 1 modes per torus direction
    Eigen::MatrixXd Ds, Dt;      // derivative matrices along the two axes

    static constexpr int field_comps = 6;  // a_x a_y a_s a_t alpha beta
    static constexpr int res_comps = 5;    // three curvature rows, two Dirac rows

    Eigen::Index points() const { return Eigen::Index(ns) * nt * nm * nm; }
    Eigen::Index field_size() const { return points() * field_comps; }
    Eigen::Index res_size() const { return points() * res_comps; }

    // packed layout: (((is*nt + it)*nm + (l+cutoff))*nm + (k+cutoff))*ncomp + c
    Eigen::Index idx(int is, int it, int l, int k, int c, int ncomp) const {
        return (((Eigen::Index(is) * nt + it) * nm + (l + cutoff)) * nm +
                (k + cutoff)) * ncomp + c;
    }
};

// The axes can be treated as free (one-sided difference closures at the
// rectangle edges) or periodic. The periodic variant models a closed
// manifold: it removes the boundary-driven near-cokernel of the free
// discretization, which is what the Newton stage needs.
inline GlueGrid make_glue_grid(const NeckGeometry& g, int ns, int nt, int cutoff,
                               bool periodic = false) {
    if (ns < 6 || nt < 6)
        throw domain_error("make_glue_grid: need at least 6 samples per axis");
    if (cutoff < 0) throw domain_error("make_glue_grid: negative mode cutoff");
    GlueGrid G;
    G.cutoff = cutoff;
    G.ns = ns;
    G.nt = nt;
    G.nm = 2 * cutoff + 1;
    G.s = linspace(-g.r, g.r, std::size_t(ns));
    G.t = linspace(-g.R, g.R, std::size_t(nt));
    G.Ds = time_derivative_matrix(G.s, periodic);
    G.Dt = time_derivative_matrix(G.t, periodic);
    return G;
}

namespace glue_detail {

using Vc = Eigen::VectorXcd;
const cplx I{0.0, 1.0};

// out[co] += scale * (D or D^T applied along the s axis) in[ci]
inline void d_s(const GlueGrid& G, bool transpose, cplx scale,
                const Vc& in, int ci, int nci, Vc& out, int co, int nco) {
    for (int it = 0; it < G.nt; ++it)
        for (int l = -G.cutoff; l <= G.cutoff; ++l)
            for (int k = -G.cutoff; k <= G.cutoff; ++k)
                for (int i = 0; i < G.ns; ++i) {
                    cplx acc{};
                    for (int j = 0; j < G.ns; ++j) {
                        double w = transpose ? G.Ds(j, i) : G.Ds(i, j);
                        if (w != 0.0) acc += w * in[G.idx(j, it, l, k, ci, nci)];
                    }
                    out[G.idx(i, it, l, k, co, nco)] += scale * acc;
                }
}

inline void d_t(const GlueGrid& G, bool transpose, cplx scale,
                const Vc& in, int ci, int nci, Vc& out, int co, int nco) {
    for (int is = 0; is < G.ns; ++is)
        for (int l = -G.cutoff; l <= G.cutoff; ++l)
            for (int k = -G.cutoff; k <= G.cutoff; ++k)
                for (int i = 0; i < G.nt; ++i) {
                    cplx acc{};
                    for (int j = 0; j < G.nt; ++j) {
                        double w = transpose ? G.Dt(j, i) : G.Dt(i, j);
                        if (w != 0.0) acc += w * in[G.idx(is, j, l, k, ci, nci)];
                    }
                    out[G.idx(is, i, l, k, co, nco)] += scale * acc;
                }
}

// out[co] += scale * i*l * in[ci]  (use_l) or scale * i*k * in[ci]
inline void d_mode(const GlueGrid& G, bool use_l, cplx scale,
                   const Vc& in, int ci, int nci, Vc& out, int co, int nco) {
    for (int is = 0; is < G.ns; ++is)
        for (int it = 0; it < G.nt; ++it)
            for (int l = -G.cutoff; l <= G.cutoff; ++l)
                for (int k = -G.cutoff; k <= G.cutoff; ++k)
                    out[G.idx(is, it, l, k, co, nco)] +=
                        scale * I * double(use_l ? l : k) *
                        in[G.idx(is, it, l, k, ci, nci)];
}

// Pointwise-in-(s,t) truncated mode products. With conjugate_first false this
// is the convolution (f g)_m = sum_q f_{m-q} g_q of two torus fields; with
// conjugate_first true it is the correlation (f-bar g)_m = sum_q conj(f_q)
// g_{q+m}. The two are mutually adjoint for the real inner product, and the
// correlation with the variable in the conjugated slot is its own adjoint.
inline void point_product(const GlueGrid& G, bool conjugate_first, cplx scale,
                          const Vc& f, int cf, int ncf,
                          const Vc& g, int cg, int ncg,
                          Vc& out, int co, int nco) {
    int c = G.cutoff;
    for (int is = 0; is < G.ns; ++is)
        for (int it = 0; it < G.nt; ++it)
            for (int l = -c; l <= c; ++l)
                for (int k = -c; k <= c; ++k) {
                    cplx acc{};
                    for (int ql = -c; ql <= c; ++ql)
                        for (int qk = -c; qk <= c; ++qk) {
                            if (conjugate_first) {
                                int gl = ql + l, gk = qk + k;
                                if (std::abs(gl) > c || std::abs(gk) > c) continue;
                                acc += std::conj(f[G.idx(is, it, ql, qk, cf, ncf)]) *
                                       g[G.idx(is, it, gl, gk, cg, ncg)];
                            } else {
                                int fl = l - ql, fk = k - qk;
                                if (std::abs(fl) > c || std::abs(fk) > c) continue;
                                acc += f[G.idx(is, it, fl, fk, cf, ncf)] *
                                       g[G.idx(is, it, ql, qk, cg, ncg)];
                            }
                        }
                    out[G.idx(is, it, l, k, co, nco)] += scale * acc;
                }
}

}  // namespace glue_detail

// field components
enum : int { ca_x = 0, ca_y = 1, ca_s = 2, ca_t = 3, c_alpha = 4, c_beta = 5 };
// residual components
enum : int { r_xy = 0, r_xs = 1, r_xt = 2, r_dirac1 = 3, r_dirac2 = 4 };

// Linear part of the monopole map: the self-dual curvature rows
// (F_xy + F_st, F_xs + F_ty, F_xt + F_ys) and the flat Dirac rows.
inline Eigen::VectorXcd sw_linear_part(const GlueGrid& G, const Eigen::VectorXcd& xi) {
    using namespace glue_detail;
    if (xi.size() != G.field_size())
        throw dimension_error("sw_linear_part: field size mismatch");
    Eigen::VectorXcd r = Eigen::VectorXcd::Zero(G.res_size());
    const int F = GlueGrid::field_comps, R = GlueGrid::res_comps;
    // F_xy + F_st
    d_mode(G, true, 1.0, xi, ca_y, F, r, r_xy, R);
    d_mode(G, false, -1.0, xi, ca_x, F, r, r_xy, R);
    d_s(G, false, 1.0, xi, ca_t, F, r, r_xy, R);
    d_t(G, false, -1.0, xi, ca_s, F, r, r_xy, R);
    // F_xs + F_ty
    d_mode(G, true, 1.0, xi, ca_s, F, r, r_xs, R);
    d_s(G, false, -1.0, xi, ca_x, F, r, r_xs, R);
    d_t(G, false, 1.0, xi, ca_y, F, r, r_xs, R);
    d_mode(G, false, -1.0, xi, ca_t, F, r, r_xs, R);
    // F_xt + F_ys
    d_mode(G, true, 1.0, xi, ca_t, F, r, r_xt, R);
    d_t(G, false, -1.0, xi, ca_x, F, r, r_xt, R);
    d_mode(G, false, 1.0, xi, ca_s, F, r, r_xt, R);
    d_s(G, false, -1.0, xi, ca_y, F, r, r_xt, R);
    // Euclidean Dirac d_t + i sigma_1 d_x + i sigma_2 d_y + i sigma_3 d_s;
    // the symbol determinant is -(mu_t^2 + mu_s^2 + mu_x^2 + mu_y^2), so the
    // operator is elliptic (the naive all-real sign choice is hyperbolic).
    // Row 1: d_t alpha + i d_s alpha + i d_x beta + d_y beta
    d_t(G, false, 1.0, xi, c_alpha, F, r, r_dirac1, R);
    d_s(G, false, I, xi, c_alpha, F, r, r_dirac1, R);
    d_mode(G, true, I, xi, c_beta, F, r, r_dirac1, R);
    d_mode(G, false, 1.0, xi, c_beta, F, r, r_dirac1, R);
    // Row 2: d_t beta - i d_s beta + i d_x alpha - d_y alpha
    d_t(G, false, 1.0, xi, c_beta, F, r, r_dirac2, R);
    d_s(G, false, -I, xi, c_beta, F, r, r_dirac2, R);
    d_mode(G, true, I, xi, c_alpha, F, r, r_dirac2, R);
    d_mode(G, false, -1.0, xi, c_alpha, F, r, r_dirac2, R);
    return r;
}

// Bilinear part: -tau(psi_a, psi_b) in the curvature rows and the covariant
// coupling i a_a . psi_b in the Dirac rows, so that linear + bilinear(xi, xi)
// is the full map and bilinear(x0, h) + bilinear(h, x0) its derivative.
inline Eigen::VectorXcd sw_bilinear(const GlueGrid& G, const Eigen::VectorXcd& xa,
                                    const Eigen::VectorXcd& xb) {
    using namespace glue_detail;
    if (xa.size() != G.field_size() || xb.size() != G.field_size())
        throw dimension_error("sw_bilinear: field size mismatch");
    Eigen::VectorXcd r = Eigen::VectorXcd::Zero(G.res_size());
    const int F = GlueGrid::field_comps, R = GlueGrid::res_comps;
    // tau components (conjugate-linear in the first spinor):
    //   tau_1 = (|alpha|^2 - |beta|^2)/2, tau_2 + i tau_3 = conj(alpha) beta
    point_product(G, true, -0.5, xa, c_alpha, F, xb, c_alpha, F, r, r_xy, R);
    point_product(G, true, 0.5, xa, c_beta, F, xb, c_beta, F, r, r_xy, R);
    point_product(G, true, -0.5, xa, c_alpha, F, xb, c_beta, F, r, r_xs, R);
    point_product(G, true, -0.5, xa, c_beta, F, xb, c_alpha, F, r, r_xs, R);
    point_product(G, true, 0.5 * I, xa, c_alpha, F, xb, c_beta, F, r, r_xt, R);
    point_product(G, true, -0.5 * I, xa, c_beta, F, xb, c_alpha, F, r, r_xt, R);
    // Dirac rows, covariant substitution d_mu -> d_mu + i a_mu inside the
    // i sigma factors: row 1 gains i a_t alpha - a_s alpha - a_x beta
    // + i a_y beta, row 2 gains i a_t beta + a_s beta - a_x alpha - i a_y alpha
    point_product(G, false, I, xa, ca_t, F, xb, c_alpha, F, r, r_dirac1, R);
    point_product(G, false, -1.0, xa, ca_s, F, xb, c_alpha, F, r, r_dirac1, R);
    point_product(G, false, -1.0, xa, ca_x, F, xb, c_beta, F, r, r_dirac1, R);
    point_product(G, false, I, xa, ca_y, F, xb, c_beta, F, r, r_dirac1, R);
    point_product(G, false, I, xa, ca_t, F, xb, c_beta, F, r, r_dirac2, R);
    point_product(G, false, 1.0, xa, ca_s, F, xb, c_beta, F, r, r_dirac2, R);
    point_product(G, false, -1.0, xa, ca_x, F, xb, c_alpha, F, r, r_dirac2, R);
    point_product(G, false, -I, xa, ca_y, F, xb, c_alpha, F, r, r_dirac2, R);
    return r;
}

inline Eigen::VectorXcd sw_residual_map(const GlueGrid& G, const Eigen::VectorXcd& xi) {
    return sw_linear_part(G, xi) + sw_bilinear(G, xi, xi);
}

// Derivative of the monopole map at xi0 applied to h.
inline Eigen::VectorXcd sw_dapply(const GlueGrid& G, const Eigen::VectorXcd& xi0,
                                  const Eigen::VectorXcd& h) {
    return sw_linear_part(G, h) + sw_bilinear(G, xi0, h) + sw_bilinear(G, h, xi0);
}

// Adjoint of sw_dapply for the real inner product Re<x, y>. Each forward
// term is mirrored: derivative matrices transpose, mode multipliers flip
// sign, convolutions and correlations swap roles; the terms with the
// variable in the conjugated slot are their own adjoint pattern.
inline Eigen::VectorXcd sw_dstar(const GlueGrid& G, const Eigen::VectorXcd& xi0,
                                 const Eigen::VectorXcd& y) {
    using namespace glue_detail;
    if (xi0.size() != G.field_size() || y.size() != G.res_size())
        throw dimension_error("sw_dstar: size mismatch");
    Eigen::VectorXcd h = Eigen::VectorXcd::Zero(G.field_size());
    const int F = GlueGrid::field_comps, R = GlueGrid::res_comps;
    // adjoint of the curvature rows
    d_mode(G, true, -1.0, y, r_xy, R, h, ca_y, F);
    d_mode(G, false, 1.0, y, r_xy, R, h, ca_x, F);
    d_s(G, true, 1.0, y, r_xy, R, h, ca_t, F);
    d_t(G, true, -1.0, y, r_xy, R, h, ca_s, F);
    d_mode(G, true, -1.0, y, r_xs, R, h, ca_s, F);
    d_s(G, true, -1.0, y, r_xs, R, h, ca_x, F);
    d_t(G, true, 1.0, y, r_xs, R, h, ca_y, F);
    d_mode(G, false, 1.0, y, r_xs, R, h, ca_t, F);
    d_mode(G, true, -1.0, y, r_xt, R, h, ca_t, F);
    d_t(G, true, -1.0, y, r_xt, R, h, ca_x, F);
    d_mode(G, false, -1.0, y, r_xt, R, h, ca_s, F);
    d_s(G, true, -1.0, y, r_xt, R, h, ca_y, F);
    // adjoint of the flat Dirac rows
    d_t(G, true, 1.0, y, r_dirac1, R, h, c_alpha, F);
    d_s(G, true, -I, y, r_dirac1, R, h, c_alpha, F);
    d_mode(G, true, I, y, r_dirac1, R, h, c_beta, F);
    d_mode(G, false, -1.0, y, r_dirac1, R, h, c_beta, F);
    d_t(G, true, 1.0, y, r_dirac2, R, h, c_beta, F);
    d_s(G, true, I, y, r_dirac2, R, h, c_beta, F);
    d_mode(G, true, I, y, r_dirac2, R, h, c_alpha, F);
    d_mode(G, false, 1.0, y, r_dirac2, R, h, c_alpha, F);
    // adjoint of bilinear(xi0, h): correlations become convolutions and back
    point_product(G, false, -0.5, xi0, c_alpha, F, y, r_xy, R, h, c_alpha, F);
    point_product(G, false, 0.5, xi0, c_beta, F, y, r_xy, R, h, c_beta, F);
    point_product(G, false, -0.5, xi0, c_alpha, F, y, r_xs, R, h, c_beta, F);
    point_product(G, false, -0.5, xi0, c_beta, F, y, r_xs, R, h, c_alpha, F);
    point_product(G, false, -0.5 * I, xi0, c_alpha, F, y, r_xt, R, h, c_beta, F);
    point_product(G, false, 0.5 * I, xi0, c_beta, F, y, r_xt, R, h, c_alpha, F);
    point_product(G, true, -I, xi0, ca_t, F, y, r_dirac1, R, h, c_alpha, F);
    point_product(G, true, -1.0, xi0, ca_s, F, y, r_dirac1, R, h, c_alpha, F);
    point_product(G, true, -1.0, xi0, ca_x, F, y, r_dirac1, R, h, c_beta, F);
    point_product(G, true, -I, xi0, ca_y, F, y, r_dirac1, R, h, c_beta, F);
    point_product(G, true, -I, xi0, ca_t, F, y, r_dirac2, R, h, c_beta, F);
    point_product(G, true, 1.0, xi0, ca_s, F, y, r_dirac2, R, h, c_beta, F);
    point_product(G, true, -1.0, xi0, ca_x, F, y, r_dirac2, R, h, c_alpha, F);
    point_product(G, true, I, xi0, ca_y, F, y, r_dirac2, R, h, c_alpha, F);
    // adjoint of bilinear(h, xi0): the conjugated-variable correlations keep
    // their literal coefficient; the Dirac convolutions use commutativity
    point_product(G, true, -0.5, y, r_xy, R, xi0, c_alpha, F, h, c_alpha, F);
    point_product(G, true, 0.5, y, r_xy, R, xi0, c_beta, F, h, c_beta, F);
    point_product(G, true, -0.5, y, r_xs, R, xi0, c_beta, F, h, c_alpha, F);
    point_product(G, true, -0.5, y, r_xs, R, xi0, c_alpha, F, h, c_beta, F);
    point_product(G, true, 0.5 * I, y, r_xt, R, xi0, c_beta, F, h, c_alpha, F);
    point_product(G, true, -0.5 * I, y, r_xt, R, xi0, c_alpha, F, h, c_beta, F);
    point_product(G, true, -I, xi0, c_alpha, F, y, r_dirac1, R, h, ca_t, F);
    point_product(G, true, -I, xi0, c_alpha, F, y, r_dirac1, R, h, ca_s, F);
    point_product(G, true, -I, xi0, c_beta, F, y, r_dirac1, R, h, ca_x, F);
    point_product(G, true, 1.0, xi0, c_beta, F, y, r_dirac1, R, h, ca_y, F);
    point_product(G, true, -I, xi0, c_beta, F, y, r_dirac2, R, h, ca_t, F);
    point_product(G, true, I, xi0, c_beta, F, y, r_dirac2, R, h, ca_s, F);
    point_product(G, true, -I, xi0, c_alpha, F, y, r_dirac2, R, h, ca_x, F);
    point_product(G, true, -1.0, xi0, c_alpha, F, y, r_dirac2, R, h, ca_y, F);
    return h;
}

enum class NormSector { mixed_form, selfdual };

// T-rescaled norm on the composite grid. The region weights act on the
// spinor slots only: epsilon^(1/2) on the two large pieces, epsilon on the
// disk, unit weight on the small strips; connection slots carry unit weight.
// Degree 1 adds the three spatial-derivative terms and the R d_t term with
// the same region weights. The vector length selects the field or the
// residual layout; the declared sector must match it.
inline double rescaled_norm(const GlueGrid& G, const NeckGeometry& geo,
                            const Eigen::VectorXcd& xi, int degree,
                            NormSector sector = NormSector::mixed_form) {
    using namespace glue_detail;
    int ncomp;
    if (xi.size() == G.field_size()) {
        ncomp = GlueGrid::field_comps;
        if (sector != NormSector::mixed_form)
            throw dimension_error("rescaled_norm: field layout is the mixed-form sector");
    } else if (xi.size() == G.res_size()) {
        ncomp = GlueGrid::res_comps;
        if (sector != NormSector::selfdual)
            throw dimension_error("rescaled_norm: residual layout is the self-dual sector");
    } else {
        throw dimension_error("rescaled_norm: vector matches neither layout");
    }
    if (degree != 0 && degree != 1)
        throw domain_error("rescaled_norm: degree must be 0 or 1");
    bool seen[6] = {false, false, false, false, false, false};
    for (double sv : G.s)
        for (double tv : G.t) seen[region_of(geo, sv, tv)] = true;
    for (int i = 1; i <= 5; ++i)
        if (!seen[i])
            throw domain_error("rescaled_norm: grid misses region " + std::to_string(i));

    int spin_lo = ncomp == GlueGrid::field_comps ? int(c_alpha) : int(r_dirac1);
    double hs = G.s[1] - G.s[0], ht = G.t[1] - G.t[0];

    auto weighted_sq = [&](const Eigen::VectorXcd& v, double extra) {
        double acc = 0;
        for (int is = 0; is < G.ns; ++is)
            for (int it = 0; it < G.nt; ++it) {
                int reg = region_of(geo, G.s[is], G.t[it]);
                double spin_w = reg == 2 ? geo.eps
                              : (reg == 1 || reg == 4) ? std::sqrt(geo.eps)
                                                       : 1.0;
                double quad = hs * ht *
                              ((is == 0 || is == G.ns - 1) ? 0.5 : 1.0) *
                              ((it == 0 || it == G.nt - 1) ? 0.5 : 1.0);
                for (int l = -G.cutoff; l <= G.cutoff; ++l)
                    for (int k = -G.cutoff; k <= G.cutoff; ++k)
                        for (int c = 0; c < ncomp; ++c) {
                            double w = c >= spin_lo ? spin_w : 1.0;
                            acc += quad * extra * w * w *
                                   std::norm(v[G.idx(is, it, l, k, c, ncomp)]);
                        }
            }
        return acc;
    };

    double total = weighted_sq(xi, 1.0);
    if (degree == 1) {
        Eigen::VectorXcd dx = Eigen::VectorXcd::Zero(xi.size());
        Eigen::VectorXcd dy = Eigen::VectorXcd::Zero(xi.size());
        Eigen::VectorXcd ds = Eigen::VectorXcd::Zero(xi.size());
        Eigen::VectorXcd dt = Eigen::VectorXcd::Zero(xi.size());
        for (int c = 0; c < ncomp; ++c) {
            d_mode(G, true, 1.0, xi, c, ncomp, dx, c, ncomp);
            d_mode(G, false, 1.0, xi, c, ncomp, dy, c, ncomp);
            d_s(G, false, 1.0, xi, c, ncomp, ds, c, ncomp);
            d_t(G, false, 1.0, xi, c, ncomp, dt, c, ncomp);
        }
        total += weighted_sq(dx, 1.0) + weighted_sq(dy, 1.0) + weighted_sq(ds, 1.0);
        total += weighted_sq(dt, geo.R * geo.R);
    }
    return std::sqrt(total);
}

struct GluePieces {
    std::array<Eigen::VectorXcd, 5> piece;  // one field per cutoff eta_1..eta_5
    Eigen::VectorXcd cap_plus, cap_minus;   // endpoint caps on the t axis
    // disk-map boundary values at angles {-pi, -pi/2, 0, pi/2} and the
    // required limit values {a_inf'', a^-, a_inf', a^+}
    std::array<cplx, 4> disk_boundary{};
    std::array<cplx, 4> limit_values{};
    double boundary_tol = 1e-6;
};

struct GluedConfiguration {
    NeckGeometry geo;
    GlueGrid grid;
    Eigen::VectorXcd xi;        // assembled approximate solution
    Eigen::VectorXcd residual;  // monopole map evaluated at xi
    double residual_norm = 0;   // rescaled degree-0 norm of the residual
};

// chi * (sum_i eta_i piece_i) + chi_- cap_minus + chi_+ cap_plus, after the
// disk-map boundary compatibility gate.
inline GluedConfiguration assemble_approximate(const GlueGrid& G,
                                               const NeckGeometry& geo,
                                               const GluePieces& P) {
    for (int i = 0; i < 4; ++i) {
        static const char* corner[4] = {"-pi", "-pi/2", "0", "pi/2"};
        if (std::abs(P.disk_boundary[i] - P.limit_values[i]) > P.boundary_tol)
            throw domain_error(std::string("assemble_approximate: disk map boundary "
                                           "mismatch at angle ") + corner[i]);
    }
    for (const auto& p : P.piece)
        if (p.size() != G.field_size())
            throw dimension_error("assemble_approximate: piece size mismatch");
    if (P.cap_plus.size() != G.field_size() || P.cap_minus.size() != G.field_size())
        throw dimension_error("assemble_approximate: cap size mismatch");

    PartitionProfiles prof = partition_profiles(geo);
    GluedConfiguration cfg;
    cfg.geo = geo;
    cfg.grid = G;
    cfg.xi = Eigen::VectorXcd::Zero(G.field_size());
    const int F = GlueGrid::field_comps;
    for (int is = 0; is < G.ns; ++is)
        for (int it = 0; it < G.nt; ++it) {
            double sv = G.s[is], tv = G.t[it];
            double chi = prof.chi(tv), cp = prof.chi_plus(tv), cm = prof.chi_minus(tv);
            double eta[5];
            for (int tag = 1; tag <= 5; ++tag) eta[tag - 1] = prof.eta(tag, sv, tv);
            for (int l = -G.cutoff; l <= G.cutoff; ++l)
                for (int k = -G.cutoff; k <= G.cutoff; ++k)
                    for (int c = 0; c < F; ++c) {
                        Eigen::Index id = G.idx(is, it, l, k, c, F);
                        cplx v{};
                        for (int j = 0; j < 5; ++j) v += eta[j] * P.piece[j][id];
                        cfg.xi[id] = chi * v + cp * P.cap_plus[id] + cm * P.cap_minus[id];
                    }
        }
    cfg.residual = sw_residual_map(G, cfg.xi);
    cfg.residual_norm = rescaled_norm(G, geo, cfg.residual, 0, NormSector::selfdual);
    return cfg;
}

// Conjugate gradients on the Re inner product for a self-adjoint
// positive-semidefinite real-linear operator.
template <class Op>
inline Eigen::VectorXcd cg_solve(Op&& A, const Eigen::VectorXcd& b, int max_iter,
                                 double rel_tol) {
    auto ip = [](const Eigen::VectorXcd& x, const Eigen::VectorXcd& y) {
        return x.dot(y).real();
    };
    Eigen::VectorXcd x = Eigen::VectorXcd::Zero(b.size());
    Eigen::VectorXcd r = b, p = b;
    double rs = ip(r, r), b0 = std::sqrt(rs);
    if (b0 == 0) return x;
    for (int it = 0; it < max_iter; ++it) {
        Eigen::VectorXcd Ap = A(p);
        double pap = ip(p, Ap);
        if (pap <= 0) break;  // left the positive cone: stop at the best iterate
        double alpha = rs / pap;
        x += alpha * p;
        r -= alpha * Ap;
        double rs_new = ip(r, r);
        if (std::sqrt(rs_new) <= rel_tol * b0) break;
        p = r + (rs_new / rs) * p;
        rs = rs_new;
    }
    return x;
}

// Smallest Ritz value of a self-adjoint operator from a Lanczos run with
// full reorthogonalization; an inexpensive stand-in for the smallest
// eigenvalue when the operator is too large to assemble.
template <class Op>
inline double min_eigenvalue_estimate(Op&& A, Eigen::Index dim, int steps,
                                      const Eigen::VectorXcd* start = nullptr,
                                      std::uint64_t seed = 1) {
    auto ip = [](const Eigen::VectorXcd& x, const Eigen::VectorXcd& y) {
        return x.dot(y).real();
    };
    Eigen::VectorXcd v(dim);
    if (start && start->size() == dim && start->norm() > 0) {
        v = *start;
    } else {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> gauss;
        for (Eigen::Index i = 0; i < dim; ++i) v[i] = cplx(gauss(rng), gauss(rng));
    }
    v /= std::sqrt(ip(v, v));
    int k = int(std::min<Eigen::Index>(steps, 2 * dim));
    std::vector<Eigen::VectorXcd> basis;
    Eigen::VectorXd alpha(k), beta(k);
    basis.push_back(v);
    int built = 0;
    Eigen::VectorXcd w;
    for (int j = 0; j < k; ++j) {
        w = A(basis[j]);
        alpha[j] = ip(basis[j], w);
        w -= alpha[j] * basis[j];
        if (j > 0) w -= beta[j - 1] * basis[j - 1];
        for (const auto& u : basis) w -= ip(u, w) * u;  // full reorthogonalization
        double nw = std::sqrt(ip(w, w));
        built = j + 1;
        if (nw < 1e-13) break;
        beta[j] = nw;
        basis.push_back(w / nw);
    }
    Eigen::MatrixXd Tm = Eigen::MatrixXd::Zero(built, built);
    for (int j = 0; j < built; ++j) {
        Tm(j, j) = alpha[j];
        if (j + 1 < built) Tm(j, j + 1) = Tm(j + 1, j) = beta[j];
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Tm);
    return es.eigenvalues().minCoeff();
}

struct NewtonOptions {
    int nu_max = 10;
    double tol = 1e-10;          // stop when the residual norm drops below
    int cg_max = 2000;
    double cg_tol = 1e-10;
    double sigma_min_gate = 1e-8;
    int lanczos_steps = 60;
    // orthonormal residual-space directions the solve works orthogonally to
    // (a closed desk model keeps an exact constant self-dual cokernel that
    // the open-manifold problem does not have)
    std::vector<Eigen::VectorXcd> drop;
};

// The constant self-dual rows at the zero torus mode: the exact cokernel a
// doubly periodic composite grid carries, returned orthonormalized.
inline std::vector<Eigen::VectorXcd> selfdual_constant_cokernel(const GlueGrid& G) {
    std::vector<Eigen::VectorXcd> out;
    const int R = GlueGrid::res_comps;
    for (int c : {r_xy, r_xs, r_xt}) {
        Eigen::VectorXcd v = Eigen::VectorXcd::Zero(G.res_size());
        for (int is = 0; is < G.ns; ++is)
            for (int it = 0; it < G.nt; ++it)
                v[G.idx(is, it, 0, 0, c, R)] = 1.0;
        v /= v.norm();
        out.push_back(v);
    }
    return out;
}

struct NewtonTraceRow {
    int nu = 0;
    double sigma_norm = 0;  // residual norm entering this step
    double xi_norm = 0;     // degree-1 norm of the correction taken
};

struct NewtonResult {
    Eigen::VectorXcd xi;
    std::vector<NewtonTraceRow> trace;
    double c0 = 0, c1 = 0, c2 = 0, c = 0;  // measured contraction constants
    double correction_norm = 0;            // degree-1 norm of xi - xi_start
    double sigma_min_estimate = 0;
    bool converged = false;
};

// Newton iteration on the normal equations: solve D D* eta = -sigma(Xi_nu),
// correct by D* eta, re-linearize, and track the measured constants
//   c0 = |sigma(Xi_0)| / eps^(1/2),  c1 >= |xi_nu|_1 / |sigma(Xi_nu)|,
//   c2 >= |sigma(Xi_nu+1)| / |xi_nu|_1^2,  c = c0 c1^2 c2.
// The problem object supplies sigma/dapply/dstar/norm0/norm1/epsilon.
template <class Problem>
inline NewtonResult newton_glue(const Problem& pb, Eigen::VectorXcd xi,
                                const NewtonOptions& opt = {}) {
    NewtonResult out;
    Eigen::VectorXcd xi_start = xi;
    auto project = [&](Eigen::VectorXcd v) {
        for (const auto& d : opt.drop) v -= d * d.dot(v);
        return v;
    };
    Eigen::VectorXcd r = project(pb.sigma(xi));
    double sn = pb.norm0(r);
    out.c0 = sn / std::sqrt(pb.epsilon());

    auto normal_op = [&](const Eigen::VectorXcd& y) {
        return project(pb.dapply(xi, pb.dstar(xi, project(y))));
    };
    if (sn <= opt.tol) {  // already a solution: no solve, no degeneracy gate
        out.converged = true;
        out.xi = xi;
        return out;
    }
    // probe the normal operator on the subspace generated by the residual:
    // directions the iteration never touches (exact cokernel constants a
    // closed model keeps) do not count against invertibility
    out.sigma_min_estimate =
        min_eigenvalue_estimate(normal_op, r.size(), opt.lanczos_steps, &r);
    if (out.sigma_min_estimate <= opt.sigma_min_gate)
        throw numerical_error(
            "newton_glue: linearization degeneracy, smallest normal-operator "
            "eigenvalue estimate " + std::to_string(out.sigma_min_estimate));

    for (int nu = 0; nu < opt.nu_max; ++nu) {
        if (sn <= opt.tol) {
            out.converged = true;
            break;
        }
        Eigen::VectorXcd eta = cg_solve(normal_op, Eigen::VectorXcd(-r),
                                        opt.cg_max, opt.cg_tol);
        Eigen::VectorXcd corr = pb.dstar(xi, project(eta));
        double xn = pb.norm1(corr);
        xi += corr;
        r = project(pb.sigma(xi));
        double sn_new = pb.norm0(r);
        out.trace.push_back({nu, sn, xn});
        if (sn > 0) out.c1 = std::max(out.c1, xn / sn);
        if (xn > 0) out.c2 = std::max(out.c2, sn_new / (xn * xn));
        sn = sn_new;
    }
    if (sn <= opt.tol) out.converged = true;
    out.c = out.c0 * out.c1 * out.c1 * out.c2;
    if (!out.trace.empty() && out.c >= 1.0)
        throw numerical_error("newton_glue: contraction failure, c0 " +
                              std::to_string(out.c0) + " c1 " + std::to_string(out.c1) +
                              " c2 " + std::to_string(out.c2));
    out.xi = xi;
    out.correction_norm = pb.norm1(xi - xi_start);
    // self-consistency of the traced constants: the geometric-sum bound on
    // the total correction in terms of the measured c's
    if (!out.trace.empty()) {
        double bound = out.c0 * out.c1 / (1.0 - std::min(out.c, 0.999999)) *
                       std::sqrt(pb.epsilon());
        if (out.correction_norm > bound * (1.0 + 1e-9))
            throw numerical_error("newton_glue: correction exceeds the traced bound");
    }
    return out;
}

// The composite-grid monopole problem in the shape newton_glue consumes.
struct NeckProblem {
    NeckGeometry geo;
    GlueGrid grid;

    Eigen::VectorXcd sigma(const Eigen::VectorXcd& x) const {
        return sw_residual_map(grid, x);
    }
    Eigen::VectorXcd dapply(const Eigen::VectorXcd& x0, const Eigen::VectorXcd& h) const {
        return sw_dapply(grid, x0, h);
    }
    Eigen::VectorXcd dstar(const Eigen::VectorXcd& x0, const Eigen::VectorXcd& y) const {
        return sw_dstar(grid, x0, y);
    }
    double norm0(const Eigen::VectorXcd& r) const {
        return rescaled_norm(grid, geo, r, 0, NormSector::selfdual);
    }
    double norm1(const Eigen::VectorXcd& x) const {
        return rescaled_norm(grid, geo, x, 1, NormSector::mixed_form);
    }
    double epsilon() const { return geo.eps; }
};

}  // namespace neckflow
