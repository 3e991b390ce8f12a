#pragma once

// Linearized spinor system on the end: the autonomous 8x8 octet matrix in
// the rescaled variable tau = e^rho, its closed-form eigenvalues, the
// non-autonomous perturbed matrix, and finite-energy spinor evaluation.

#include <array>
#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "neckflow/errors.hpp"
#include "neckflow/modes.hpp"

namespace neckflow {

using Mat8 = Eigen::Matrix<double, 8, 8>;
using Mat8c = Eigen::Matrix<std::complex<double>, 8, 8>;
using Vec8c = Eigen::Matrix<std::complex<double>, 8, 1>;

inline Eigen::Matrix2d dirac_block_A(int l, int k) {
    Eigen::Matrix2d A;
    A << l, -k, l, k;
    return A;
}

inline Eigen::Matrix2d dirac_block_B(int l, int k) {
    Eigen::Matrix2d B;
    B << -l, -k, l, -k;
    return 0.5 * B;
}

// Octet layout: (p, q)_{nlk}, (eta, xi)_{n+1,lk}, (p, q)_{-n-2,-l,-k},
// (eta, xi)_{-n-1,-l,-k} with alpha = eta + i xi, beta = p + i q.
inline Mat8 dirac_matrix(ModeIndex m) {
    Eigen::Matrix2d A = dirac_block_A(m.l, m.k);
    Eigen::Matrix2d B = dirac_block_B(m.l, m.k);
    Mat8 M = Mat8::Zero();
    M.block<2, 2>(0, 2) = A;
    M.block<2, 2>(2, 4) = B;
    M.block<2, 2>(4, 6) = -A;
    M.block<2, 2>(6, 0) = -B;
    return M;
}

enum class ModeClass { saddle, center, degenerate };

struct EigenReport {
    ModeIndex index;
    cplx eta0, eta1, eta2;
    std::array<cplx, 4> lambda;          // lambda_1..lambda_4 (spectrum is +-)
    std::array<ModeClass, 4> cls;
    double formula_vs_numeric = 0;       // worst multiset distance
};

// Principal square root with the imaginary part's signed zero normalized,
// so that sqrt(-4 - 0i) is +2i rather than -2i.
inline cplx principal_sqrt(cplx z) {
    if (z.imag() == 0.0) z = cplx(z.real(), 0.0);
    return std::sqrt(z);
}

inline std::array<cplx, 4> dirac_eigenvalue_formula(int l, int k) {
    cplx eta0 = principal_sqrt(cplx(double(k) * k + 6.0 * k * l + double(l) * l));
    cplx eta1 = double(k - l), eta2 = double(k + l);
    cplx s = eta1 * eta0, t = eta2 * eta2;
    return {0.5 * principal_sqrt(t + s), 0.5 * principal_sqrt(t - s),
            0.5 * principal_sqrt(-t - s), 0.5 * principal_sqrt(-t + s)};
}

inline std::array<ModeClass, 4> classify_modes(const std::array<cplx, 4>& lambda,
                                               double tol = 1e-10) {
    std::array<ModeClass, 4> out;
    for (int i = 0; i < 4; ++i) {
        if (std::abs(lambda[i]) <= tol)
            out[i] = ModeClass::degenerate;
        else if (std::abs(lambda[i].real()) > tol)
            out[i] = ModeClass::saddle;
        else
            out[i] = ModeClass::center;
    }
    return out;
}

// Greedy multiset distance between {+-formula} and the numerical spectrum.
inline double spectrum_multiset_distance(const std::array<cplx, 4>& lam,
                                         const Eigen::Matrix<cplx, 8, 1>& spec) {
    std::vector<cplx> want;
    for (const cplx& x : lam) {
        want.push_back(x);
        want.push_back(-x);
    }
    std::vector<cplx> have(spec.data(), spec.data() + 8);
    double worst = 0;
    for (cplx w : want) {
        double best = 1e300;
        std::size_t arg = 0;
        for (std::size_t j = 0; j < have.size(); ++j)
            if (std::abs(w - have[j]) < best) {
                best = std::abs(w - have[j]);
                arg = j;
            }
        worst = std::max(worst, best);
        have.erase(have.begin() + arg);
    }
    return worst;
}

inline EigenReport dirac_eigenvalues(ModeIndex m) {
    EigenReport rep;
    rep.index = m;
    rep.eta0 = std::sqrt(cplx(double(m.k) * m.k + 6.0 * m.k * m.l + double(m.l) * m.l));
    rep.eta1 = double(m.k - m.l);
    rep.eta2 = double(m.k + m.l);
    rep.lambda = dirac_eigenvalue_formula(m.l, m.k);
    rep.cls = classify_modes(rep.lambda);

    Eigen::EigenSolver<Mat8> es(dirac_matrix(m));
    rep.formula_vs_numeric = spectrum_multiset_distance(rep.lambda, es.eigenvalues());
    if (rep.formula_vs_numeric > 1e-8)
        throw consistency_error("dirac_eigenvalues: formula deviates from spectrum by " +
                                std::to_string(rep.formula_vs_numeric) + " at (" +
                                std::to_string(m.n) + "," + std::to_string(m.l) + "," +
                                std::to_string(m.k) + ")");
    return rep;
}

// Stable eigenvectors for the two saddle eigenvalues, normalized so the
// first entry of largest magnitude is real positive.
inline std::pair<Vec8c, Vec8c> stable_spinor_basis(ModeIndex m) {
    auto lam = dirac_eigenvalue_formula(m.l, m.k);
    if (std::abs(lam[0]) < 1e-10 || std::abs(lam[1]) < 1e-10)
        throw domain_error("stable_spinor_basis: degenerate saddle eigenvalue");

    Eigen::EigenSolver<Mat8> es(dirac_matrix(m));
    auto eigs = es.eigenvalues();
    auto vecs = es.eigenvectors();

    auto normalize = [](Vec8c v) {
        int arg = 0;
        double best = 0;
        for (int i = 0; i < 8; ++i)
            if (std::abs(v(i)) > best + 1e-12) {
                best = std::abs(v(i));
                arg = i;
            }
        v /= v(arg) / std::abs(v(arg));
        v.normalize();
        return v;
    };

    std::array<int, 2> pick{-1, -1};
    for (int which = 0; which < 2; ++which) {
        cplx target = -std::abs(lam[which]);
        double best = 1e300;
        for (int j = 0; j < 8; ++j) {
            if (j == pick[0]) continue;
            double d = std::abs(eigs(j) - target);
            if (d < best) {
                best = d;
                pick[which] = j;
            }
        }
        if (best > 1e-8)
            throw consistency_error("stable_spinor_basis: -|lambda| not in spectrum");
    }
    return {normalize(vecs.col(pick[0])), normalize(vecs.col(pick[1]))};
}

inline Vec8c finite_energy_spinor(ModeIndex m, cplx c1, cplx c2, double tau) {
    auto lam = dirac_eigenvalue_formula(m.l, m.k);
    if (c1 == cplx{} && c2 == cplx{}) return Vec8c::Zero();
    auto [U1, U2] = stable_spinor_basis(m);
    return c1 * std::exp(-std::abs(lam[0]) * tau) * U1 +
           c2 * std::exp(-std::abs(lam[1]) * tau) * U2;
}

inline Mat8c perturbed_dirac_matrix(ModeIndex m, double rho) {
    double er = std::exp(rho);
    Eigen::Matrix2d A = dirac_block_A(m.l, m.k);
    Eigen::Matrix2d B = dirac_block_B(m.l, m.k);
    Mat8c M = Mat8c::Zero();
    double n = m.n;
    M.block<2, 2>(0, 0) = cplx(n) * Eigen::Matrix2cd::Identity();
    M.block<2, 2>(0, 2) = er * A.cast<cplx>();
    M.block<2, 2>(2, 2) = cplx(-(n + 1)) * Eigen::Matrix2cd::Identity();
    M.block<2, 2>(2, 4) = er * B.cast<cplx>();
    M.block<2, 2>(4, 4) = cplx(-(n + 2)) * Eigen::Matrix2cd::Identity();
    M.block<2, 2>(4, 6) = -er * A.cast<cplx>();
    M.block<2, 2>(6, 0) = -er * B.cast<cplx>();
    M.block<2, 2>(6, 6) = cplx(n + 1) * Eigen::Matrix2cd::Identity();
    return M;
}

inline std::string mode_class_name(ModeClass c) {
    switch (c) {
        case ModeClass::saddle: return "saddle";
        case ModeClass::center: return "center";
        default: return "degenerate";
    }
}

}  // namespace neckflow
