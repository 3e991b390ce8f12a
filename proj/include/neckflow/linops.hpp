#pragma once

// Discretized linearized operators: the Neumann-series inverse of
// R^{-1} d/dt + L, the disk operators D1 (+) D2, the path operator
// R^{-1} d/dt + [[*d, -d, 0], [-d*, 0, 0], [0, 0, Dirac]], and
// smallest-singular-value surjectivity reports in weighted norms.

#include <array>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "neckflow/errors.hpp"
#include "neckflow/modes.hpp"
#include "neckflow/ode.hpp"

namespace neckflow {

struct OperatorMatrix {
    enum class Symmetry { self_adjoint, general };

    Mat M;
    Eigen::VectorXd domain_w, codomain_w;  // positive weights, sizes cols/rows
    Symmetry symmetry = Symmetry::general;
    std::string provenance;

    void validate() const {
        if (domain_w.size() != M.cols() || codomain_w.size() != M.rows())
            throw dimension_error("OperatorMatrix: weight sizes do not match matrix");
        if (domain_w.size() && domain_w.minCoeff() <= 0)
            throw domain_error("OperatorMatrix: domain weights must be positive");
        if (codomain_w.size() && codomain_w.minCoeff() <= 0)
            throw domain_error("OperatorMatrix: codomain weights must be positive");
        if (symmetry == Symmetry::self_adjoint) {
            if (M.rows() != M.cols() || (domain_w - codomain_w).norm() != 0)
                throw dimension_error("OperatorMatrix: self-adjoint tag needs matching spaces");
            Mat WM = codomain_w.asDiagonal() * M;
            if ((WM - WM.adjoint()).norm() > 1e-10 * (1.0 + WM.norm()))
                throw consistency_error("OperatorMatrix: self-adjoint tag violated");
        }
    }
};

inline OperatorMatrix make_operator(Mat M, OperatorMatrix::Symmetry sym,
                                    std::string provenance) {
    OperatorMatrix op;
    op.domain_w = Eigen::VectorXd::Ones(M.cols());
    op.codomain_w = Eigen::VectorXd::Ones(M.rows());
    op.M = std::move(M);
    op.symmetry = sym;
    op.provenance = std::move(provenance);
    op.validate();
    return op;
}

// Dense derivative matrix on a uniform grid: 4th-order central differences,
// with either periodic wraparound or one-sided 4th-order closure rows.
inline Eigen::MatrixXd time_derivative_matrix(const std::vector<double>& t, bool periodic) {
    int n = int(t.size());
    if (n < 6) throw domain_error("time_derivative_matrix: need at least 6 samples");
    double dt = t[1] - t[0];
    for (int i = 1; i + 1 < n; ++i)
        if (std::abs((t[i + 1] - t[i]) - dt) > 1e-12 * (1.0 + std::abs(dt)))
            throw domain_error("time_derivative_matrix: grid must be uniform");

    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(n, n);
    auto wrap = [&](int i) { return ((i % n) + n) % n; };
    if (periodic) {
        // the sample at t[n-1]+dt is identified with t[0]
        for (int i = 0; i < n; ++i) {
            D(i, wrap(i - 2)) += 1.0 / (12 * dt);
            D(i, wrap(i - 1)) += -8.0 / (12 * dt);
            D(i, wrap(i + 1)) += 8.0 / (12 * dt);
            D(i, wrap(i + 2)) += -1.0 / (12 * dt);
        }
        return D;
    }
    for (int i = 2; i + 2 < n; ++i) {
        D(i, i - 2) = 1.0 / (12 * dt);
        D(i, i - 1) = -8.0 / (12 * dt);
        D(i, i + 1) = 8.0 / (12 * dt);
        D(i, i + 2) = -1.0 / (12 * dt);
    }
    double f0[5] = {-25, 48, -36, 16, -3};
    double f1[5] = {-3, -10, 18, -6, 1};
    for (int j = 0; j < 5; ++j) {
        D(0, j) = f0[j] / (12 * dt);
        D(1, j) = f1[j] / (12 * dt);
        D(n - 1, n - 1 - j) = -f0[j] / (12 * dt);
        D(n - 2, n - 1 - j) = -f1[j] / (12 * dt);
    }
    return D;
}

// Dense space-time block matrix R^{-1} (D (x) I) + (I (x) L); the direct
// solve against it is the oracle for the Neumann series.
inline Mat space_time_matrix(const Mat& L, double R, const std::vector<double>& t,
                             bool periodic) {
    int n = int(L.rows()), T = int(t.size());
    Eigen::MatrixXd D = time_derivative_matrix(t, periodic);
    Mat A = Mat::Zero(n * T, n * T);
    for (int i = 0; i < T; ++i) {
        A.block(i * n, i * n, n, n) = L;
        for (int j = 0; j < T; ++j)
            if (D(i, j) != 0.0)
                A.block(i * n, j * n, n, n) += (D(i, j) / R) * Mat::Identity(n, n);
    }
    return A;
}

struct NeumannOptions {
    double C = 1.0;           // caller's bound on the norm of the inverse of L
    bool force = false;       // attempt the series even when C/R >= 1
    bool periodic = true;
    double increment_tol = 1e-12;
    double residual_tol = 1e-8;
    int max_terms = 500;
};

struct NeumannResult {
    std::vector<Vec> f;                // per time sample
    std::vector<double> increments;    // norm of each added series term
    int terms = 0;
    double residual = 0;               // relative residual of R^{-1}d/dt + L
};

inline NeumannResult neumann_solve(const OperatorMatrix& L, double R,
                                   const std::vector<Vec>& h, const std::vector<double>& t,
                                   const NeumannOptions& opt = {}) {
    L.validate();
    if (L.M.rows() != L.M.cols()) throw dimension_error("neumann_solve: L must be square");
    if (h.size() != t.size()) throw dimension_error("neumann_solve: h and t-grid size mismatch");
    int n = int(L.M.rows()), T = int(t.size());
    for (const Vec& hi : h)
        if (hi.size() != n) throw dimension_error("neumann_solve: sample dimension mismatch");
    if (!(R > 0)) throw domain_error("neumann_solve: R must be positive");
    if (opt.C / R >= 1.0 && !opt.force)
        throw numerical_error("neumann_solve: C/R >= 1, series convergence not guaranteed");

    Eigen::MatrixXd D = time_derivative_matrix(t, opt.periodic);
    Eigen::PartialPivLU<Mat> lu(L.M);

    auto block_norm = [&](const std::vector<Vec>& g) {
        double s = 0;
        for (const Vec& gi : g) s += gi.squaredNorm();
        return std::sqrt(s);
    };
    auto d_t = [&](const std::vector<Vec>& g) {
        std::vector<Vec> out(T, Vec::Zero(n));
        for (int i = 0; i < T; ++i)
            for (int j = 0; j < T; ++j)
                if (D(i, j) != 0.0) out[i] += D(i, j) * g[j];
        return out;
    };

    NeumannResult res;
    res.f.assign(T, Vec::Zero(n));
    std::vector<Vec> g(T);
    for (int i = 0; i < T; ++i) g[i] = lu.solve(h[i]);

    double hnorm = std::max(1.0, block_norm(h));
    double scale = 1.0;  // (-1)^k R^{-k}
    bool converged = false;
    for (int k = 0; k < opt.max_terms; ++k) {
        double inc = std::abs(scale) * block_norm(g);
        if (k > 0 && inc <= opt.increment_tol * hnorm) {
            converged = true;
            break;
        }
        res.increments.push_back(inc);
        for (int i = 0; i < T; ++i) res.f[i] += scale * g[i];
        ++res.terms;
        std::vector<Vec> dg = d_t(g);
        for (int i = 0; i < T; ++i) g[i] = lu.solve(dg[i]);
        scale *= -1.0 / R;
    }
    if (!converged)
        throw numerical_error("neumann_solve: series did not converge in max_terms");

    std::vector<Vec> df = d_t(res.f);
    double rnorm = 0;
    for (int i = 0; i < T; ++i) rnorm += (df[i] / R + L.M * res.f[i] - h[i]).squaredNorm();
    res.residual = std::sqrt(rnorm) / hnorm;
    if (res.residual > opt.residual_tol)
        throw numerical_error("neumann_solve: residual " + std::to_string(res.residual) +
                              " exceeds tolerance");
    return res;
}

namespace detail {

inline std::array<double, 2> nearest_lattice_point_2(double ax, double ay) {
    return {std::round(ax), std::round(ay)};
}

}  // namespace detail

// Disk operator D1 (+) D2 on fields (u, v, f, alpha, beta)(rho, theta) at a
// fixed transverse mode (l, k). theta enters through modes |n| <= cutoff, rho
// through a uniform grid with 4th-order differences. Fields are pinned to
// zero at the last rho point (compact support toward the disk boundary), so
// the unknowns and collocation rows run over the first size-1 grid points;
// index layout is (field, rho point, theta mode + cutoff) with field order
// u, v, f, alpha, beta. The flat connection sample a(rho) twists the spinor
// rows; it must keep clear of the integer lattice where the twisted dbar
// operator degenerates.
inline OperatorMatrix assemble_disk_operator(const std::vector<std::array<double, 2>>& a,
                                             double R, int cutoff,
                                             const std::vector<double>& rho, int l, int k,
                                             double margin = 1e-3) {
    if (rho.empty() || a.empty()) throw domain_error("assemble_disk_operator: empty grid");
    if (a.size() != rho.size())
        throw dimension_error("assemble_disk_operator: connection samples must match rho grid");
    if (cutoff < 0) throw domain_error("assemble_disk_operator: negative cutoff");
    if (!(R > 0)) throw domain_error("assemble_disk_operator: R must be positive");

    for (const auto& s : a) {
        auto near = detail::nearest_lattice_point_2(s[0], s[1]);
        double d = std::hypot(s[0] - near[0], s[1] - near[1]);
        if (d <= margin)
            throw domain_error("assemble_disk_operator: connection within margin of bad point (" +
                               std::to_string(int(near[0])) + "," + std::to_string(int(near[1])) +
                               ")");
    }

    int Nfull = int(rho.size()), Nr = Nfull - 1, Nn = 2 * cutoff + 1;
    if (Nr < 6) throw domain_error("assemble_disk_operator: need at least 7 rho points");
    Eigen::MatrixXd Dr = time_derivative_matrix(rho, false);
    auto at = [&](int field, int i, int n) { return (field * Nr + i) * Nn + (n + cutoff); };
    int dim = 5 * Nr * Nn;
    Mat M = Mat::Zero(dim, dim);
    const cplx I{0, 1};

    for (int i = 0; i < Nr; ++i) {
        double e2 = std::exp(2.0 * rho[i]), er = std::exp(rho[i]);
        cplx mu = 0.5 * (I * (l + a[i][0]) - (k + a[i][1]));  // twisted dbar multiplier
        for (int n = -cutoff; n <= cutoff; ++n) {
            // d/drho on every field; the column at the pinned endpoint drops
            for (int j = 0; j < Nr; ++j) {
                if (Dr(i, j) == 0.0) continue;
                for (int f = 0; f < 3; ++f) M(at(f, i, n), at(f, j, n)) += Dr(i, j);
                M(at(3, i, n), at(3, j, n)) += Dr(i, j) / R;
                M(at(4, i, n), at(4, j, n)) += Dr(i, j) / R;
            }
            // (d/drho - *d/dtheta) on (u,v) plus R^{-2} *d f
            M(at(0, i, n), at(1, i, n)) += I * double(n);
            M(at(1, i, n), at(0, i, n)) -= I * double(n);
            M(at(0, i, n), at(2, i, n)) += -I * double(k) / (R * R);
            M(at(1, i, n), at(2, i, n)) += I * double(l) / (R * R);
            // f row: -e^{2rho} *d a
            M(at(2, i, n), at(0, i, n)) += -e2 * I * double(k);
            M(at(2, i, n), at(1, i, n)) += e2 * I * double(l);
            // spinor rows: R^{-1}(-i d/dtheta) on alpha, R^{-1}(+i d/dtheta) on beta
            M(at(3, i, n), at(3, i, n)) += double(n) / R;
            M(at(4, i, n), at(4, i, n)) += -double(n) / R;
            // e^{rho+i theta} shifts the theta mode up, its conjugate down
            if (n - 1 >= -cutoff) M(at(3, i, n), at(4, i, n - 1)) += -er * I * std::conj(mu);
            if (n + 1 <= cutoff) M(at(4, i, n), at(3, i, n + 1)) += er * I * mu;
        }
    }
    return make_operator(std::move(M), OperatorMatrix::Symmetry::general, "disk D1+D2");
}

// Path operator at a single mode m = (n, l, k) (interpreted as the integer
// frequency vector (l, k, n)): R^{-1} d/dt plus the first-order block
// [[*d, -d, 0], [-d*, 0, 0], [0, 0, Dirac]] twisted by a flat path a(t).
inline OperatorMatrix assemble_path_operator(ModeIndex m,
                                             const std::vector<std::array<double, 3>>& a_path,
                                             double R, const std::vector<double>& t,
                                             bool periodic, double margin = 1e-3) {
    if (t.empty()) throw domain_error("assemble_path_operator: empty grid");
    if (a_path.size() != t.size())
        throw dimension_error("assemble_path_operator: path samples must match t-grid");
    if (!(R > 0)) throw domain_error("assemble_path_operator: R must be positive");

    for (const auto& s : a_path) {
        double d = std::hypot(std::hypot(s[0] - std::round(s[0]), s[1] - std::round(s[1])),
                              s[2] - std::round(s[2]));
        if (d <= margin)
            throw domain_error("assemble_path_operator: path within margin of bad point");
    }

    int T = int(t.size());
    Eigen::MatrixXd Dt = time_derivative_matrix(t, periodic);
    const int nb = 6;  // (v1, v2, v3, h, psi1, psi2)
    Mat M = Mat::Zero(nb * T, nb * T);
    const cplx I{0, 1};
    double m1 = m.l, m2 = m.k, m3 = m.n;

    for (int i = 0; i < T; ++i) {
        for (int j = 0; j < T; ++j)
            if (Dt(i, j) != 0.0)
                M.block(nb * i, nb * j, nb, nb) +=
                    (Dt(i, j) / R) * Mat::Identity(nb, nb);
        auto B = M.block(nb * i, nb * i, nb, nb);
        // curl rows: i m x v, minus gradient of h
        B(0, 1) += -I * m3; B(0, 2) += I * m2; B(0, 3) += -I * m1;
        B(1, 0) += I * m3;  B(1, 2) += -I * m1; B(1, 3) += -I * m2;
        B(2, 0) += -I * m2; B(2, 1) += I * m1;  B(2, 3) += -I * m3;
        // -d* row: i m . v
        B(3, 0) += I * m1; B(3, 1) += I * m2; B(3, 2) += I * m3;
        // Dirac block with twisted frequency p = m + a(t)
        double p1 = m1 + a_path[i][0], p2 = m2 + a_path[i][1], p3 = m3 + a_path[i][2];
        B(4, 4) += p3; B(4, 5) += cplx(p1, -p2);
        B(5, 4) += cplx(p1, p2); B(5, 5) += -p3;
    }
    return make_operator(std::move(M), OperatorMatrix::Symmetry::general, "path operator");
}

struct SurjectivityReport {
    double sigma_min = 0;
    int cokernel_dim = 0;               // adjoint-kernel count at the 1e-8 threshold
    std::vector<double> trailing;       // smallest singular values, ascending
};

inline SurjectivityReport surjectivity_report(const OperatorMatrix& op) {
    op.validate();
    Mat W = op.codomain_w.cwiseSqrt().asDiagonal() * op.M *
            op.domain_w.cwiseSqrt().cwiseInverse().asDiagonal();
    Eigen::BDCSVD<Mat> svd(W);
    const auto& sv = svd.singularValues();
    SurjectivityReport rep;
    rep.sigma_min = sv.size() ? sv(sv.size() - 1) : 0.0;
    rep.cokernel_dim = int(std::max<Eigen::Index>(op.M.rows() - op.M.cols(), 0));
    for (int i = 0; i < sv.size(); ++i)
        if (sv(i) < 1e-8) ++rep.cokernel_dim;
    for (int i = int(sv.size()) - 1; i >= 0 && rep.trailing.size() < 10; --i)
        rep.trailing.push_back(sv(i));
    return rep;
}

}  // namespace neckflow
