#pragma once

// Nonlinear radial-gauge mode system: the full right-hand side with quadratic
// spinor couplings, its one-factor-frozen linearization and the successive
// approximation solver, the perturbation class (decay-weighted finite bases
// with coefficient callables), the stable/unstable two-block splitting, the
// action-difference identity for flow trajectories, the uniform estimate
// table, and the small-eigenvalue counting arithmetic.

#include <array>
#include <cmath>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "neckflow/errors.hpp"
#include "neckflow/fit.hpp"
#include "neckflow/linops.hpp"
#include "neckflow/modes.hpp"
#include "neckflow/ode.hpp"

namespace neckflow {

struct PerturbationMode {
    ModeIndex index{0, 0, 0};
    cplx p{};            // density component entering the f equation
    cplx qx{}, qy{};     // 1-form components entering the (u, v) equations
    cplx nu0{}, nu1{}, nu2{};  // spinor pairing components
};

// Finite perturbation family: each basis element sits at one mode index; the
// coefficient callables play the role of the functional derivatives and see
// the frozen state and the radial coordinate.
struct PerturbationSpec {
    double delta = 1.0;      // decay weight of the cylinder profile
    double bound = 1.0;      // declared norm constant C(P) = C(U,V)
    double lipschitz = 1.0;  // declared Lipschitz bound of the callables
    std::vector<PerturbationMode> modes;
    std::function<cplx(const ModeField&, double, std::size_t)> dU, dV;

    double profile(double s, double r) const { return std::exp(-delta * (s + r)); }

    // integral of exp(-delta e^rho cos theta) over the span (the full-line
    // integral printed alongside the estimate diverges toward rho -> -infty,
    // where the integrand tends to 1, so the span is the caller's)
    double envelope(double theta, double rho_lo, double rho_hi, int samples = 2001) const {
        auto rho = linspace(rho_lo, rho_hi, samples);
        double h = rho[1] - rho[0], acc = 0;
        for (int i = 0; i < samples; ++i) {
            double w = (i == 0 || i == samples - 1) ? 0.5 : 1.0;
            acc += w * std::exp(-delta * std::exp(rho[i]) * std::cos(theta));
        }
        return acc * h;
    }

    // 2x2 spinor coupling matrix entries at a frozen state
    std::array<cplx, 4> spinor_matrix(const ModeField& frozen, double rho,
                                      std::size_t j) const {
        cplx dv = dV ? dV(frozen, rho, j) : cplx{};
        const PerturbationMode& pm = modes[j];
        const cplx I{0, 1};
        return {dv * I * pm.nu0, dv * (-pm.nu1 + I * pm.nu2),
                dv * (pm.nu1 + I * pm.nu2), dv * (-I * pm.nu0)};
    }

    // norm of the spinor coupling applied to the state (matrix part only,
    // without the radial prefactor), for checking the declared bound
    double spinor_action_norm(const ModeField& state, double rho) const {
        ModeField out(state.cutoff);
        const cplx I{0, 1};
        for (std::size_t j = 0; j < modes.size(); ++j) {
            auto [p11, p12, p21, p22] = spinor_matrix(state, rho, j);
            for (const auto& [m, c] : state.entries) {
                ModeIndex mu = {m.n + modes[j].index.n, m.l + modes[j].index.l,
                                m.k + modes[j].index.k};
                out.add(mu, Slot::alpha,
                        conv_factor * (p11 * c[Slot::alpha] + p12 * c[Slot::beta]));
                out.add(mu, Slot::beta,
                        conv_factor * (p21 * c[Slot::alpha] + p22 * c[Slot::beta]));
            }
        }
        SlotWeights w;
        w.u = w.v = w.f = 0;
        return parseval_norm(out, w);
    }
};

namespace detail {

// Right-hand side with the first factor of every quadratic term frozen at Z
// and the unknowns taken from S; Z == S reproduces the full nonlinear system,
// and for fixed Z the map S -> rhs is (real-)linear, which is exactly the
// system the successive approximation integrates.
inline ModeField sw_mixed_rhs(const ModeField& Z, const ModeField& S, double rho,
                              const PerturbationSpec* pert) {
    if (Z.cutoff != S.cutoff) throw dimension_error("sw_rhs: cutoff mismatch");
    int N = S.cutoff;
    double e2 = std::exp(2.0 * rho), er = std::exp(rho);
    const cplx I{0, 1};

    ModeField abar = conjugate_field(Z, Slot::alpha);
    ModeField bbar = conjugate_field(Z, Slot::beta);
    ModeField az(N);  // frozen complex connection combination u + iv
    for (const auto& [m, c] : Z.entries)
        if (c[Slot::u] != cplx{} || c[Slot::v] != cplx{})
            az.set(m, Slot::u, c[Slot::u] + I * c[Slot::v]);

    ModeField sbbar = conjugate_field(S, Slot::beta);
    ModeField t_ab = convolve(abar, S, Slot::u, Slot::beta);     // (conj(alpha) beta)
    ModeField t_aa = convolve(abar, S, Slot::u, Slot::alpha);    // (conj(alpha) alpha)
    ModeField t_bb = convolve(bbar, S, Slot::u, Slot::beta);     // (conj(beta) beta)
    ModeField t_abb = convolve(az, sbbar, Slot::u, Slot::u);     // (a conj(beta))
    ModeField t_fa = convolve(Z, S, Slot::f, Slot::alpha);       // (f alpha)
    ModeField t_aa2 = convolve(az, S, Slot::u, Slot::alpha);     // (a alpha)
    ModeField t_fb = convolve(Z, S, Slot::f, Slot::beta);        // (f beta)

    ModeField out(N);
    for (int n = -N; n <= N; ++n)
        for (int l = -N; l <= N; ++l)
            for (int k = -N; k <= N; ++k) {
                ModeIndex m{n, l, k};
                cplx u = S.get(m, Slot::u), v = S.get(m, Slot::v), f = S.get(m, Slot::f);
                cplx al = S.get(m, Slot::alpha), be = S.get(m, Slot::beta);
                cplx g = t_ab.get(m, Slot::u), gr = std::conj(t_ab.get(-m, Slot::u));

                cplx up = -I * double(n) * v + I * double(k) * f + I * (g + gr);
                cplx vp = I * double(n) * u - I * double(l) * f + (g - gr);
                // the density source carries the i/2 of the curvature
                // equation, which also keeps the connection slots on the
                // anti-hermitian (real-field) constraint under the flow
                cplx fp = I * double(k) * e2 * u - I * double(l) * e2 * v +
                          e2 * 0.5 * I *
                              (t_aa.get(m, Slot::u) - t_bb.get(m, Slot::u));
                cplx shift_beta = std::conj(S.get({n + 1, l, k}, Slot::beta));
                cplx alp = -double(n) * al +
                           I * er * 0.5 * (I * double(l) - double(k)) * shift_beta +
                           I * er * 0.5 * t_abb.get(m, Slot::u) + I * t_fa.get(m, Slot::u);
                cplx bep = double(n) * be -
                           I * er * (I * double(l) - double(k)) *
                               S.get({n + 1, l, k}, Slot::alpha) -
                           I * er * t_aa2.get(m, Slot::u) - I * t_fb.get(m, Slot::u);

                if (up != cplx{}) out.set(m, Slot::u, up);
                if (vp != cplx{}) out.set(m, Slot::v, vp);
                if (fp != cplx{}) out.set(m, Slot::f, fp);
                if (alp != cplx{}) out.set(m, Slot::alpha, alp);
                if (bep != cplx{}) out.set(m, Slot::beta, bep);
            }

    if (pert) {
        for (std::size_t j = 0; j < pert->modes.size(); ++j) {
            const PerturbationMode& pm = pert->modes[j];
            cplx du = pert->dU ? pert->dU(Z, rho, j) : cplx{};
            // inhomogeneous connection terms at the basis mode
            out.add(pm.index, Slot::f, e2 * du * pm.p);
            out.add(pm.index, Slot::u, -du * pm.qy);
            out.add(pm.index, Slot::v, du * pm.qx);
            // spinor coupling, carried by the same radial factors as the
            // twisting terms; e^{+-i theta} shifts the theta mode by +-1
            auto [p11, p12, p21, p22] = pert->spinor_matrix(Z, rho, j);
            for (const auto& [m, c] : S.entries) {
                ModeIndex mu{m.n + pm.index.n, m.l + pm.index.l, m.k + pm.index.k};
                out.add({mu.n + 1, mu.l, mu.k}, Slot::alpha,
                        I * er * conv_factor *
                            (p11 * c[Slot::alpha] + p12 * c[Slot::beta]));
                out.add({mu.n - 1, mu.l, mu.k}, Slot::beta,
                        -I * er * conv_factor *
                            (p21 * c[Slot::alpha] + p22 * c[Slot::beta]));
            }
        }
    }
    return out;
}

}  // namespace detail

inline ModeField sw_rhs(const ModeField& state, double rho,
                        const PerturbationSpec* pert = nullptr) {
    return detail::sw_mixed_rhs(state, state, rho, pert);
}

inline ModeField sw_linearized_rhs(const ModeField& frozen, const ModeField& state,
                                   double rho, const PerturbationSpec* pert = nullptr) {
    return detail::sw_mixed_rhs(frozen, state, rho, pert);
}

inline double field_distance(const ModeField& A, const ModeField& B) {
    ModeField diff(A.cutoff);
    for (int s = 0; s < 5; ++s) {
        Slot slot = Slot(s);
        for (const auto& [m, c] : A.entries) diff.add(m, slot, c[slot]);
        for (const auto& [m, c] : B.entries) diff.add(m, slot, -c[slot]);
    }
    return parseval_norm(diff);
}

// Field samples on a uniform rho grid with 4-point Lagrange evaluation
// between the nodes, used to freeze an iterate inside the next integration.
struct SampledField {
    std::vector<double> rho;
    std::vector<ModeField> samples;

    ModeField eval(double r) const {
        int n = int(rho.size());
        double h = rho[1] - rho[0];
        int i = int(std::floor((r - rho[0]) / h));
        i = std::max(1, std::min(i, n - 3));
        std::array<int, 4> at{i - 1, i, i + 1, i + 2};
        std::array<double, 4> w;
        for (int a = 0; a < 4; ++a) {
            w[a] = 1.0;
            for (int b = 0; b < 4; ++b)
                if (a != b) w[a] *= (r - rho[at[b]]) / (rho[at[a]] - rho[at[b]]);
        }
        ModeField out(samples[0].cutoff);
        for (int a = 0; a < 4; ++a)
            for (const auto& [m, c] : samples[at[a]].entries)
                for (int s = 0; s < 5; ++s) out.add(m, Slot(s), w[a] * c[Slot(s)]);
        return out;
    }
};

struct ApproxResult {
    std::vector<SampledField> iterates;   // nu = 0 .. nu_max
    std::vector<double> sup_distance;     // between consecutive iterates
};

// Successive approximation: integrate the frozen-linear system along the
// grid, re-anchored at the first grid point, iterating nu_max times.
inline ApproxResult successive_approximation(
    const std::function<ModeField(double)>& xi0, int nu_max,
    const std::vector<double>& grid, const PerturbationSpec* pert = nullptr,
    double divergence_threshold = 1e6) {
    if (grid.size() < 4) throw domain_error("successive_approximation: grid too small");

    ApproxResult res;
    SampledField first;
    first.rho = grid;
    for (double r : grid) first.samples.push_back(xi0(r));
    res.iterates.push_back(std::move(first));

    for (int nu = 0; nu < nu_max; ++nu) {
        const SampledField& prev = res.iterates.back();
        SampledField next;
        next.rho = grid;
        ModeField y = prev.samples.front();
        next.samples.push_back(y);
        auto rhs = [&](const ModeField& state, double r) {
            return sw_linearized_rhs(prev.eval(r), state, r, pert);
        };
        auto axpy = [](ModeField acc, const ModeField& d, double fac) {
            for (const auto& [m, c] : d.entries)
                for (int s = 0; s < 5; ++s) acc.add(m, Slot(s), fac * c[Slot(s)]);
            return acc;
        };
        for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
            double h = grid[i + 1] - grid[i], r = grid[i];
            ModeField k1 = rhs(y, r);
            ModeField k2 = rhs(axpy(y, k1, h / 2), r + h / 2);
            ModeField k3 = rhs(axpy(y, k2, h / 2), r + h / 2);
            ModeField k4 = rhs(axpy(y, k3, h), r + h);
            y = axpy(axpy(axpy(axpy(y, k1, h / 6), k2, h / 3), k3, h / 3), k4, h / 6);
            if (parseval_norm(y) > divergence_threshold)
                throw numerical_error("successive_approximation: iterate " +
                                      std::to_string(nu + 1) + " diverged");
            next.samples.push_back(y);
        }
        double dist = 0;
        for (std::size_t i = 0; i < grid.size(); ++i)
            dist = std::max(dist, field_distance(next.samples[i], prev.samples[i]));
        res.sup_distance.push_back(dist);
        res.iterates.push_back(std::move(next));
    }
    return res;
}

// Direct nonlinear integration of the full system along the grid (RK4).
inline SampledField integrate_flow(const ModeField& state0,
                                   const std::vector<double>& grid,
                                   const PerturbationSpec* pert = nullptr,
                                   double divergence_threshold = 1e6) {
    if (grid.size() < 2) throw domain_error("integrate_flow: need >= 2 grid points");
    SampledField out;
    out.rho = grid;
    ModeField y = state0;
    out.samples.push_back(y);
    auto axpy = [](ModeField acc, const ModeField& d, double fac) {
        for (const auto& [m, c] : d.entries)
            for (int s = 0; s < 5; ++s) acc.add(m, Slot(s), fac * c[Slot(s)]);
        return acc;
    };
    for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
        double h = grid[i + 1] - grid[i], r = grid[i];
        ModeField k1 = sw_rhs(y, r, pert);
        ModeField k2 = sw_rhs(axpy(y, k1, h / 2), r + h / 2, pert);
        ModeField k3 = sw_rhs(axpy(y, k2, h / 2), r + h / 2, pert);
        ModeField k4 = sw_rhs(axpy(y, k3, h), r + h, pert);
        y = axpy(axpy(axpy(axpy(y, k1, h / 6), k2, h / 3), k3, h / 3), k4, h / 6);
        if (parseval_norm(y) > divergence_threshold)
            throw numerical_error("integrate_flow: state diverged");
        out.samples.push_back(y);
    }
    return out;
}

struct TwoBlockSplit {
    Mat stable, unstable;          // diagonal blocks in the split eigenbasis
    Mat proj_stable, proj_unstable, proj_center;
    std::vector<cplx> stable_eigs, unstable_eigs, center_eigs;
    double lambda0 = 0;            // min |Re| over the stable block
    std::pair<double, double> weight_window{0, 0};  // (-lambda0, 0)
};

inline TwoBlockSplit two_block_split(const Mat& M, double center_tol = 1e-10,
                                     double margin = 1e-8) {
    if (M.rows() != M.cols()) throw dimension_error("two_block_split: square matrix required");
    Eigen::ComplexEigenSolver<Mat> es(M);
    const auto& lam = es.eigenvalues();
    const Mat& V = es.eigenvectors();
    Mat Vinv = V.inverse();

    TwoBlockSplit out;
    int n = int(M.rows());
    Mat sel_s = Mat::Zero(n, n), sel_u = Mat::Zero(n, n), sel_c = Mat::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        double re = lam(i).real();
        if (std::abs(re) <= center_tol) {
            out.center_eigs.push_back(lam(i));
            sel_c(i, i) = 1;
        } else if (std::abs(re) < margin) {
            throw numerical_error("two_block_split: eigenvalue with near-zero real part " +
                                  std::to_string(re));
        } else if (re < 0) {
            out.stable_eigs.push_back(lam(i));
            sel_s(i, i) = 1;
        } else {
            out.unstable_eigs.push_back(lam(i));
            sel_u(i, i) = 1;
        }
    }
    out.proj_stable = V * sel_s * Vinv;
    out.proj_unstable = V * sel_u * Vinv;
    out.proj_center = V * sel_c * Vinv;
    out.stable = Mat::Zero(int(out.stable_eigs.size()), int(out.stable_eigs.size()));
    for (std::size_t i = 0; i < out.stable_eigs.size(); ++i)
        out.stable(i, i) = out.stable_eigs[i];
    out.unstable = Mat::Zero(int(out.unstable_eigs.size()), int(out.unstable_eigs.size()));
    for (std::size_t i = 0; i < out.unstable_eigs.size(); ++i)
        out.unstable(i, i) = out.unstable_eigs[i];
    out.lambda0 = 1e300;
    for (cplx z : out.stable_eigs) out.lambda0 = std::min(out.lambda0, std::abs(z.real()));
    if (out.stable_eigs.empty()) out.lambda0 = 0;
    out.weight_window = {-out.lambda0, 0.0};
    return out;
}

// 3-d structures on the torus model: the connection difference lives in the
// (u, v, f) slots with frequency vector (l, k, n), the spinor in
// (alpha, beta).

inline std::array<double, 3> freq(ModeIndex m) {
    return {double(m.l), double(m.k), double(m.n)};
}

// curl in mode space: (i m x b)
inline std::array<cplx, 3> curl_mode(ModeIndex m, cplx bx, cplx by, cplx bz) {
    const cplx I{0, 1};
    auto q = freq(m);
    return {I * (q[1] * bz - q[2] * by), I * (q[2] * bx - q[0] * bz),
            I * (q[0] * by - q[1] * bx)};
}

// sigma(psi, psi) components as mode fields (slots u, v, f of the output)
inline ModeField sigma_form(const ModeField& S) {
    ModeField abar = conjugate_field(S, Slot::alpha);
    ModeField bbar = conjugate_field(S, Slot::beta);
    ModeField ab = convolve(abar, S, Slot::u, Slot::beta);
    ModeField ba = convolve(bbar, S, Slot::u, Slot::alpha);
    ModeField aa = convolve(abar, S, Slot::u, Slot::alpha);
    ModeField bb = convolve(bbar, S, Slot::u, Slot::beta);
    const cplx I{0, 1};
    ModeField out(S.cutoff);
    for (int n = -S.cutoff; n <= S.cutoff; ++n)
        for (int l = -S.cutoff; l <= S.cutoff; ++l)
            for (int k = -S.cutoff; k <= S.cutoff; ++k) {
                ModeIndex m{n, l, k};
                cplx s1 = ab.get(m, Slot::u) + ba.get(m, Slot::u);
                cplx s2 = -I * ab.get(m, Slot::u) + I * ba.get(m, Slot::u);
                cplx s3 = aa.get(m, Slot::u) - bb.get(m, Slot::u);
                if (s1 != cplx{}) out.set(m, Slot::u, s1);
                if (s2 != cplx{}) out.set(m, Slot::v, s2);
                if (s3 != cplx{}) out.set(m, Slot::f, s3);
            }
    return out;
}

// twisted Dirac in mode space: sum_j sigma_j ((m_j + b_j *) psi)
inline ModeField dirac_apply(const ModeField& S) {
    ModeField tw1 = convolve(S, S, Slot::u, Slot::alpha);
    ModeField tw1b = convolve(S, S, Slot::u, Slot::beta);
    ModeField tw2 = convolve(S, S, Slot::v, Slot::alpha);
    ModeField tw2b = convolve(S, S, Slot::v, Slot::beta);
    ModeField tw3 = convolve(S, S, Slot::f, Slot::alpha);
    ModeField tw3b = convolve(S, S, Slot::f, Slot::beta);
    const cplx I{0, 1};
    ModeField out(S.cutoff);
    for (int n = -S.cutoff; n <= S.cutoff; ++n)
        for (int l = -S.cutoff; l <= S.cutoff; ++l)
            for (int k = -S.cutoff; k <= S.cutoff; ++k) {
                ModeIndex m{n, l, k};
                auto q = freq(m);
                cplx al = S.get(m, Slot::alpha), be = S.get(m, Slot::beta);
                cplx m1a = q[0] * al + tw1.get(m, Slot::u);
                cplx m1b = q[0] * be + tw1b.get(m, Slot::u);
                cplx m2a = q[1] * al + tw2.get(m, Slot::u);
                cplx m2b = q[1] * be + tw2b.get(m, Slot::u);
                cplx m3a = q[2] * al + tw3.get(m, Slot::u);
                cplx m3b = q[2] * be + tw3b.get(m, Slot::u);
                cplx oa = m3a + m1b - I * m2b;
                cplx ob = m1a + I * m2a - m3b;
                if (oa != cplx{}) out.set(m, Slot::alpha, oa);
                if (ob != cplx{}) out.set(m, Slot::beta, ob);
            }
    return out;
}

// action functional: -(1/2) int b ^ db + int <psi, D_A psi>
struct ActionValue {
    double connection = 0;
    double spinor = 0;
    double total() const { return connection + spinor; }
};

inline ActionValue csd_action(const ModeField& S) {
    ActionValue out;
    cplx conn{};
    for (const auto& [m, c] : S.entries) {
        auto cb = curl_mode(m, c[Slot::u], c[Slot::v], c[Slot::f]);
        conn += S.get(-m, Slot::u) * cb[0] + S.get(-m, Slot::v) * cb[1] +
                S.get(-m, Slot::f) * cb[2];
    }
    out.connection = -0.5 * conn.real();

    ModeField D = dirac_apply(S);
    cplx sp{};
    for (const auto& [m, c] : S.entries)
        sp += std::conj(c[Slot::alpha]) * D.get(m, Slot::alpha) +
              std::conj(c[Slot::beta]) * D.get(m, Slot::beta);
    out.spinor = sp.real();
    return out;
}

// residual of the 3-d critical point equations *F = sigma(psi,psi), D psi = 0
inline double sw3_residual(const ModeField& S) {
    ModeField sig = sigma_form(S);
    double acc = 0;
    for (int n = -S.cutoff; n <= S.cutoff; ++n)
        for (int l = -S.cutoff; l <= S.cutoff; ++l)
            for (int k = -S.cutoff; k <= S.cutoff; ++k) {
                ModeIndex m{n, l, k};
                auto cb = curl_mode(m, S.get(m, Slot::u), S.get(m, Slot::v),
                                    S.get(m, Slot::f));
                acc += std::norm(cb[0] - sig.get(m, Slot::u)) +
                       std::norm(cb[1] - sig.get(m, Slot::v)) +
                       std::norm(cb[2] - sig.get(m, Slot::f));
            }
    ModeField D = dirac_apply(S);
    SlotWeights w;
    w.u = w.v = w.f = 0;
    double dn = parseval_norm(D, w);
    return std::sqrt(acc) + dn;
}

struct EnergyReport {
    double csd_initial = 0, csd_final = 0;   // full action values
    double conn_initial = 0, conn_final = 0; // connection part only
    double e_r = 0;                          // csd_initial - csd_final
    double topological = 0;                  // -int int F ^ d_t A dt
    double gap = 0;                          // identity defect, connection part
    double s0 = 0;
};

inline EnergyReport energy_identity(const std::vector<ModeField>& traj,
                                    const std::vector<double>& t,
                                    double residual_tol = 1e-6) {
    if (traj.size() != t.size() || traj.size() < 6)
        throw dimension_error("energy_identity: need matching trajectory and t-grid (>= 6)");
    double r0 = sw3_residual(traj.front()), r1 = sw3_residual(traj.back());
    if (r0 > residual_tol || r1 > residual_tol)
        throw domain_error("energy_identity: endpoint residual " +
                           std::to_string(std::max(r0, r1)) + " exceeds tolerance");

    EnergyReport rep;
    ActionValue a0 = csd_action(traj.front()), a1 = csd_action(traj.back());
    rep.csd_initial = a0.total();
    rep.csd_final = a1.total();
    rep.conn_initial = a0.connection;
    rep.conn_final = a1.connection;
    rep.e_r = rep.csd_initial - rep.csd_final;

    Eigen::MatrixXd Dt = time_derivative_matrix(t, false);
    int T = int(t.size());
    std::vector<double> integrand(T, 0.0);
    for (int i = 0; i < T; ++i) {
        cplx acc{};
        for (const auto& [m, c] : traj[i].entries) {
            auto cb = curl_mode(m, c[Slot::u], c[Slot::v], c[Slot::f]);
            std::array<cplx, 3> bdot{};
            for (int j = 0; j < T; ++j) {
                if (Dt(i, j) == 0.0) continue;
                bdot[0] += Dt(i, j) * traj[j].get(m, Slot::u);
                bdot[1] += Dt(i, j) * traj[j].get(m, Slot::v);
                bdot[2] += Dt(i, j) * traj[j].get(m, Slot::f);
            }
            ModeIndex neg = -m;
            auto cbneg = curl_mode(neg, traj[i].get(neg, Slot::u),
                                   traj[i].get(neg, Slot::v), traj[i].get(neg, Slot::f));
            acc += cbneg[0] * bdot[0] + cbneg[1] * bdot[1] + cbneg[2] * bdot[2];
        }
        integrand[i] = acc.real();
    }
    double h = t[1] - t[0], quad = 0;
    for (int i = 0; i < T; ++i)
        quad += ((i == 0 || i == T - 1) ? 0.5 : 1.0) * integrand[i];
    // with the mode-space pairing above, d/dt of the connection action is
    // exactly minus the integrand, so the action drop equals +integral
    rep.topological = h * quad;
    rep.gap = std::abs((rep.conn_initial - rep.conn_final) - rep.topological);
    return rep;
}

struct EstimateTable {
    double psi_l4 = 0, curvature_l2 = 0, gradient_l2 = 0;  // left-hand sides
    double e_r = 0;
    double s0 = 0;            // max{-s, 0} (plus C(P) when perturbed)
    double vol = 0, ell = 0;
    double bound_l4_printed = 0, bound_l4_loose = 0;
    double bound_quadratic = 0;   // right side of the two quadratic estimates
    bool l4_ok_printed = false, l4_ok_loose = false;
    bool curvature_ok = false, gradient_ok = false;
    double pointwise_max = 0;     // max of |Psi|^2 over the sample lattice
    bool pointwise_ok = false;
    double decay_amplitude = 0, decay_rate = 0;  // fit of C e^{-rate |t|}
};

inline EstimateTable estimate_suite(const std::vector<ModeField>& traj,
                                    const std::vector<double>& t,
                                    double scalar_curvature,
                                    const ModeField* asymptote = nullptr,
                                    const PerturbationSpec* pert = nullptr) {
    if (traj.size() != t.size() || traj.size() < 6)
        throw dimension_error("estimate_suite: need matching trajectory and t-grid (>= 6)");
    EstimateTable tab;
    tab.s0 = std::max(-scalar_curvature + (pert ? pert->bound : 0.0), 0.0);
    tab.vol = std::pow(2.0 * pi, 3);
    tab.ell = t.back() - t.front();
    int T = int(t.size());
    double h = t[1] - t[0];
    auto wq = [&](int i) { return (i == 0 || i == T - 1) ? 0.5 : 1.0; };

    Eigen::MatrixXd Dt = time_derivative_matrix(t, false);
    for (int i = 0; i < T; ++i) {
        const ModeField& S = traj[i];
        // |Psi|^2 as a mode field
        ModeField abar = conjugate_field(S, Slot::alpha);
        ModeField bbar = conjugate_field(S, Slot::beta);
        ModeField q = convolve(abar, S, Slot::u, Slot::alpha);
        ModeField q2 = convolve(bbar, S, Slot::u, Slot::beta);
        for (const auto& [m, c] : q2.entries) q.add(m, Slot::u, c[Slot::u]);

        double l4 = 0;
        for (const auto& [m, c] : q.entries) l4 += std::norm(c[Slot::u]);
        tab.psi_l4 += wq(i) * h * l4;

        double f2 = 0;
        for (const auto& [m, c] : S.entries) {
            auto cb = curl_mode(m, c[Slot::u], c[Slot::v], c[Slot::f]);
            f2 += std::norm(cb[0]) + std::norm(cb[1]) + std::norm(cb[2]);
        }
        tab.curvature_l2 += wq(i) * h * f2;

        // covariant gradient: (i m_j psi + i (b_j psi)) per direction
        double g2 = 0;
        {
            ModeField c1 = convolve(S, S, Slot::u, Slot::alpha);
            ModeField c1b = convolve(S, S, Slot::u, Slot::beta);
            ModeField c2 = convolve(S, S, Slot::v, Slot::alpha);
            ModeField c2b = convolve(S, S, Slot::v, Slot::beta);
            ModeField c3 = convolve(S, S, Slot::f, Slot::alpha);
            ModeField c3b = convolve(S, S, Slot::f, Slot::beta);
            for (int n = -S.cutoff; n <= S.cutoff; ++n)
                for (int l = -S.cutoff; l <= S.cutoff; ++l)
                    for (int k = -S.cutoff; k <= S.cutoff; ++k) {
                        ModeIndex m{n, l, k};
                        auto fq = freq(m);
                        cplx al = S.get(m, Slot::alpha), be = S.get(m, Slot::beta);
                        g2 += std::norm(fq[0] * al + c1.get(m, Slot::u)) +
                              std::norm(fq[0] * be + c1b.get(m, Slot::u)) +
                              std::norm(fq[1] * al + c2.get(m, Slot::u)) +
                              std::norm(fq[1] * be + c2b.get(m, Slot::u)) +
                              std::norm(fq[2] * al + c3.get(m, Slot::u)) +
                              std::norm(fq[2] * be + c3b.get(m, Slot::u));
                    }
        }
        tab.gradient_l2 += wq(i) * h * g2;

        // energy integrand from the discrete time derivative
        double dot2 = 0;
        {
            ModeField d(S.cutoff);
            for (int j = 0; j < T; ++j) {
                if (Dt(i, j) == 0.0) continue;
                for (const auto& [m, c] : traj[j].entries)
                    for (int s = 0; s < 5; ++s) d.add(m, Slot(s), Dt(i, j) * c[Slot(s)]);
            }
            double nrm = parseval_norm(d);
            dot2 = nrm * nrm;
        }
        tab.e_r += wq(i) * h * dot2;

        // pointwise |Psi|^2 on a coarse spatial lattice
        int G = 9;
        for (int a = 0; a < G; ++a)
            for (int b = 0; b < G; ++b)
                for (int cidx = 0; cidx < G; ++cidx) {
                    double th = 2 * pi * a / G, x = 2 * pi * b / G, y = 2 * pi * cidx / G;
                    cplx val{};
                    for (const auto& [m, c] : q.entries)
                        val += c[Slot::u] * std::exp(cplx(0, m.n * th + m.l * x + m.k * y)) *
                               conv_factor;
                    tab.pointwise_max = std::max(tab.pointwise_max, val.real());
                }
    }

    tab.bound_l4_printed = 8 * tab.e_r + 2 * tab.s0 * tab.s0 * tab.vol * tab.ell;
    tab.bound_l4_loose = 8 * tab.e_r + 4 * tab.s0 * tab.s0 * tab.vol * tab.ell;
    tab.bound_quadratic = tab.e_r + tab.s0 * tab.s0 * tab.vol * tab.ell;
    tab.l4_ok_printed = tab.psi_l4 <= tab.bound_l4_printed + 1e-12;
    tab.l4_ok_loose = tab.psi_l4 <= tab.bound_l4_loose + 1e-12;
    tab.curvature_ok = tab.curvature_l2 <= tab.bound_quadratic + 1e-12;
    tab.gradient_ok = tab.gradient_l2 <= tab.bound_quadratic + 1e-12;
    tab.pointwise_ok = tab.pointwise_max <= tab.s0 + 1e-12;

    // exponential decay fit toward the asymptote (default: final sample)
    const ModeField& limit = asymptote ? *asymptote : traj.back();
    std::vector<double> xs, ys;
    for (int i = 0; i + 1 < T; ++i) {
        double d = field_distance(traj[i], limit);
        if (d > 1e-14) {
            xs.push_back(std::abs(t[i]));
            ys.push_back(std::log(d));
        }
    }
    if (xs.size() >= 4) {
        auto fit = fit_line(xs, ys);
        tab.decay_rate = -fit.slope;
        tab.decay_amplitude = std::exp(fit.intercept);
    }
    return tab;
}

inline std::pair<int, int> clm_counts(int dim_ker_V, int dim_ker_nu, int dim_ker_Q,
                                      int dim_lagrangian_intersection) {
    if (dim_ker_V < 0 || dim_ker_nu < 0 || dim_ker_Q < 0 || dim_lagrangian_intersection < 0)
        throw domain_error("clm_counts: dimensions must be nonnegative");
    if (dim_lagrangian_intersection > dim_ker_Q)
        throw domain_error("clm_counts: intersection exceeds ambient kernel");
    return {dim_ker_V + dim_ker_nu + dim_ker_Q,
            dim_ker_V + dim_ker_nu + dim_lagrangian_intersection};
}

}  // namespace neckflow
