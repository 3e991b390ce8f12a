#pragma once

// Fourier-mode bookkeeping on T^2 x S^1.  Basis functions are
// e^{i(n theta + l x + k y)} / (2 pi)^{3/2}; a field is a sparse set of
// coefficient 5-tuples (u, v, f, alpha, beta) indexed by (n, l, k).

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "neckflow/errors.hpp"

namespace neckflow {

using cplx = std::complex<double>;

inline constexpr double pi = 3.14159265358979323846;
inline const double conv_factor = 1.0 / std::pow(2.0 * pi, 1.5);

namespace detail {
inline std::string fmt17(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}
}  // namespace detail

struct ModeIndex {
    int n = 0, l = 0, k = 0;
    auto operator<=>(const ModeIndex&) const = default;
    ModeIndex operator-() const { return {-n, -l, -k}; }
};

enum class Slot { u, v, f, alpha, beta };

struct Coeffs {
    cplx u{}, v{}, f{}, alpha{}, beta{};

    cplx& operator[](Slot s) {
        switch (s) {
            case Slot::u: return u;
            case Slot::v: return v;
            case Slot::f: return f;
            case Slot::alpha: return alpha;
            default: return beta;
        }
    }
    cplx operator[](Slot s) const { return const_cast<Coeffs&>(*this)[s]; }
};

struct ModeField {
    int cutoff = 0;
    std::map<ModeIndex, Coeffs> entries;

    ModeField() = default;
    explicit ModeField(int N) : cutoff(N) {
        if (N < 0) throw domain_error("ModeField cutoff must be >= 0");
    }

    bool in_range(ModeIndex m) const {
        return std::max({std::abs(m.n), std::abs(m.l), std::abs(m.k)}) <= cutoff;
    }

    cplx get(ModeIndex m, Slot s) const {
        auto it = entries.find(m);
        return it == entries.end() ? cplx{} : it->second[s];
    }

    void set(ModeIndex m, Slot s, cplx val) {
        if (!in_range(m))
            throw domain_error("mode index outside cutoff " + std::to_string(cutoff));
        entries[m][s] = val;
    }

    void add(ModeIndex m, Slot s, cplx val) {
        if (!in_range(m)) return;  // truncation drops out-of-range terms
        entries[m][s] += val;
    }
};

// (ab)_{nlk} = (2 pi)^{-3/2} sum_{ijh} a_{ijh} b_{n-i, l-j, k-h}, truncated to
// the shared cutoff.  The result lands in slot_out of a fresh field.
inline ModeField convolve(const ModeField& A, const ModeField& B,
                          Slot slot_a, Slot slot_b, Slot slot_out = Slot::u) {
    if (A.cutoff != B.cutoff)
        throw dimension_error("convolve: cutoff mismatch");
    ModeField out(A.cutoff);
    for (const auto& [ma, ca] : A.entries) {
        cplx av = ca[slot_a];
        if (av == cplx{}) continue;
        for (const auto& [mb, cb] : B.entries) {
            cplx bv = cb[slot_b];
            if (bv == cplx{}) continue;
            ModeIndex m{ma.n + mb.n, ma.l + mb.l, ma.k + mb.k};
            out.add(m, slot_out, conv_factor * av * bv);
        }
    }
    return out;
}

// Coefficients of the complex conjugate field: (conj g)_m = conj(g_{-m}).
inline ModeField conjugate_field(const ModeField& F, Slot s, Slot slot_out = Slot::u) {
    ModeField out(F.cutoff);
    for (const auto& [m, c] : F.entries)
        if (c[s] != cplx{}) out.set(-m, slot_out, std::conj(c[s]));
    return out;
}

struct RealityReport {
    bool ok = true;
    double worst = 0.0;
};

// U(1) constraint on the connection slots: c_{nlk} = -conj(c_{-n,-l,-k}).
inline RealityReport reality_check(const ModeField& F, double tol = 1e-12) {
    RealityReport rep;
    for (const auto& [m, c] : F.entries) {
        for (Slot s : {Slot::u, Slot::v, Slot::f}) {
            double viol = std::abs(c[s] + std::conj(F.get(-m, s)));
            rep.worst = std::max(rep.worst, viol);
        }
    }
    rep.ok = rep.worst <= tol;
    return rep;
}

struct SlotWeights {
    double u = 1, v = 1, f = 1, alpha = 1, beta = 1;
};

// L^2 norm via Parseval: sqrt(sum weights * |coefficient|^2).
inline double parseval_norm(const ModeField& F, const SlotWeights& w = {}) {
    for (double x : {w.u, w.v, w.f, w.alpha, w.beta})
        if (x < 0) throw domain_error("parseval_norm: negative weight");
    double acc = 0;
    for (const auto& [m, c] : F.entries) {
        acc += w.u * std::norm(c.u) + w.v * std::norm(c.v) + w.f * std::norm(c.f) +
               w.alpha * std::norm(c.alpha) + w.beta * std::norm(c.beta);
    }
    return std::sqrt(acc);
}

// z = s + it = e^{rho + i theta}, theta in [-pi, pi].
inline std::pair<double, double> polar_map(double s, double t) {
    if (s == 0.0 && t == 0.0) throw domain_error("polar_map: origin");
    return {0.5 * std::log(s * s + t * t), std::atan2(t, s)};
}

inline std::pair<double, double> polar_unmap(double rho, double theta) {
    double r = std::exp(rho);
    return {r * std::cos(theta), r * std::sin(theta)};
}

// Scalar samples on a rectangular grid with bilinear interpolation.
struct Grid2 {
    std::vector<double> xs, ys;     // strictly increasing axes
    std::vector<cplx> vals;         // row-major, vals[i*ys.size()+j] at (xs[i], ys[j])

    Grid2() = default;
    Grid2(std::vector<double> x, std::vector<double> y)
        : xs(std::move(x)), ys(std::move(y)), vals(xs.size() * ys.size()) {}

    cplx& at(std::size_t i, std::size_t j) { return vals[i * ys.size() + j]; }
    cplx at(std::size_t i, std::size_t j) const { return vals[i * ys.size() + j]; }

    cplx interp(double x, double y) const {
        auto locate = [](const std::vector<double>& ax, double q) {
            auto it = std::upper_bound(ax.begin(), ax.end(), q);
            std::ptrdiff_t i = it - ax.begin() - 1;
            i = std::clamp<std::ptrdiff_t>(i, 0, std::ptrdiff_t(ax.size()) - 2);
            return std::size_t(i);
        };
        std::size_t i = locate(xs, x), j = locate(ys, y);
        double tx = (x - xs[i]) / (xs[i + 1] - xs[i]);
        double ty = (y - ys[j]) / (ys[j + 1] - ys[j]);
        return (1 - tx) * (1 - ty) * at(i, j) + tx * (1 - ty) * at(i + 1, j) +
               (1 - tx) * ty * at(i, j + 1) + tx * ty * at(i + 1, j + 1);
    }
};

struct PolarChart {
    double round_trip_tol = 1e-12;
};

// (a, f, h) sampled over (s, t), re-expressed over (rho, theta):
//   a unchanged pointwise,
//   f_pol = e^{-rho} (cos(theta) h - sin(theta) f),
//   h_pol = e^{-rho} (cos(theta) f + sin(theta) h).
struct PlaneFields {
    Grid2 ax, ay, f, h;  // all sharing axes
};

inline PlaneFields polar_transform_fields(const PlaneFields& cart,
                                          const std::vector<double>& rho,
                                          const std::vector<double>& theta) {
    PlaneFields out{Grid2(rho, theta), Grid2(rho, theta), Grid2(rho, theta), Grid2(rho, theta)};
    for (std::size_t i = 0; i < rho.size(); ++i) {
        double er = std::exp(-rho[i]);
        for (std::size_t j = 0; j < theta.size(); ++j) {
            auto [s, t] = polar_unmap(rho[i], theta[j]);
            double c = std::cos(theta[j]), sn = std::sin(theta[j]);
            cplx fc = cart.f.interp(s, t), hc = cart.h.interp(s, t);
            out.ax.at(i, j) = cart.ax.interp(s, t);
            out.ay.at(i, j) = cart.ay.interp(s, t);
            out.f.at(i, j) = er * (c * hc - sn * fc);
            out.h.at(i, j) = er * (c * fc + sn * hc);
        }
    }
    return out;
}

inline PlaneFields polar_transform_inverse(const PlaneFields& pol,
                                           const std::vector<double>& ss,
                                           const std::vector<double>& tt) {
    PlaneFields out{Grid2(ss, tt), Grid2(ss, tt), Grid2(ss, tt), Grid2(ss, tt)};
    for (std::size_t i = 0; i < ss.size(); ++i) {
        for (std::size_t j = 0; j < tt.size(); ++j) {
            if (ss[i] == 0.0 && tt[j] == 0.0)
                throw domain_error("polar_transform_inverse: grid contains origin");
            auto [rho, theta] = polar_map(ss[i], tt[j]);
            double er = std::exp(rho);
            double c = std::cos(theta), sn = std::sin(theta);
            cplx fp = pol.f.interp(rho, theta), hp = pol.h.interp(rho, theta);
            out.ax.at(i, j) = pol.ax.interp(rho, theta);
            out.ay.at(i, j) = pol.ay.interp(rho, theta);
            out.f.at(i, j) = er * (c * hp - sn * fp);
            out.h.at(i, j) = er * (c * fp + sn * hp);
        }
    }
    return out;
}

// Deterministic text record, entries sorted by (n, l, k), 17 significant digits.
inline void write_modefield(std::ostream& os, const ModeField& F) {
    using detail::fmt17;
    os << "{\"cutoff\":" << F.cutoff << ",\"entries\":[";
    bool first = true;
    for (const auto& [m, c] : F.entries) {  // std::map iterates in sorted order
        if (!first) os << ",";
        first = false;
        auto pair = [](cplx z) {
            return "[" + fmt17(z.real()) + "," + fmt17(z.imag()) + "]";
        };
        os << "{\"alpha\":" << pair(c.alpha) << ",\"beta\":" << pair(c.beta)
           << ",\"f\":" << pair(c.f) << ",\"k\":" << m.k << ",\"l\":" << m.l
           << ",\"n\":" << m.n << ",\"u\":" << pair(c.u) << ",\"v\":" << pair(c.v)
           << "}";
    }
    os << "]}\n";
}

}  // namespace neckflow
