#pragma once

// Small least-squares helpers: straight-line fits for log-log slopes and the
// decay-model competition used to classify trajectory tails.

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "neckflow/errors.hpp"

namespace neckflow {

struct LineFit {
    double slope = 0, intercept = 0, residual = 0;
};

inline LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2)
        throw domain_error("fit_line: need matching samples, >= 2");
    Eigen::MatrixXd A(x.size(), 2);
    Eigen::VectorXd b(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        A(i, 0) = x[i];
        A(i, 1) = 1.0;
        b(i) = y[i];
    }
    Eigen::Vector2d c = A.colPivHouseholderQr().solve(b);
    return {c(0), c(1), (A * c - b).norm()};
}

// General linear least squares against caller-supplied feature columns.
inline std::pair<Eigen::VectorXd, double> fit_linear(
    const Eigen::MatrixXd& A, const Eigen::VectorXd& b) {
    Eigen::VectorXd c = A.colPivHouseholderQr().solve(b);
    return {c, (A * c - b).norm()};
}

enum class DecayKind { exponential, superexponential, polynomial, mixed };

struct DecayFit {
    DecayKind kind = DecayKind::exponential;
    double rate = 0;      // a in e^{-a rho}, C in e^{-C e^rho}, degree in rho^{-n}
    double growth = 0;    // n in the mixed family e^{n rho - C e^rho}
    double residual = 0;
    bool tie = false;     // two model families within 10% residual
};

// Fits log||.|| against the families {-a rho + b, -C e^rho + b,
// -n log rho + b, n rho - C e^rho + b} and returns the best.
inline DecayFit decay_rate_classify(const std::vector<double>& rho,
                                    const std::vector<double>& norms) {
    if (rho.size() < 20) throw domain_error("decay_rate_classify: need >= 20 samples");
    std::vector<double> y(norms.size());
    for (std::size_t i = 0; i < norms.size(); ++i) {
        if (norms[i] <= 0) throw domain_error("decay_rate_classify: non-positive norm");
        y[i] = std::log(norms[i]);
    }
    const std::size_t m = rho.size();
    Eigen::VectorXd b = Eigen::Map<const Eigen::VectorXd>(y.data(), m);

    auto features = [&](int model) {
        int cols = (model == 3) ? 3 : 2;
        Eigen::MatrixXd A(m, cols);
        for (std::size_t i = 0; i < m; ++i) {
            double r = rho[i];
            switch (model) {
                case 0: A(i, 0) = -r; break;
                case 1: A(i, 0) = -std::exp(r); break;
                case 2: A(i, 0) = -std::log(r); break;
                default:
                    A(i, 0) = r;
                    A(i, 1) = -std::exp(r);
                    break;
            }
            A(i, cols - 1) = 1.0;
        }
        return A;
    };

    std::vector<DecayFit> fits;
    for (int model = 0; model < 4; ++model) {
        if (model == 2) {
            bool ok = true;
            for (double r : rho) ok = ok && r > 0;
            if (!ok) continue;
        }
        auto [c, res] = fit_linear(features(model), b);
        DecayFit f;
        f.residual = res;
        switch (model) {
            case 0: f.kind = DecayKind::exponential; f.rate = c(0); break;
            case 1: f.kind = DecayKind::superexponential; f.rate = c(0); break;
            case 2: f.kind = DecayKind::polynomial; f.rate = c(0); break;
            default:
                f.kind = DecayKind::mixed;
                f.growth = c(0);
                f.rate = c(1);
                break;
        }
        fits.push_back(f);
    }

    double best_res = fits.front().residual;
    for (const auto& f : fits) best_res = std::min(best_res, f.residual);
    // The mixed family contains the pure ones, so ties go to the simpler
    // model, listed first; a near-tie is reported on the winner.
    double cut = 1.1 * best_res + 1e-12;
    DecayFit best;
    int close = 0;
    for (const auto& f : fits)
        if (f.residual <= cut) ++close;
    for (const auto& f : fits) {
        if (f.residual <= cut) {
            best = f;
            break;
        }
    }
    best.tie = close >= 2;
    return best;
}

inline std::string decay_kind_name(DecayKind k) {
    switch (k) {
        case DecayKind::exponential: return "exponential";
        case DecayKind::superexponential: return "superexponential";
        case DecayKind::polynomial: return "polynomial";
        default: return "mixed";
    }
}

}  // namespace neckflow
