// Command-line front end: deterministic report files from small config files.
// Exit codes: 0 success, 2 usage, 3 I/O, 4 numerical failure, 5 consistency.

#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "neckflow/dirac.hpp"
#include "neckflow/fit.hpp"
#include "neckflow/flow.hpp"
#include "neckflow/geometry.hpp"
#include "neckflow/glue.hpp"
#include "neckflow/io.hpp"

namespace neckflow {
namespace {

double get_num(const json& j, const std::string& key, double fallback) {
    if (!j.contains(key)) return fallback;
    if (!j[key].is_number()) throw usage_error("config field must be a number: " + key);
    return j[key].get<double>();
}

std::vector<double> get_list(const json& j, const std::string& key,
                             std::vector<double> fallback) {
    if (!j.contains(key)) return fallback;
    if (!j[key].is_array() || j[key].empty())
        throw usage_error("config field must be a nonempty list: " + key);
    std::vector<double> out;
    for (const auto& v : j[key]) out.push_back(v.get<double>());
    return out;
}

// ---------------------------------------------------------------- geometry

void cmd_geometry(const RunConfig& run) {
    auto out_dir = ensure_out_dir(run.out_dir);
    std::vector<double> Ts = get_list(run.params, "T_list",
                                      {1, 2, 3, 4, 5, 6, 7, 8, 9, 10});
    double r0 = get_num(run.params, "r0", 1.0);
    Report rep;
    rep.set("rows", Ts.size());
    for (std::size_t i = 0; i < Ts.size(); ++i) {
        auto g = neck_geometry(Ts[i], r0);
        char tag[32];
        std::snprintf(tag, sizeof(tag), "row%03zu.", i);
        std::string p(tag);
        rep.set(p + "T", g.T);
        rep.set(p + "R", g.R);
        rep.set(p + "ell", g.ell);
        rep.set(p + "r", g.r);
        rep.set(p + "eps", g.eps);
        rep.set(p + "half_angle", g.half_angle);
        rep.set(p + "arc_in_strip", 2.0 * g.R * g.half_angle);
        rep.set(p + "arc_identity_delta",
                std::abs(2.0 * g.R * g.half_angle - 2.0 * g.T));
        rep.set(p + "upsilon_at_ell", upsilon(g.ell, g));
    }
    rep.write(out_dir / "geometry.txt");
}

// ---------------------------------------------------------------- spectrum

void cmd_spectrum(const RunConfig& run) {
    auto out_dir = ensure_out_dir(run.out_dir);
    if (!run.params.contains("nmax")) throw usage_error("spectrum: nmax is required");
    int nmax = int(get_num(run.params, "nmax", -1));
    if (nmax < 0) throw usage_error("spectrum: empty index range");
    Report rep;
    double worst = 0;
    std::size_t records = 0;
    for (int n = -nmax; n <= nmax; ++n)
        for (int l = -nmax; l <= nmax; ++l)
            for (int k = -nmax; k <= nmax; ++k) {
                auto r = dirac_eigenvalues({n, l, k});
                std::string p = "n" + index_tag(n) + ".l" + index_tag(l) + ".k" +
                                index_tag(k) + ".";
                for (int j = 0; j < 4; ++j)
                    rep.set(p + "lambda" + std::to_string(j + 1), r.lambda[j]);
                rep.set(p + "formula_vs_numeric", r.formula_vs_numeric);
                worst = std::max(worst, r.formula_vs_numeric);
                ++records;
            }
    rep.set("records", records);
    rep.set("max_formula_vs_numeric", worst);
    if (worst > 1e-10)
        throw consistency_error("spectrum: formula vs diagonalization mismatch " +
                                detail::fmt17(worst));
    rep.write(out_dir / "spectrum.txt");
}

// ------------------------------------------------------------- asymptotics

void cmd_asymptotics(const RunConfig& run) {
    auto out_dir = ensure_out_dir(run.out_dir);
    if (!run.params.contains("inputs") || !run.params["inputs"].is_array() ||
        run.params["inputs"].empty())
        throw usage_error("asymptotics: inputs list is required");
    Report rep;
    std::size_t i = 0;
    for (const auto& item : run.params["inputs"]) {
        std::string file = item.value("file", "");
        if (file.empty()) throw usage_error("asymptotics: input entry without file");
        auto [rho, val] = load_columns(file);
        auto fitd = decay_rate_classify(rho, val);
        char tag[32];
        std::snprintf(tag, sizeof(tag), "input%03zu.", i++);
        std::string p(tag);
        rep.set(p + "file", file);
        rep.set(p + "kind", decay_kind_name(fitd.kind));
        rep.set(p + "rate", fitd.rate);
        rep.set(p + "growth", fitd.growth);
        rep.set(p + "residual", fitd.residual);
        rep.set(p + "tie", int(fitd.tie));
        if (item.contains("l") && item.contains("k")) {
            int l = item["l"].get<int>(), k = item["k"].get<int>();
            auto lam = dirac_eigenvalue_formula(l, k);
            double pred = std::abs(lam[0]);
            for (const auto& z : lam)
                if (std::abs(z) > 1e-12) pred = std::min(pred, std::abs(z));
            rep.set(p + "predicted_rate", pred);
        }
    }
    rep.write(out_dir / "asymptotics.txt");
}

// ------------------------------------------------------------------ energy

// Decaying curl eigen-flow at a reality-symmetric mode pair; amplitude zero
// degenerates to the constant trajectory.
std::vector<ModeField> curl_flow_trajectory(const std::vector<double>& t,
                                            double amp) {
    const cplx I{0, 1};
    Eigen::Vector3cd e(0.0, cplx(1.0 / std::sqrt(2.0), 0.0),
                       -I / std::sqrt(2.0));  // curl eigenvector, eigenvalue 1
    std::vector<ModeField> traj;
    ModeIndex m{0, 1, 0};
    for (double tv : t) {
        ModeField S(1);
        Eigen::Vector3cd b = amp * std::exp(-tv) * e;
        S.set(m, Slot::u, b(0));
        S.set(m, Slot::v, b(1));
        S.set(m, Slot::f, b(2));
        S.set(-m, Slot::u, -std::conj(b(0)));
        S.set(-m, Slot::v, -std::conj(b(1)));
        S.set(-m, Slot::f, -std::conj(b(2)));
        traj.push_back(std::move(S));
    }
    return traj;
}

void cmd_energy(const RunConfig& run) {
    auto out_dir = ensure_out_dir(run.out_dir);
    double amp = get_num(run.params, "amplitude", 0.15);
    double span = get_num(run.params, "span", 18.0);
    int samples = int(get_num(run.params, "samples", 1801));
    if (samples < 4 || span <= 0) throw usage_error("energy: bad span or samples");
    auto t = linspace(0.0, span, std::size_t(samples));
    auto traj = curl_flow_trajectory(t, amp);
    auto r = energy_identity(traj, t, amp == 0.0 ? 1e-6 : 1.0);
    Report rep;
    rep.set("amplitude", amp);
    rep.set("csd_initial", r.csd_initial);
    rep.set("csd_final", r.csd_final);
    rep.set("conn_initial", r.conn_initial);
    rep.set("conn_final", r.conn_final);
    rep.set("action_drop", r.e_r);
    rep.set("topological", r.topological);
    rep.set("gap", r.gap);
    rep.write(out_dir / "energy.txt");
}

// -------------------------------------------------------------------- flow

void cmd_flow(const RunConfig& run) {
    auto out_dir = ensure_out_dir(run.out_dir);
    double amp = get_num(run.params, "amplitude", 0.0);
    int nu_max = int(get_num(run.params, "nu_max", 4));
    int points = int(get_num(run.params, "points", 301));
    double span = get_num(run.params, "span", 3.0);
    if (nu_max < 1 || points < 4) throw usage_error("flow: bad nu_max or points");

    // theta-mode family seed with the reality constraint on the form slots
    std::mt19937_64 rng(run.seed);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    ModeField xi0(1);
    for (int n = -1; n <= 1; ++n)
        for (int s = 0; s < 5; ++s)
            xi0.set({n, 0, 0}, Slot(s), amp * cplx(unif(rng), unif(rng)));
    ModeField snap = xi0;
    for (auto& [m, c] : xi0.entries)
        for (Slot s : {Slot::u, Slot::v, Slot::f})
            c[s] = 0.5 * (snap.get(m, s) - std::conj(snap.get(-m, s)));

    auto grid = linspace(0.0, span, std::size_t(points));
    auto res = successive_approximation([&](double) { return xi0; }, nu_max, grid);
    Report rep;
    rep.set("amplitude", amp);
    rep.set("iterates", res.iterates.size());
    for (std::size_t i = 0; i < res.sup_distance.size(); ++i) {
        char tag[32];
        std::snprintf(tag, sizeof(tag), "step%03zu.sup_distance", i);
        rep.set(tag, res.sup_distance[i]);
    }
    double final_sup = 0;
    for (const auto& s : res.iterates.back().samples)
        final_sup = std::max(final_sup, parseval_norm(s));
    rep.set("final_sup_norm", final_sup);
    rep.write(out_dir / "flow.txt");
}

// -------------------------------------------------------------------- glue

double bump(double u) {
    return std::abs(u) < 1.0 ? std::exp(1.0 - 1.0 / (1.0 - u * u)) : 0.0;
}

void cmd_glue(const RunConfig& run) {
    auto out_dir = ensure_out_dir(run.out_dir);
    std::vector<double> Ts = get_list(run.params, "T_list", {4, 5, 6, 7});
    double r0 = get_num(run.params, "r0", 1.0);
    int ns = int(get_num(run.params, "ns", 49));
    int nt = int(get_num(run.params, "nt", 49));
    int cutoff = int(get_num(run.params, "cutoff", 0));
    double defect = get_num(run.params, "defect_amplitude", 1e-6);
    double newton_amp = get_num(run.params, "newton_amplitude", 0.0);
    double newton_abs = get_num(run.params, "newton_absolute_amplitude", 0.0);
    int newton_steps = int(get_num(run.params, "newton_steps", 1));

    Report rep;
    rep.set("rows", Ts.size());
    std::vector<double> log_R, log_res;
    for (std::size_t i = 0; i < Ts.size(); ++i) {
        auto geo = neck_geometry(Ts[i], r0);
        auto G = make_glue_grid(geo, ns, nt, cutoff);
        GluePieces P;
        for (auto& p : P.piece) p = Eigen::VectorXcd::Zero(G.field_size());
        P.cap_plus = Eigen::VectorXcd::Zero(G.field_size());
        P.cap_minus = Eigen::VectorXcd::Zero(G.field_size());
        if (run.params.contains("disk_boundary"))
            for (int j = 0; j < 4; ++j)
                P.disk_boundary[j] = run.params["disk_boundary"][j].get<double>();
        if (run.params.contains("limit_values"))
            for (int j = 0; j < 4; ++j)
                P.limit_values[j] = run.params["limit_values"][j].get<double>();
        double s0 = 0.82 * geo.r, t0 = 0.82 * geo.R;
        double ws = 0.08 * geo.r, wt = 0.08 * geo.R;
        for (int is = 0; is < G.ns; ++is)
            for (int it = 0; it < G.nt; ++it)
                P.piece[0][G.idx(is, it, 0, 0, c_alpha, 6)] =
                    defect * bump((G.s[is] - s0) / ws) * bump((G.t[it] - t0) / wt);
        auto cfg = assemble_approximate(G, geo, P);
        char tag[32];
        std::snprintf(tag, sizeof(tag), "row%03zu.", i);
        std::string p(tag);
        rep.set(p + "T", geo.T);
        rep.set(p + "R", geo.R);
        rep.set(p + "eps", geo.eps);
        rep.set(p + "residual_norm", cfg.residual_norm);
        if (cfg.residual_norm > 0) {
            log_R.push_back(std::log(geo.R));
            log_res.push_back(std::log(cfg.residual_norm));
        }

        if (newton_amp > 0 || newton_abs > 0) {
            auto Gn = make_glue_grid(geo, 13, 13, 1, true);
            NeckProblem pb{geo, Gn};
            Eigen::VectorXcd xi = Eigen::VectorXcd::Zero(Gn.field_size());
            const double hol[4] = {0.31, 0.17, 0.23, 0.11};
            double amp = newton_abs > 0 ? newton_abs : newton_amp * geo.eps;
            double ns0 = 0.8 * geo.r, nt0 = 0.8 * geo.R;
            double nws = 0.15 * geo.r, nwt = 0.15 * geo.R;
            for (int is = 0; is < Gn.ns; ++is)
                for (int it = 0; it < Gn.nt; ++it) {
                    for (int c = 0; c < 4; ++c)
                        xi[Gn.idx(is, it, 0, 0, c, 6)] = hol[c];
                    double g = bump((Gn.s[is] - ns0) / nws) *
                               bump((Gn.t[it] - nt0) / nwt);
                    xi[Gn.idx(is, it, 0, 0, c_alpha, 6)] += amp * g;
                    xi[Gn.idx(is, it, 1, 0, c_beta, 6)] += 0.4 * amp * g;
                }
            NewtonOptions opt;
            opt.nu_max = newton_steps;
            opt.tol = 0.05 * pb.norm0(pb.sigma(xi));
            opt.drop = selfdual_constant_cokernel(Gn);
            auto res = newton_glue(pb, xi, opt);
            rep.set(p + "newton.c0", res.c0);
            rep.set(p + "newton.c1", res.c1);
            rep.set(p + "newton.c2", res.c2);
            rep.set(p + "newton.c", res.c);
            rep.set(p + "newton.correction_norm", res.correction_norm);
            rep.set(p + "newton.converged", int(res.converged));
            for (std::size_t j = 0; j < res.trace.size(); ++j) {
                char ttag[48];
                std::snprintf(ttag, sizeof(ttag), "newton.step%03zu.", j);
                rep.set(p + ttag + "sigma_norm", res.trace[j].sigma_norm);
                rep.set(p + ttag + "xi_norm", res.trace[j].xi_norm);
            }
        }
    }
    if (log_R.size() >= 2) {
        auto f = fit_line(log_R, log_res);
        rep.set("residual_slope", f.slope);
        rep.set("residual_slope_defined", 1);
    } else {
        rep.set("residual_slope", std::string("undefined"));
        rep.set("residual_slope_defined", 0);
    }
    rep.write(out_dir / "glue.txt");
}

int dispatch(const RunConfig& run) {
    if (run.command == "geometry") cmd_geometry(run);
    else if (run.command == "spectrum") cmd_spectrum(run);
    else if (run.command == "asymptotics") cmd_asymptotics(run);
    else if (run.command == "energy") cmd_energy(run);
    else if (run.command == "flow") cmd_flow(run);
    else if (run.command == "glue") cmd_glue(run);
    else throw usage_error("unknown command: " + run.command);
    return 0;
}

}  // namespace
}  // namespace neckflow

int main(int argc, char** argv) {
    CLI::App app{"neckflow: deterministic reports for the neck-stretching toolkit"};
    neckflow::RunConfig run;
    app.add_option("command", run.command,
                   "geometry | spectrum | asymptotics | energy | flow | glue")
        ->required();
    app.add_option("--config", run.config_path, "config file (structured text)")
        ->required();
    app.add_option("--out", run.out_dir, "output directory");
    app.add_option("--seed", run.seed, "seed for randomized sweeps");
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }
    try {
        run.params = neckflow::load_config(run.config_path);
        return neckflow::dispatch(run);
    } catch (const neckflow::error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return e.exit_code();
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 4;
    }
}
