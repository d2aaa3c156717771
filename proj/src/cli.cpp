#include "fde/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <Eigen/Core>
#include <json.hpp>

#ifndef FDE_VERSION
#define FDE_VERSION "0.0.0"
#endif

namespace fde {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

template <typename F>
auto stage(const char* name, F&& f) {
    try {
        return f();
    } catch (const Error& e) {
        throw Error(e.kind(), std::string("stage ") + name + ": " + e.what());
    }
}

void write_atomic(const fs::path& path, const std::string& content) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorKind::Config, "cannot write " + tmp.string());
        out << content;
        if (!out) throw Error(ErrorKind::Config, "write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

json number_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

std::string geometry_name(Geometry g) { return g == Geometry::Interval ? "interval" : "ball"; }

std::string initial_name(InitialKind k) {
    switch (k) {
    case InitialKind::Stationary: return "stationary";
    case InitialKind::Scaled: return "scaled";
    case InitialKind::Modes: return "modes";
    case InitialKind::File: return "file";
    }
    return "?";
}

json config_json(const ExperimentConfig& cfg) {
    json j;
    j["domain"]["geometry"] = geometry_name(cfg.domain.geometry);
    if (cfg.domain.geometry == Geometry::Interval)
        j["domain"]["length"] = cfg.domain.extent;
    else
        j["domain"]["radius"] = cfg.domain.extent;
    j["domain"]["dimension"] = cfg.domain.geometry == Geometry::Interval ? 1 : cfg.domain.dimension;
    j["domain"]["nodes"] = cfg.domain.nodes;

    j["exponents"]["given"] = json::array({cfg.p_in ? "p" : "m", cfg.c_in ? "c" : "T"});
    j["exponents"]["p"] = cfg.exps.p;
    j["exponents"]["m"] = cfg.exps.m;
    j["exponents"]["c"] = cfg.exps.c;
    j["exponents"]["T"] = cfg.exps.T;

    j["stationary"]["tol"] = cfg.stationary.tol;
    j["stationary"]["max_iters"] = cfg.stationary.max_iters;

    j["spectrum"]["modes"] = cfg.modes;
    j["spectrum"]["tol"] = cfg.eigen.tol;
    j["spectrum"]["cluster_tol"] = cfg.eigen.cluster_tol;
    j["spectrum"]["max_iters"] = cfg.eigen.max_iters;
    j["spectrum"]["gap_tol"] = cfg.gap_tol;

    j["time"]["dt"] = cfg.dt.dt;
    j["time"]["dt_max"] = cfg.dt.dt_max;
    j["time"]["dt_min"] = cfg.dt.dt_min;
    j["time"]["grow"] = cfg.dt.grow;
    j["time"]["easy_iters"] = cfg.dt.easy_iters;
    j["time"]["adaptive"] = cfg.dt.adaptive;
    j["time"]["horizon"] = cfg.horizon;
    j["time"]["sample_interval"] = cfg.sample_interval;

    j["flow"]["calibrate"] = cfg.calibrate;
    j["flow"]["converge_tol"] = cfg.converge_tol;

    j["initial"]["kind"] = initial_name(cfg.initial);
    j["initial"]["factor"] = cfg.factor;
    j["initial"]["file"] = cfg.initial_file;
    j["initial"]["modes"] = json::array();
    for (const auto& m : cfg.initial_modes)
        j["initial"]["modes"].push_back({{"k", m.k}, {"j", m.j}, {"amplitude", m.amplitude}});

    if (const auto* b = std::get_if<EntropyBand>(&cfg.window)) {
        j["rates"]["window"] = "band";
        j["rates"]["band_lo"] = b->lo;
        j["rates"]["band_hi"] = b->hi;
    } else {
        const auto& w = std::get<ExplicitWindow>(cfg.window);
        j["rates"]["window"] = "explicit";
        j["rates"]["t_lo"] = w.t_lo;
        j["rates"]["t_hi"] = w.t_hi;
    }
    j["rates"]["tol"] = cfg.rate_tol;

    j["run"]["seed"] = cfg.seed;
    j["output"]["dir"] = cfg.out_dir;
    if (cfg.sweep_p) j["sweep"]["p"] = *cfg.sweep_p;
    if (cfg.sweep_n) j["sweep"]["n"] = *cfg.sweep_n;
    if (cfg.sweep_amplitude) j["sweep"]["amplitude"] = *cfg.sweep_amplitude;
    return j;
}

json gap_json(const GapReport& g, const EigenSystem& eigs) {
    json j;
    j["k_p"] = g.k_p;
    j["lambda_p"] = g.lambda_p ? json(*g.lambda_p) : json(nullptr);
    j["gamma_p"] = g.gamma_p;
    j["h2_ok"] = g.h2_ok;
    j["gap_margin"] = g.gap_margin;
    j["cp"] = g.cp;
    j["lambda_next"] = g.lambda_next;
    j["eigenvalues"] = std::vector<double>(eigs.eigenvalues.data(), eigs.eigenvalues.data() + eigs.distinct());
    j["multiplicities"] = eigs.multiplicities;
    return j;
}

std::string profile_csv(const Grid<>& grid, const StationaryProfile& prof) {
    std::ostringstream out;
    out << "x,V,S,dist\n";
    for (Eigen::Index i = 0; i < grid.size(); ++i)
        out << format_double(grid.coords(i)) << ',' << format_double(prof.V(i)) << ',' << format_double(prof.S(i))
            << ',' << format_double(grid.boundary_distance(i)) << '\n';
    return out.str();
}

std::string spectrum_csv(const EigenSystem& eigs) {
    std::ostringstream out;
    out << "k,j,lambda,residual\n";
    for (int k = 1; k <= eigs.distinct(); ++k)
        for (int j = 1; j <= eigs.multiplicities[k - 1]; ++j)
            out << k << ',' << j << ',' << format_double(eigs.eigenvalues(k - 1)) << ','
                << format_double(eigs.residuals(eigs.column(k, j))) << '\n';
    return out.str();
}

std::string trace_csv(const EntropyTrace& tr) {
    std::ostringstream out;
    out << "t,E_lin,I_lin,E_nl,h_inf";
    for (const char* prefix : {"Q", "Qn", "A"})
        for (const auto& [k, j] : tr.labels) out << ',' << prefix << '_' << k << '_' << j;
    out << '\n';
    for (const auto& r : tr.rows) {
        out << format_double(r.t) << ',' << format_double(r.E_lin) << ',' << format_double(r.I_lin) << ','
            << format_double(r.E_nl) << ',' << format_double(r.h_inf);
        for (const Vector* col : {&r.Q_lin, &r.Q_nl, &r.A_nl})
            for (Eigen::Index i = 0; i < col->size(); ++i) out << ',' << format_double((*col)(i));
        out << '\n';
    }
    return out.str();
}

std::string production_csv(const EntropyTrace& tr) {
    std::ostringstream out;
    out << "t,h_L2V,cubic,dEdt,R_exact\n";
    for (const auto& r : tr.rows)
        out << format_double(r.t) << ',' << format_double(r.h_L2V) << ',' << format_double(r.cubic) << ','
            << format_double(r.dEdt) << ',' << format_double(r.R_exact) << '\n';
    return out.str();
}

json constants_json(const ComparisonConstants& k) {
    return {{"sandwich_lo", number_or_null(k.sandwich_lo)},
            {"sandwich_hi", number_or_null(k.sandwich_hi)},
            {"remainder_kappa", number_or_null(k.remainder_kappa)},
            {"smoothing_kappa", number_or_null(k.smoothing_kappa)}};
}

json fit_json(const RateFit& f) {
    return {{"lambda_fit", f.lambda_fit}, {"t_lo", f.t_lo},           {"t_hi", f.t_hi},
            {"r_squared", f.r_squared},   {"std_error", f.std_error}, {"samples", f.samples}};
}

Vector read_field_csv(const fs::path& path, const std::string& column, Eigen::Index n) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Config, "initial.file: cannot open " + path.string());
    std::string header;
    std::getline(in, header);
    std::vector<std::string> names;
    {
        std::istringstream hs(header);
        std::string name;
        while (std::getline(hs, name, ',')) names.push_back(name);
    }
    const auto it = std::find(names.begin(), names.end(), column);
    if (it == names.end())
        throw Error(ErrorKind::Config, "initial.file: " + path.string() + " has no column '" + column + "'");
    const auto col = static_cast<std::size_t>(it - names.begin());
    std::vector<double> vals;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string cell;
        for (std::size_t i = 0; i <= col && std::getline(ls, cell, ','); ++i) {
            if (i == col) vals.push_back(std::stod(cell));
        }
    }
    if (static_cast<Eigen::Index>(vals.size()) != n)
        throw Error(ErrorKind::Config, "initial.file: expected " + std::to_string(n) + " rows, found " +
                                           std::to_string(vals.size()));
    return Eigen::Map<Vector>(vals.data(), n);
}

void check_modes(const ExperimentConfig& cfg, const EigenSystem& eigs) {
    for (const auto& m : cfg.initial_modes) {
        if (m.k > eigs.distinct() || m.j > eigs.multiplicities[m.k - 1])
            throw Error(ErrorKind::Config, cfg.source + ": field 'initial.modes': mode (" + std::to_string(m.k) + "," +
                                               std::to_string(m.j) + ") is not among the computed eigenpairs");
    }
}

Vector nonlinear_initial(const ExperimentConfig& cfg, const Vector& V, const EigenSystem& eigs) {
    switch (cfg.initial) {
    case InitialKind::Stationary: return V;
    case InitialKind::Scaled: return cfg.factor * V;
    case InitialKind::File: return read_field_csv(cfg.initial_file, "v", V.size());
    case InitialKind::Modes: {
        check_modes(cfg, eigs);
        Vector v = V;
        const double vmax = V.maxCoeff();
        for (const auto& m : cfg.initial_modes) {
            const auto phi = eigs.phi(m.k, m.j);
            v += m.amplitude * vmax / phi.cwiseAbs().maxCoeff() * phi;
        }
        return v;
    }
    }
    return V;
}

Vector linear_initial(const ExperimentConfig& cfg, const Vector& V, const EigenSystem& eigs) {
    switch (cfg.initial) {
    case InitialKind::Stationary: return Vector::Zero(V.size());
    case InitialKind::Scaled: return (cfg.factor - 1.0) * V;
    case InitialKind::File: return read_field_csv(cfg.initial_file, "f", V.size());
    case InitialKind::Modes: {
        check_modes(cfg, eigs);
        Vector f = Vector::Zero(V.size());
        for (const auto& m : cfg.initial_modes) f += m.amplitude * eigs.phi(m.k, m.j);
        return f;
    }
    }
    return Vector::Zero(V.size());
}

} // namespace

std::string format_double(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::string manifest_json(const ExperimentConfig& cfg, Pipeline pipeline) {
    json j;
    j["pipeline"] = to_string(pipeline);
    j["config"] = config_json(cfg);
    j["versions"]["fdelab"] = FDE_VERSION;
    j["versions"]["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                             std::to_string(EIGEN_MINOR_VERSION);
    j["versions"]["nlohmann_json"] = std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                     std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                     std::to_string(NLOHMANN_JSON_VERSION_PATCH);
    j["versions"]["compiler"] = __VERSION__;
    return j.dump(2) + "\n";
}

RunResult run_experiment(const ExperimentConfig& cfg, Pipeline pipeline, const fs::path& out) {
    RunResult res;
    res.pipeline = pipeline;
    res.dir = out;
    fs::create_directories(out);
    auto emit = [&](const std::string& name, const std::string& content) {
        write_atomic(out / name, content);
        res.files.push_back(name);
    };
    emit("manifest.json", manifest_json(cfg, pipeline));

    const Exponents& exps = cfg.exps;
    const Grid<> grid = stage("domain", [&] { return build_domain(cfg.domain); });
    const StationaryProfile prof = stage("stationary", [&] { return solve_stationary(grid, exps, std::nullopt, cfg.stationary); });
    emit("profile.csv", profile_csv(grid, prof));
    if (pipeline == Pipeline::Stationary) return res;

    const EigenSystem eigs = stage("spectrum", [&] { return weighted_eigensystem(grid, prof.V, exps.p, cfg.modes, cfg.eigen); });
    res.gap = stage("spectrum", [&] { return classify_gap(eigs, exps.p, exps.c, cfg.gap_tol); });
    emit("spectrum.csv", spectrum_csv(eigs));
    emit("gap.json", gap_json(res.gap, eigs).dump(2) + "\n");
    if (pipeline == Pipeline::Spectrum) return res;

    const int k_max = std::max(1, std::min(res.gap.k_p, eigs.distinct()));
    const EntropyEvaluator ev(grid, prof.V, exps, eigs, k_max);
    EntropyTrace trace = ev.empty_trace();
    EvolveOptions eo;
    eo.sample_interval = cfg.sample_interval;
    eo.store_fields = false;
    json verdict;
    verdict["pipeline"] = to_string(pipeline);

    if (pipeline == Pipeline::LinearEvolve) {
        const Vector f0 = linear_initial(cfg, prof.V, eigs);
        stage("flow", [&] {
            return evolve(grid, exps, {FlowKind::Linearized, f0, 0.0}, cfg.horizon, cfg.dt, eo,
                          [&](const FlowState& s) {
                              trace.rows.push_back(ev.linear(s.field, s.time));
                              return true;
                          },
                          &prof.V);
        });
        emit("trace.csv", trace_csv(trace));
        res.final_h_inf = trace.rows.back().h_inf;
        if (trace.rows.front().E_lin == 0.0) {
            res.status = "TRIVIAL-FIXED-POINT";
        } else {
            // the slowest-decaying excited mode dominates E_lin late in the run
            const Vector coef = project_coefficients(grid, eigs, f0, eigs.distinct());
            int k_dom = 0;
            for (int k = 1; k <= eigs.distinct() && k_dom == 0; ++k)
                for (int j = 1; j <= eigs.multiplicities[k - 1]; ++j)
                    if (std::abs(coef(eigs.column(k, j))) > 1e-8 * std::sqrt(trace.rows.front().E_lin)) k_dom = k;
            if (k_dom == 0) k_dom = eigs.distinct();
            const double predicted = 2.0 * (eigs.eigenvalues(k_dom - 1) - exps.p * exps.c) / exps.p;
            std::vector<double> t, E;
            for (const auto& r : trace.rows) {
                t.push_back(r.t);
                E.push_back(r.E_lin);
            }
            WindowPolicy window = cfg.window;
            if (std::holds_alternative<EntropyBand>(window)) window = ExplicitWindow{0.5 * cfg.horizon, cfg.horizon};
            const RateFit fit = stage("rates", [&] { return fit_rate(t, E, window); });
            const double rel = std::abs(fit.lambda_fit - predicted) / std::abs(predicted);
            res.status = rel <= cfg.rate_tol ? "PASS" : "FAIL";
            verdict["dominant_k"] = k_dom;
            verdict["predicted"] = predicted;
            verdict["lambda_fit"] = fit.lambda_fit;
            verdict["rel_error"] = rel;
            verdict["tol"] = cfg.rate_tol;
            verdict["fit"] = fit_json(fit);
        }
        verdict["status"] = res.status;
        emit("verdict.json", verdict.dump(2) + "\n");
        res.trace = std::move(trace);
        return res;
    }

    Vector v0 = stage("flow", [&] { return nonlinear_initial(cfg, prof.V, eigs); });
    const bool stationary_start = (v0 - prof.V).cwiseAbs().maxCoeff() == 0.0;
    if (!stationary_start && cfg.calibrate) {
        const Calibration cal = stage("flow", [&] { return calibrate_rescaled(grid, exps, prof.V, v0, cfg.horizon, cfg.dt); });
        res.calibration_scale = cal.scale;
        v0 *= cal.scale;
    }
    stage("flow", [&] {
        return evolve(grid, exps, {FlowKind::Rescaled, v0, 0.0}, cfg.horizon, cfg.dt, eo, [&](const FlowState& s) {
            trace.rows.push_back(ev(s.field, s.time));
            return true;
        });
    });
    emit("trace.csv", trace_csv(trace));
    emit("production.csv", production_csv(trace));
    res.final_h_inf = trace.rows.back().h_inf;
    verdict["calibration_scale"] = res.calibration_scale;
    verdict["final"] = {{"h_inf", res.final_h_inf}, {"E_nl", trace.rows.back().E_nl}};

    double max_entropy = 0;
    for (const auto& r : trace.rows) max_entropy = std::max(max_entropy, r.E_nl);
    if (stationary_start) {
        res.status = max_entropy <= 1e-12 ? "TRIVIAL-FIXED-POINT" : "FAIL";
        verdict["max_E_nl"] = max_entropy;
    } else if (pipeline == Pipeline::Evolve) {
        res.status = res.final_h_inf <= cfg.converge_tol ? "PASS" : "FAIL";
        verdict["converge_tol"] = cfg.converge_tol;
        verdict["constants"] = constants_json(comparison_constants(trace, 0.5 * cfg.horizon));
    } else {
        const RateFit fit = stage("rates", [&] { return fit_rate(trace, cfg.window); });
        const RateVerdict rv = stage("rates", [&] { return sharp_rate_verdict(fit, res.gap, exps.p, cfg.rate_tol); });
        res.rate = rv;
        res.status = rv.pass ? "PASS" : "FAIL";
        verdict["lambda_fit"] = rv.lambda_fit;
        verdict["predicted"] = rv.predicted;
        verdict["rel_error"] = rv.rel_error;
        verdict["tol"] = rv.tol;
        verdict["lambda_p"] = rv.lambda_p;
        verdict["k_p"] = rv.k_p;
        verdict["p"] = rv.p;
        verdict["fit"] = fit_json(fit);
        verdict["constants"] = constants_json(comparison_constants(trace, fit.t_lo));
    }
    verdict["status"] = res.status;
    emit("verdict.json", verdict.dump(2) + "\n");
    res.trace = std::move(trace);
    return res;
}

RunResult run_experiment(const fs::path& config_path, Pipeline pipeline, const std::optional<fs::path>& out) {
    const ExperimentConfig cfg = load_config(config_path);
    return run_experiment(cfg, pipeline, out ? *out : fs::path(cfg.out_dir));
}

std::vector<SweepRow> sweep(const ExperimentConfig& base, int jobs, const fs::path& out) {
    require(jobs >= 1, ErrorKind::Config, "--jobs must be at least 1");
    std::vector<SweepRow> cells;
    const bool any = base.sweep_p || base.sweep_n || base.sweep_amplitude;
    if (any) {
        const double p0 = base.exps.p;
        const double a0 = base.initial_modes.empty() ? 0.0 : base.initial_modes.front().amplitude;
        const auto ps = base.sweep_p.value_or(std::vector<double>{p0});
        const auto ns = base.sweep_n.value_or(std::vector<int>{base.domain.nodes});
        const auto as = base.sweep_amplitude.value_or(std::vector<double>{a0});
        for (double p : ps)
            for (int n : ns)
                for (double a : as) {
                    SweepRow row;
                    row.p = p;
                    row.n = n;
                    row.amplitude = a;
                    cells.push_back(row);
                }
    }
    fs::create_directories(out);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < cells.size(); i = next++) {
            SweepRow& row = cells[i];
            try {
                ExperimentConfig cfg = base;
                cfg.sweep_p.reset();
                cfg.sweep_n.reset();
                cfg.sweep_amplitude.reset();
                if (base.sweep_p) {
                    if (cfg.p_in)
                        cfg.p_in = row.p;
                    else
                        cfg.m_in = 1.0 / row.p;
                }
                cfg.domain.nodes = row.n;
                if (base.sweep_amplitude)
                    for (auto& m : cfg.initial_modes) m.amplitude = row.amplitude;
                resolve_exponents(cfg);
                char name[96];
                std::snprintf(name, sizeof name, "cell_%03zu", i);
                const RunResult r = run_experiment(cfg, Pipeline::Rates, out / name);
                row.h2_ok = r.gap.h2_ok;
                row.status = r.status;
                if (r.rate) {
                    row.lambda_p = r.rate->lambda_p;
                    row.lambda_fit = r.rate->lambda_fit;
                    row.ratio = r.rate->lambda_fit / r.rate->predicted;
                }
            } catch (const std::exception& e) {
                row.status = "ERROR";
                row.error = e.what();
            }
        }
    };
    std::vector<std::thread> pool;
    const int threads = std::max(1, std::min<int>(jobs, static_cast<int>(cells.size())));
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    std::ostringstream csv;
    csv << "p,n,amplitude,lambda_p,lambda_fit,ratio,h2_ok,status,error\n";
    for (const auto& r : cells) {
        std::string err = r.error;
        std::replace(err.begin(), err.end(), '"', '\'');
        csv << format_double(r.p) << ',' << r.n << ',' << format_double(r.amplitude) << ',' << format_double(r.lambda_p)
            << ',' << format_double(r.lambda_fit) << ',' << format_double(r.ratio) << ',' << (r.h2_ok ? "true" : "false")
            << ',' << r.status << ",\"" << err << "\"\n";
    }
    write_atomic(out / "sweep.csv", csv.str());
    return cells;
}

ClosedLoopResult closed_loop_extinction(const Grid<>& grid, const Exponents& exps, const Vector& u0,
                                        const ClosedLoopOptions& opts) {
    ClosedLoopResult res;
    res.T_exact = exps.T;
    require(u0.minCoeff() >= 0.0 && u0.maxCoeff() > 0.0, ErrorKind::InvalidArgument, "closed loop needs u0 >= 0, u0 != 0");
    const double tau_h = opts.tau_horizon > 0 ? opts.tau_horizon : 5.0 * exps.T;
    // Every level is fitted on the same τ-window so the O(dt) error is smooth in dt.
    double T_first = 0;
    for (int level = 0; level < 3; ++level) {
        const double dt = opts.dt / double(1 << level);
        DtPolicy pol;
        pol.dt = pol.dt_max = dt;
        EvolveOptions eo;
        eo.sample_interval = dt;
        eo.store_fields = false;
        std::vector<double> tau, sup;
        evolve(grid, exps, {FlowKind::Original, u0, 0.0}, tau_h, pol, eo, [&](const FlowState& s) {
            tau.push_back(s.time);
            sup.push_back(s.field.cwiseAbs().maxCoeff());
            return true;
        });
        if (level == 0) T_first = estimate_extinction_time(tau, sup, exps.m).T;
        std::vector<double> tw, sw;
        for (std::size_t i = 0; i < tau.size(); ++i)
            if (tau[i] >= 0.5 * T_first && tau[i] <= 0.9 * T_first) {
                tw.push_back(tau[i]);
                sw.push_back(sup[i]);
            }
        res.dts.push_back(dt);
        res.T_levels.push_back(estimate_extinction_time(tw, sw, exps.m, 1.0, 1.0).T);
    }
    const double r1 = 2 * res.T_levels[1] - res.T_levels[0];
    const double r2 = 2 * res.T_levels[2] - res.T_levels[1];
    res.T_est = (4 * r2 - r1) / 3;
    const Exponents est = Exponents::from_p_T(exps.p, res.T_est);
    res.c_est = est.c;

    const StationaryProfile prof = solve_stationary(grid, est);
    const EigenSystem eigs = weighted_eigensystem(grid, prof.V, est.p, 4);
    const GapReport gap = classify_gap(eigs, est.p, est.c);
    const EntropyEvaluator ev(grid, prof.V, est, eigs, std::max(1, gap.k_p));
    res.trace = ev.empty_trace();
    const Vector v0 = u0.array().pow(est.m);
    DtPolicy pol;
    pol.dt = pol.dt_max = opts.rescaled_dt;
    EvolveOptions eo;
    eo.sample_interval = opts.sample_interval;
    eo.store_fields = false;
    evolve(grid, est, {FlowKind::Rescaled, v0, 0.0}, opts.rescaled_horizon, pol, eo, [&](const FlowState& s) {
        res.trace.rows.push_back(ev(s.field, s.time));
        return true;
    });
    res.final_entropy = res.trace.rows.back().E_nl;
    for (const auto& r : res.trace.rows)
        if (r.t >= 0.5 * opts.rescaled_horizon) res.max_late_entropy = std::max(res.max_late_entropy, r.E_nl);
    return res;
}

} // namespace fde
