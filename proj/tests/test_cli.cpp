#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "fde/cli.hpp"

using namespace fde;
namespace fs = std::filesystem;

namespace {

const char* kRatesConfig = R"(# interval, p = 2, c = 1
[domain]
geometry = interval
length = 1
nodes = 96

[exponents]
p = 2
c = 1

[time]
dt = 1e-2
horizon = 12

[initial]
kind = modes
modes = 2:1:0.1
)";

ExperimentConfig parse(const std::string& text) {
    std::istringstream in(text);
    return parse_config(in, "test.cfg");
}

std::string config_error(const std::string& text) {
    try {
        parse(text);
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Config);
        return e.what();
    }
    return "";
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("fdelab_test_" + name);
    fs::remove_all(dir);
    return dir;
}

} // namespace

TEST_CASE("config: sections, dotted keys and defaults") {
    auto cfg = parse(kRatesConfig);
    CHECK(cfg.domain.nodes == 96);
    CHECK(cfg.exps.p == 2.0);
    CHECK(cfg.exps.T == doctest::Approx(2.0));
    CHECK(cfg.initial == InitialKind::Modes);
    REQUIRE(cfg.initial_modes.size() == 1);
    CHECK(cfg.initial_modes[0].k == 2);
    CHECK(cfg.initial_modes[0].amplitude == 0.1);
    CHECK(std::holds_alternative<EntropyBand>(cfg.window));
    CHECK(cfg.dt.dt_max == 1e-2);

    auto dotted = parse("exponents.m = 0.5\nexponents.T = 4\ndomain.geometry = ball\ndomain.radius = 2\ndomain.nodes = 64\n");
    CHECK(dotted.exps.p == doctest::Approx(2.0));
    CHECK(dotted.exps.c == doctest::Approx(0.5));
    CHECK(dotted.domain.geometry == Geometry::RadialBall);
    CHECK(dotted.domain.dimension == 3);
    CHECK(dotted.domain.extent == 2.0);

    auto sw = parse("exponents.p = 2\nexponents.c = 1\nsweep.p = 1.5, 2, 3\nsweep.n =\n");
    REQUIRE(sw.sweep_p);
    CHECK(sw.sweep_p->size() == 3);
    REQUIRE(sw.sweep_n);
    CHECK(sw.sweep_n->empty());
    CHECK_FALSE(sw.sweep_amplitude);
}

TEST_CASE("config: T given instead of c") {
    auto cfg = parse("[exponents]\np = 3\nT = 0.75\n");
    CHECK(cfg.exps.c == doctest::Approx(3.0 / (2.0 * 0.75)));
    const std::string manifest = manifest_json(cfg, Pipeline::Stationary);
    CHECK(manifest.find("\"c\": 2.0") != std::string::npos);
    CHECK(manifest.find("\"given\"") != std::string::npos);
    // every default is echoed
    for (const char* key : {"\"dt_min\"", "\"gap_tol\"", "\"cluster_tol\"", "\"band_lo\"", "\"seed\"", "\"horizon\""})
        CHECK(manifest.find(key) != std::string::npos);
}

TEST_CASE("config: diagnostics carry line and field") {
    auto e = config_error("exponents.p = 2\nexponents.c = 1\n\n[time]\nhorizn = 3\n");
    CHECK(e.find("test.cfg:5") != std::string::npos);
    CHECK(e.find("time.horizn") != std::string::npos);
    CHECK(e.find("unknown key") != std::string::npos);

    e = config_error("[exponents]\np = two\nc = 1\n");
    CHECK(e.find("test.cfg:2") != std::string::npos);
    CHECK(e.find("exponents.p") != std::string::npos);

    CHECK(config_error("exponents.p = 2\nexponents.m = 0.5\nexponents.c = 1\n").find("exactly one") != std::string::npos);
    CHECK(config_error("exponents.p = 2\n").find("exactly one") != std::string::npos);
    CHECK(config_error("exponents.p = 2\nexponents.c = 1\nexponents.c = 2\n").find("duplicate") != std::string::npos);
    CHECK(config_error("exponents.p = 2\nexponents.c = 1\n[initial]\nmodes = 9:1:0.1\n").find("initial.modes") !=
          std::string::npos);
    CHECK(config_error("exponents.p = 2\nexponents.c = 1\nnot a pair\n").find("test.cfg:3") != std::string::npos);
    CHECK(config_error("exponents.p = 0.5\nexponents.c = 1\n").find("exponents") == std::string::npos);
    CHECK_FALSE(config_error("exponents.p = 0.5\nexponents.c = 1\n").empty());
    CHECK(config_error("exponents.p = 2\nexponents.c = 1\ntime.dt = -1\n").find("time.dt") != std::string::npos);
    CHECK(config_error("exponents.p = 2\nexponents.c = 1\ninitial.kind = file\n").find("initial.file") !=
          std::string::npos);
}

TEST_CASE("stationary and spectrum pipelines") {
    auto cfg = parse(kRatesConfig);
    const auto dir = scratch("spectrum");
    auto res = run_experiment(cfg, Pipeline::Spectrum, dir);
    for (const char* f : {"manifest.json", "profile.csv", "spectrum.csv", "gap.json"}) CHECK(fs::exists(dir / f));
    CHECK_FALSE(fs::exists(dir / "trace.csv"));
    CHECK(slurp(dir / "profile.csv").rfind("x,V,S,dist\n", 0) == 0);
    CHECK(slurp(dir / "spectrum.csv").rfind("k,j,lambda,residual\n1,1,", 0) == 0);
    CHECK(res.gap.h2_ok);
    CHECK(res.gap.k_p == 1);
    CHECK(slurp(dir / "gap.json").find("\"k_p\": 1") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("rates pipeline: mode-perturbed interval run passes") {
    auto cfg = parse(kRatesConfig);
    const auto dir = scratch("rates");
    auto res = run_experiment(cfg, Pipeline::Rates, dir);
    for (const char* f : {"manifest.json", "profile.csv", "spectrum.csv", "gap.json", "trace.csv", "verdict.json"})
        CHECK(fs::exists(dir / f));
    CHECK(res.status == "PASS");
    REQUIRE(res.rate);
    CHECK(res.rate->rel_error < 0.05);
    const std::string trace = slurp(dir / "trace.csv");
    CHECK(trace.rfind("t,E_lin,I_lin,E_nl,h_inf,Q_1_1,Qn_1_1,A_1_1\n", 0) == 0);
    CHECK(slurp(dir / "verdict.json").find("\"status\": \"PASS\"") != std::string::npos);

    // identical config gives byte-identical outputs
    const auto dir2 = scratch("rates2");
    run_experiment(cfg, Pipeline::Rates, dir2);
    for (const char* f : {"trace.csv", "verdict.json", "gap.json", "profile.csv"}) CHECK(slurp(dir / f) == slurp(dir2 / f));
    fs::remove_all(dir);
    fs::remove_all(dir2);
}

TEST_CASE("stationary initial data is a trivial fixed point") {
    std::string text = kRatesConfig;
    text.replace(text.find("kind = modes"), 12, "kind = stationary");
    auto cfg = parse(text);
    const auto dir = scratch("fixed");
    auto res = run_experiment(cfg, Pipeline::Rates, dir);
    CHECK(res.status == "TRIVIAL-FIXED-POINT");
    REQUIRE(res.trace);
    for (const auto& r : res.trace->rows) CHECK(r.E_nl <= 1e-12);
    fs::remove_all(dir);
}

TEST_CASE("linear-evolve single mode") {
    std::string text = kRatesConfig;
    text.replace(text.find("modes = 2:1:0.1"), 15, "modes = 3:1:1");
    text.replace(text.find("horizon = 12"), 12, "horizon = 2");
    auto cfg = parse(text);
    cfg.rate_tol = 0.02;
    cfg.dt.dt = cfg.dt.dt_max = 1e-3;
    const auto dir = scratch("linear");
    auto res = run_experiment(cfg, Pipeline::LinearEvolve, dir);
    CHECK(res.status == "PASS");
    CHECK(slurp(dir / "verdict.json").find("\"dominant_k\": 3") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("evolve pipeline converges in relative error") {
    std::string text = kRatesConfig;
    text.replace(text.find("modes = 2:1:0.1"), 15, "modes = 1:1:0.2, 2:1:0.05");
    auto cfg = parse(text);
    const auto dir = scratch("evolve");
    auto res = run_experiment(cfg, Pipeline::Evolve, dir);
    CHECK(res.status == "PASS");
    CHECK(res.final_h_inf < 1e-6);
    CHECK(fs::exists(dir / "production.csv"));
    fs::remove_all(dir);
}

TEST_CASE("stage errors name the stage") {
    auto cfg = parse(kRatesConfig);
    cfg.horizon = 1.0; // the entropy band is never reached
    try {
        run_experiment(cfg, Pipeline::Rates, scratch("short"));
        CHECK(false);
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::EmptyWindow);
        CHECK(std::string(e.what()).find("stage rates") != std::string::npos);
    }
    fs::remove_all(scratch("short"));
}

TEST_CASE("sweep") {
    const auto dir = scratch("sweep");
    auto empty = parse(kRatesConfig);
    auto rows = sweep(empty, 2, dir);
    CHECK(rows.empty());
    CHECK(slurp(dir / "sweep.csv") == "p,n,amplitude,lambda_p,lambda_fit,ratio,h2_ok,status,error\n");

    auto cfg = parse(std::string(kRatesConfig) + "[sweep]\np = 1.5, 2\nn = 64\n");
    rows = sweep(cfg, 2, dir);
    REQUIRE(rows.size() == 2);
    for (const auto& r : rows) {
        CHECK(r.status == "PASS");
        CHECK(r.h2_ok);
        CHECK(r.ratio == doctest::Approx(1.0).epsilon(0.05));
    }
    CHECK(rows[0].p == 1.5);
    const auto serial = sweep(cfg, 1, dir / "serial");
    CHECK(serial[1].lambda_fit == rows[1].lambda_fit);

    // failing cells are recorded, the sweep carries on
    auto bad = parse(std::string(kRatesConfig) + "[sweep]\nn = 4, 64\n");
    rows = sweep(bad, 2, dir);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].status == "ERROR");
    CHECK(rows[0].error.find("n >= 8") != std::string::npos);
    CHECK(rows[1].status == "PASS");
    fs::remove_all(dir);
}

TEST_CASE("closed-loop extinction") {
    const auto grid = build_domain(DomainSpec::interval(1.0, 64));
    const auto e = Exponents::from_p_c(2.0, 1.0);
    const auto prof = solve_stationary(grid, e);
    auto res = closed_loop_extinction(grid, e, prof.S);
    CHECK(res.T_est == doctest::Approx(2.0).epsilon(1e-4));
    CHECK(res.T_levels[0] > res.T_levels[1]);
    CHECK(res.final_entropy <= 1e-8);

    // u0 = 2S: extinction time T·2^{1-m}
    auto twice = closed_loop_extinction(grid, e, 2.0 * prof.S);
    CHECK(twice.T_est == doctest::Approx(2.0 * std::sqrt(2.0)).epsilon(1e-4));
    CHECK(twice.final_entropy <= 1e-8);
}
