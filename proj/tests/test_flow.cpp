#include "doctest.h"

#include <cmath>
#include <random>

#include "fde/flow.hpp"
#include "fde/spectrum.hpp"

using namespace fde;

namespace {

struct Fixture {
    Grid<> grid = build_domain(DomainSpec::interval(1.0, 128));
    Exponents exps = Exponents::from_p_c(2.0, 1.0);
    StationaryProfile prof = solve_stationary(grid, exps);
    EigenSystem eigs = weighted_eigensystem(grid, prof.V, exps.p, 6);
};

double sup_rel(const Vector& a, const Vector& b) { return (a - b).lpNorm<Eigen::Infinity>() / b.lpNorm<Eigen::Infinity>(); }

} // namespace

TEST_CASE("rescaled step: stationary profile is a fixed point") {
    Fixture fx;
    FlowState s{FlowKind::Rescaled, fx.prof.V, 0.0};
    for (int i = 0; i < 100; ++i) s = step_rescaled(fx.grid, fx.exps, s, 1e-2);
    CHECK(s.time == doctest::Approx(1.0));
    CHECK(sup_rel(s.field, fx.prof.V) <= 1e-10);
}

TEST_CASE("rescaled step in the linear regime") {
    Fixture fx;
    // perturbation along the slowest stable mode
    const Vector phi = fx.eigs.phi(2, 1);
    const double amp = 1e-6;
    FlowState s{FlowKind::Rescaled, fx.prof.V + amp * fx.prof.V.maxCoeff() * phi / phi.cwiseAbs().maxCoeff(), 0.0};
    const double dt = 1e-2;
    int iters = 0;
    FlowState n = step_rescaled(fx.grid, fx.exps, s, dt, &iters);
    CHECK(iters <= 3);
    const double h0 = (s.field.cwiseQuotient(fx.prof.V).array() - 1).abs().maxCoeff();
    const double h1 = (n.field.cwiseQuotient(fx.prof.V).array() - 1).abs().maxCoeff();
    const double rate = 2 * fx.eigs.eigenvalues(1) / fx.exps.p - 2 * fx.exps.c; // 2λ_p/p
    CHECK(h1 <= h0 * (1 + 1e-3));
    CHECK(h1 >= h0 * std::exp(-(rate + 0.1) * dt));
}

TEST_CASE("rescaled step: first order in dt") {
    Fixture fx;
    const Vector v0 = fx.prof.V + 0.05 * fx.prof.V.maxCoeff() * fx.eigs.phi(2, 1) / fx.eigs.phi(2, 1).cwiseAbs().maxCoeff();
    auto run = [&](double dt) {
        FlowState s{FlowKind::Rescaled, v0, 0.0};
        const int steps = static_cast<int>(std::lround(0.5 / dt));
        for (int i = 0; i < steps; ++i) s = step_rescaled(fx.grid, fx.exps, s, dt);
        return s.field;
    };
    const Vector a = run(1e-2), b = run(5e-3), c = run(2.5e-3);
    const double ratio = (a - b).lpNorm<Eigen::Infinity>() / (b - c).lpNorm<Eigen::Infinity>();
    CHECK(ratio == doctest::Approx(2.0).epsilon(0.1));
}

TEST_CASE("original flow follows the separable solution") {
    Fixture fx;
    const double T = fx.exps.T;
    FlowState s{FlowKind::Original, fx.prof.S, 0.0};
    const double dt = T / 2000;
    for (int i = 0; i < 1000; ++i) s = step_original(fx.grid, fx.exps, s, dt);
    const Vector exact = fx.prof.S * std::pow(0.5, 1.0 / (1.0 - fx.exps.m));
    CHECK(sup_rel(s.field, exact) <= 0.01);

    FlowState zero{FlowKind::Original, Vector::Zero(fx.grid.size()), 0.0};
    CHECK(step_original(fx.grid, fx.exps, zero, 0.1).field.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("original flow: energy decay and nonnegativity") {
    Fixture fx;
    Vector u0(fx.grid.size());
    for (Eigen::Index i = 0; i < u0.size(); ++i) {
        const double x = fx.grid.coords(i);
        u0(i) = (x > 0.3 && x < 0.6) ? 5.0 : 0.0;
    }
    FlowState s{FlowKind::Original, u0, 0.0};
    double prev = integrate(fx.grid, u0.array().pow(1 + fx.exps.m).matrix());
    for (int i = 0; i < 50; ++i) {
        s = step_original(fx.grid, fx.exps, s, 2e-3);
        CHECK(s.field.minCoeff() >= 0.0);
        const double e = integrate(fx.grid, s.field.array().pow(1 + fx.exps.m).matrix());
        CHECK(e <= prev * (1 + 1e-12));
        prev = e;
    }
}

TEST_CASE("implicit steps preserve order") {
    Fixture fx;
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> ud(0.0, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
        Vector lo(fx.grid.size()), hi(fx.grid.size());
        for (Eigen::Index i = 0; i < lo.size(); ++i) {
            lo(i) = fx.prof.V(i) * (0.5 + ud(rng));
            hi(i) = lo(i) * (1.0 + 0.2 * ud(rng));
        }
        auto a = step_rescaled(fx.grid, fx.exps, {FlowKind::Rescaled, lo, 0}, 5e-3);
        auto b = step_rescaled(fx.grid, fx.exps, {FlowKind::Rescaled, hi, 0}, 5e-3);
        CHECK(((b.field - a.field).array() >= 0).all());
        auto c = step_original(fx.grid, fx.exps, {FlowKind::Original, lo, 0}, 5e-3);
        auto d = step_original(fx.grid, fx.exps, {FlowKind::Original, hi, 0}, 5e-3);
        CHECK(((d.field - c.field).array() >= 0).all());
    }
}

TEST_CASE("linearized flow: modal growth factors") {
    Fixture fx;
    LinearizedStepper step(fx.grid, fx.prof.V, fx.exps);
    const double dt = 1e-3;
    for (int k = 1; k <= 3; ++k) {
        FlowState s{FlowKind::Linearized, fx.eigs.phi(k, 1), 0.0};
        for (int i = 0; i < 1000; ++i) s = step.step(s, dt);
        const double coef = project_coefficients(fx.grid, fx.eigs, s.field, 6)(k - 1);
        const double exact = std::exp((fx.exps.c * fx.exps.p - fx.eigs.eigenvalues(k - 1)) / fx.exps.p);
        CHECK(coef == doctest::Approx(exact).epsilon(0.005));
        if (k == 1) CHECK(coef > 1.0);
    }
    CHECK_THROWS_AS(step.step({FlowKind::Linearized, fx.prof.V, 0}, fx.exps.T), Error);
}

TEST_CASE("linearized flow preserves deflation and decays at the gap rate") {
    Fixture fx;
    auto gap = classify_gap(fx.eigs, fx.exps.p, fx.exps.c);
    Vector f0(fx.grid.size());
    for (Eigen::Index i = 0; i < f0.size(); ++i) f0(i) = std::sin(3.0 * fx.grid.coords(i)) * fx.grid.coords(i);
    f0 = deflate(fx.grid, fx.eigs, f0, gap.k_p);
    DtPolicy pol;
    pol.dt = 1e-3;
    EvolveOptions eo;
    eo.sample_interval = 0.1;
    auto tr = evolve(fx.grid, fx.exps, {FlowKind::Linearized, f0, 0.0}, 2.0, pol, eo, {}, &fx.prof.V);
    const double e0 = inner_product_weighted(fx.grid, f0, f0, fx.eigs.weight);
    for (std::size_t i = 0; i < tr.fields.size(); ++i) {
        const Vector& f = tr.fields[i];
        CHECK(project_coefficients(fx.grid, fx.eigs, f, gap.k_p).cwiseAbs().maxCoeff() <= 1e-8 * std::sqrt(e0));
        const double e = inner_product_weighted(fx.grid, f, f, fx.eigs.weight);
        CHECK(e <= e0 * std::exp(-2 * *gap.lambda_p / fx.exps.p * tr.field_times[i] * 0.99) * (1 + 1e-12));
    }
}

TEST_CASE("evolve: scheduling contract and fixed point") {
    Fixture fx;
    DtPolicy pol;
    pol.dt = 0.03; // does not divide the sample interval
    EvolveOptions eo;
    eo.sample_interval = 0.1;
    auto tr = evolve(fx.grid, fx.exps, {FlowKind::Rescaled, fx.prof.V, 0.0}, 10.0, pol, eo);
    REQUIRE(tr.sample_times.size() == 100);
    for (std::size_t k = 0; k < tr.sample_times.size(); ++k) CHECK(tr.sample_times[k] == 0.1 * double(k + 1));
    for (std::size_t k = 1; k < tr.sample_times.size(); ++k) CHECK(tr.sample_times[k] > tr.sample_times[k - 1]);
    CHECK(sup_rel(tr.final_state.field, fx.prof.V) <= 1e-9);
    CHECK(tr.fields.size() == 101);
}

TEST_CASE("evolve: adaptive dt grows and a sampler can stop the run") {
    Fixture fx;
    DtPolicy pol;
    pol.dt = 1e-4;
    pol.adaptive = true;
    EvolveOptions eo;
    eo.sample_interval = 0.5;
    auto tr = evolve(fx.grid, fx.exps, {FlowKind::Rescaled, fx.prof.V, 0.0}, 2.0, pol, eo);
    CHECK(*std::max_element(tr.dt_history.begin(), tr.dt_history.end()) == doctest::Approx(pol.dt_max));
    int calls = 0;
    auto stop = evolve(fx.grid, fx.exps, {FlowKind::Rescaled, fx.prof.V, 0.0}, 2.0, pol, eo,
                       [&](const FlowState&) { return ++calls < 3; });
    CHECK(stop.stopped_early);
    CHECK(calls == 3);
}

TEST_CASE("calibrated rescaled run converges in relative error") {
    Fixture fx;
    Vector v0 = fx.prof.V.cwiseProduct((Vector::Ones(fx.grid.size()) + 0.2 * fx.eigs.phi(1, 1) / fx.eigs.phi(1, 1).maxCoeff()));
    DtPolicy pol;
    pol.dt = 1e-2;
    const double H = 10.0;
    auto cal = calibrate_rescaled(fx.grid, fx.exps, fx.prof.V, v0, H, pol);
    CHECK(cal.scale > 0.5);
    CHECK(cal.scale < 1.0);
    EvolveOptions eo;
    eo.sample_interval = 0.5;
    auto tr = evolve(fx.grid, fx.exps, {FlowKind::Rescaled, cal.scale * v0, 0.0}, H, pol, eo);
    auto h_of = [&](const Vector& v) { return (v.cwiseQuotient(fx.prof.V).array() - 1).abs().maxCoeff(); };
    CHECK(h_of(tr.final_state.field) < 1e-6);
    for (std::size_t i = 1; i + 4 < tr.fields.size(); ++i) CHECK(h_of(tr.fields[i + 1]) < h_of(tr.fields[i]));
}

TEST_CASE("rescaling consistency between original and rescaled flows") {
    Fixture fx;
    Vector u0 = 1.3 * fx.prof.S;
    for (Eigen::Index i = 0; i < u0.size(); ++i) u0(i) *= 1.0 + 0.3 * std::sin(7.0 * fx.grid.coords(i));
    const double T = fx.exps.T, m = fx.exps.m;
    const double t = 1.0, tau = T * (1 - std::exp(-t / T));
    DtPolicy pol;
    pol.dt = 1e-3;
    EvolveOptions eo;
    eo.sample_interval = tau;
    auto orig = evolve(fx.grid, fx.exps, {FlowKind::Original, u0, 0.0}, tau, pol, eo);
    eo.sample_interval = t;
    auto resc = evolve(fx.grid, fx.exps, {FlowKind::Rescaled, u0.array().pow(m).matrix(), 0.0}, t, pol, eo);
    const Vector w = std::exp(t / ((1 - m) * T)) * orig.final_state.field;
    CHECK(sup_rel(w.array().pow(m).matrix(), resc.final_state.field) <= 0.01);
}

TEST_CASE("extinction time estimates") {
    const double m = 0.5;
    std::vector<double> tau, sup;
    for (int i = 0; i <= 1999; ++i) {
        tau.push_back(i * 1e-3);
        sup.push_back(3.0 * std::pow(1 - tau.back() / 2.0, 1 / (1 - m)));
    }
    auto est = estimate_extinction_time(tau, sup, m);
    CHECK(est.T == doctest::Approx(2.0).epsilon(1e-10));
    CHECK(est.fit_residual < 1e-12);
    std::vector<double> flat(tau.size(), 1.0);
    CHECK_THROWS_AS(estimate_extinction_time(tau, flat, m), Error);

    Fixture fx;
    DtPolicy pol;
    pol.dt = fx.exps.T / 2000;
    pol.dt_max = pol.dt;
    EvolveOptions eo;
    eo.sample_interval = pol.dt;
    auto tr = evolve(fx.grid, fx.exps, {FlowKind::Original, fx.prof.S, 0.0}, 2 * fx.exps.T, pol, eo);
    CHECK(tr.stopped_early);
    auto e = estimate_extinction_time(tr, fx.exps.m);
    CHECK(e.T == doctest::Approx(fx.exps.T).epsilon(0.01));
}
