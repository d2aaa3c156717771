#include "doctest.h"

#include <cmath>
#include <random>

#include "fde/diagnostics.hpp"

using namespace fde;

namespace {

struct Fixture {
    Grid<> grid;
    Exponents exps;
    StationaryProfile prof;
    EigenSystem eigs;
    GapReport gap;

    explicit Fixture(double p = 2.0, int n = 128, DomainSpec spec = DomainSpec::interval(1.0, 128))
        : grid(build_domain(spec.nodes == n ? spec : DomainSpec::interval(1.0, n))),
          exps(Exponents::from_p_c(p, 1.0)),
          prof(solve_stationary(grid, exps)),
          eigs(weighted_eigensystem(grid, prof.V, p, 6)),
          gap(classify_gap(eigs, p, 1.0)) {}

    EntropyEvaluator evaluator(int k_max = 2) const { return EntropyEvaluator(grid, prof.V, exps, eigs, k_max); }
};

double direct_density(double p, double h) {
    return std::pow(1 + h, p + 1) - 1 - (p + 1) / p * (std::pow(1 + h, p) - 1);
}

} // namespace

TEST_CASE("stable entropy density") {
    for (double p : {1.2, 2.0, 3.0}) {
        for (double h : {-0.4, -0.1, -0.0499, 0.0501, 0.2, 1.5})
            CHECK(entropy_density(p, h) == doctest::Approx(direct_density(p, h)).epsilon(1e-12));
        // Taylor: (p+1)/2 h² + (p+1)(p-1)/6·... leading term
        CHECK(entropy_density(p, 1e-8) == doctest::Approx((p + 1) / 2 * 1e-16).epsilon(1e-7));
        CHECK(entropy_density(p, 0.0) == 0.0);
        CHECK(power_remainder(p, 0.0499) == doctest::Approx(power_remainder(p, 0.0501) * std::pow(0.0499 / 0.0501, 2)).epsilon(0.01));
        CHECK(entropy_density(p, -0.3) > 0);
    }
    CHECK(power_remainder(3.0, 0.01) == doctest::Approx(3 * 1e-4 + 1e-6).epsilon(1e-14));
}

TEST_CASE("coincidence case v = V") {
    Fixture fx;
    auto r = fx.evaluator()(fx.prof.V, 0.0);
    CHECK(r.E_lin == 0.0);
    CHECK(r.I_lin == 0.0);
    CHECK(r.E_nl == 0.0);
    CHECK(r.A_nl.cwiseAbs().maxCoeff() == 0.0);
    CHECK_FALSE(r.quotients_defined);
    CHECK(std::isnan(r.Q_nl(0)));
    CHECK_THROWS_AS(fx.evaluator()(-fx.prof.V, 0.0), Error);
}

TEST_CASE("single-mode perturbations") {
    for (double p : {1.5, 2.0, 3.0}) {
        Fixture fx(p, 200);
        auto ev = fx.evaluator(2);
        for (int k = 1; k <= 3; ++k) {
            const double eps = 1e-4;
            const Vector v = fx.prof.V + eps * fx.eigs.phi(k, 1);
            auto r = ev(v, 0.0);
            CHECK(r.E_nl / r.E_lin == doctest::Approx((p + 1) / 2).epsilon(0.01));
            CHECK(r.I_lin == doctest::Approx((fx.eigs.eigenvalues(k - 1) - p * fx.exps.c) * eps * eps).epsilon(1e-6));
            CHECK(r.h_L2V * r.h_L2V == doctest::Approx(r.E_lin).epsilon(1e-12));
            if (k <= 2) {
                auto b = rayleigh_compare(r, p);
                CHECK(r.Q_nl(k - 1) / r.Q_lin(k - 1) == doctest::Approx(b.limit).epsilon(0.02));
                CHECK(r.Q_lin(k - 1) == doctest::Approx(1.0).epsilon(1e-8));
                CHECK(r.Q_lin(2 - k) <= 1e-7);
                CHECK(r.Q_nl(2 - k) <= 10 * eps);
                CHECK(b.defined);
                CHECK(b.worst_ratio_dev < 0.02);
            } else {
                CHECK(r.Q_lin.maxCoeff() <= 1e-7);
                CHECK(r.Q_nl.maxCoeff() <= 10 * eps);
            }
        }
    }
}

TEST_CASE("production identity and cubic remainder") {
    Fixture fx(2.0, 200);
    auto ev = fx.evaluator(1);
    for (double eps : {1e-1, 1e-2, 1e-3}) {
        const Vector f = eps * fx.prof.V.cwiseProduct(Vector::Ones(fx.grid.size()) + fx.eigs.phi(2, 1) / fx.eigs.phi(2, 1).maxCoeff());
        auto r = ev(fx.prof.V + f, 0.0);
        const double lhs = r.dEdt + (fx.exps.p + 1) / fx.exps.p * r.I_lin;
        const double scale = std::abs(r.dEdt) + std::abs(r.I_lin);
        CHECK(std::abs(lhs - r.R_exact) <= 1e-9 * scale);
        // leading cubic term c(p²-1)/2 ∫f³V^{p-2}
        const double p = fx.exps.p;
        const double lead = fx.exps.c * (p * p - 1) / 2 *
                            (fx.grid.quad_weights.array() * f.array().cube() * fx.prof.V.array().pow(p - 2)).sum();
        CHECK(r.R_exact == doctest::Approx(lead).epsilon(3 * eps));
        CHECK(std::abs(r.R_exact) <= analytic_kappa(p, fx.exps.c) * (1 + 3 * eps) * r.cubic);
    }
}

TEST_CASE("sandwich") {
    Fixture fx;
    auto ev = fx.evaluator();
    auto r = ev(1.01 * fx.prof.V, 0.0);
    auto s = sandwich_check(r, 2.0);
    CHECK(s.ratio == doctest::Approx(1 + 2 * 0.01 / 3).epsilon(1e-10));
    CHECK(s.ratio >= 0.97);
    CHECK(s.ratio <= 1.03);
    // slope O(δ)
    double prev = 0;
    for (double d : {1e-2, 1e-3, 1e-4}) {
        const double dev = std::abs(sandwich_check(ev((1 + d) * fx.prof.V, 0.0), 2.0).ratio - 1);
        if (prev > 0) CHECK(prev / dev == doctest::Approx(10.0).epsilon(0.02));
        prev = dev;
    }
    // alternating signs of h
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> ud(-1, 1);
    for (double d : {0.2, 0.05, 0.01}) {
        Vector v = fx.prof.V;
        for (Eigen::Index i = 0; i < v.size(); ++i) v(i) *= 1 + d * ((i % 2) ? 1 : -1) * std::abs(ud(rng));
        auto c = sandwich_check(ev(v, 0.0), 2.0, 2.0);
        CHECK(c.inside);
        CHECK(c.C_needed < 2.0);
    }
}

TEST_CASE("time monotonicity: manufactured constant h") {
    auto e = Exponents::from_p_c(2.0, 1.0);
    std::vector<double> t;
    std::vector<Vector> h;
    for (int i = 0; i <= 60; ++i) {
        t.push_back(i * 0.1);
        h.push_back(Vector::Constant(3, 0.05));
    }
    auto m = time_monotonicity_check(t, h, e, 1.0);
    const double cm = e.c * e.m;
    // closed-form slack for h ≡ h0 and Δ = 1
    const double lower_slack = 0.05 - ((1 - std::exp(-2 * cm)) / (2 * cm) * 0.05 - cm);
    CHECK(m.worst_lower == doctest::Approx(-lower_slack).epsilon(1e-10));
    CHECK(m.worst_upper < 0);
    CHECK(m.worst_bc <= 0);
    CHECK(m.pairs > 0);
    std::vector<Vector> zero(t.size(), Vector::Zero(3));
    auto z = time_monotonicity_check(t, zero, e, 1.0);
    CHECK(z.worst_lower == doctest::Approx(-cm).epsilon(1e-12));
    CHECK(z.worst_upper < 0);
    std::vector<double> early = {0.0, 0.1};
    CHECK_THROWS_AS(time_monotonicity_check(early, std::vector<Vector>(2, Vector::Zero(3)), e), Error);
}

TEST_CASE("trajectory diagnostics on a calibrated run") {
    Fixture fx(2.0, 96);
    const Vector v0 = fx.prof.V + 0.1 * fx.prof.V.maxCoeff() * fx.eigs.phi(2, 1) / fx.eigs.phi(2, 1).cwiseAbs().maxCoeff() +
                      0.05 * fx.prof.V.maxCoeff() * fx.eigs.phi(1, 1) / fx.eigs.phi(1, 1).maxCoeff();
    DtPolicy pol;
    pol.dt = 1e-2;
    const double H = 10.0;
    auto cal = calibrate_rescaled(fx.grid, fx.exps, fx.prof.V, v0, H, pol);
    auto ev = fx.evaluator(fx.gap.k_p);
    EntropyTrace trace = ev.empty_trace();
    EvolveOptions eo;
    eo.sample_interval = 0.1;
    auto tr = evolve(fx.grid, fx.exps, {FlowKind::Rescaled, cal.scale * v0, 0.0}, H, pol, eo,
                     [&](const FlowState& s) {
                         trace.rows.push_back(ev(s.field, s.time));
                         return true;
                     });
    REQUIRE(trace.rows.size() == 101);
    CHECK(trace.labels.size() == 1);

    auto sm = smoothing_check(trace, 1);
    CHECK(std::isfinite(sm.sup));
    CHECK(sm.sup > 0);
    auto sm_fast = smoothing_check(trace, 1, 1.0);
    CHECK(sm_fast.sup > sm.sup);

    for (double eps : {0.1, 0.03, 0.01}) CHECK(std::isfinite(orthogonality_time(trace, eps)));
    CHECK(std::isnan(orthogonality_time(trace, 1e-12)));
    auto qo = quantitative_orthogonality(trace, 1, 3.0);
    CHECK(std::isfinite(qo.sup));

    CHECK(entropy_decreasing(trace, 0.0));
    auto pr = production_residual(trace, 3.0);
    CHECK(pr.kappa_sup <= 10 * analytic_kappa(2.0, 1.0));
    CHECK(pr.kappa_sup > 0);

    auto ss = sandwich_summary(trace);
    CHECK(ss.samples > 0);
    CHECK(std::isfinite(ss.C));

    auto tm = time_monotonicity_check(tr, fx.prof.V, fx.exps);
    const double cm = fx.exps.c * fx.exps.m;
    CHECK(tm.worst_lower <= 5 * pol.dt * (1 + 2 * cm));
    CHECK(tm.worst_upper <= 5 * pol.dt * (1 + 2 * cm));
    CHECK(tm.worst_bc <= 5 * pol.dt * (1 + 2 * cm));

    auto qd = quotient_derivative_check(trace, 0.5);
    CHECK(qd.violations == 0);
}

TEST_CASE("quotient growth when almost-orthogonality fails") {
    Fixture fx(2.0, 96);
    auto ev = fx.evaluator(1);
    // uncalibrated data: the V-mode takes over while h stays small for a while
    const Vector v0 = (1 + 1e-6) * fx.prof.V;
    EntropyTrace trace = ev.empty_trace();
    DtPolicy pol;
    pol.dt = 1e-2;
    EvolveOptions eo;
    eo.sample_interval = 0.1;
    evolve(fx.grid, fx.exps, {FlowKind::Rescaled, v0, 0.0}, 6.0, pol, eo, [&](const FlowState& s) {
        trace.rows.push_back(ev(s.field, s.time));
        return true;
    });
    auto qd = quotient_derivative_check(trace, 0.5, 0.1);
    CHECK(qd.windows > 10);
    CHECK(qd.violations == 0);
    CHECK(qd.kappa_low > 0);
}
