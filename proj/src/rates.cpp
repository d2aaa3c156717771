#include "fde/rates.hpp"

#include <algorithm>
#include <cmath>

#include "fde/error.hpp"

namespace fde {

namespace {

RateFit least_squares(const std::vector<double>& t, const std::vector<double>& logE) {
    const auto n = static_cast<double>(t.size());
    double tm = 0, ym = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        tm += t[i];
        ym += logE[i];
    }
    tm /= n;
    ym /= n;
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        sxx += (t[i] - tm) * (t[i] - tm);
        sxy += (t[i] - tm) * (logE[i] - ym);
        syy += (logE[i] - ym) * (logE[i] - ym);
    }
    require(sxx > 0, ErrorKind::EmptyWindow, "fit_rate: window has a single time");
    const double slope = sxy / sxx;
    double ssr = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        const double r = logE[i] - ym - slope * (t[i] - tm);
        ssr += r * r;
    }
    RateFit fit;
    fit.lambda_fit = -slope;
    fit.intercept = ym - slope * tm;
    fit.r_squared = syy > 0 ? std::clamp(1.0 - ssr / syy, 0.0, 1.0) : 1.0;
    fit.std_error = std::sqrt(ssr / std::max(n - 2.0, 1.0) / sxx);
    fit.t_lo = *std::min_element(t.begin(), t.end());
    fit.t_hi = *std::max_element(t.begin(), t.end());
    fit.samples = static_cast<int>(t.size());
    return fit;
}

} // namespace

RateFit fit_rate(const std::vector<double>& t, const std::vector<double>& E, const WindowPolicy& window) {
    require(t.size() == E.size(), ErrorKind::InvalidArgument, "fit_rate: size mismatch");
    std::vector<double> ts, ls;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (!(E[i] > 0)) continue;
        bool keep = false;
        if (const auto* w = std::get_if<ExplicitWindow>(&window))
            keep = t[i] >= w->t_lo && t[i] <= w->t_hi;
        else {
            const auto& b = std::get<EntropyBand>(window);
            keep = E[i] >= b.lo && E[i] <= b.hi;
        }
        if (keep) {
            ts.push_back(t[i]);
            ls.push_back(std::log(E[i]));
        }
    }
    require(ts.size() >= 10, ErrorKind::EmptyWindow,
            "fit_rate: " + std::to_string(ts.size()) + " samples in window, need 10");
    return least_squares(ts, ls);
}

RateFit fit_rate(const EntropyTrace& trace, const WindowPolicy& window) {
    return fit_rate(trace.times(), trace.entropies(), window);
}

DelaySupersolution::DelaySupersolution(double lambda_, double sigma_, double Y0_, double t0_)
    : lambda(lambda_), sigma(sigma_), t0(t0_), Y0(Y0_) {
    require(lambda > 0 && sigma > 0 && Y0 > 0, ErrorKind::InvalidArgument, "delay supersolution: need λ, σ, Y0 > 0");
    C = lambda * std::pow(Y0, -sigma) - std::exp(lambda * sigma);
    require(C > 0, ErrorKind::NonpositiveC,
            "delay supersolution: C = " + std::to_string(C) + " ≤ 0; start later (smaller Y0)");
}

double DelaySupersolution::operator()(double t) const {
    const double s = t - t0;
    const double D = std::exp(-lambda * sigma * (s - 1.0)) + C;
    return std::exp(std::log(lambda) / sigma - lambda * s - std::log(D) / sigma);
}

double DelaySupersolution::derivative(double t) const {
    const double s = t - t0;
    const double e = std::exp(-lambda * sigma * (s - 1.0));
    return (*this)(t) * (-lambda + lambda * e / (e + C));
}

double DelaySupersolution::limit() const { return std::pow(lambda / C, 1.0 / sigma); }

double delay_supersolution(double lambda, double sigma, double Y_t0, double t0, double t) {
    require(t >= t0, ErrorKind::InvalidArgument, "delay_supersolution: t < t0");
    return DelaySupersolution(lambda, sigma, Y_t0, t0)(t);
}

double DelayOdeRun::at(double s) const {
    require(!t.empty() && s >= t.front() - 1e-12 && s <= t.back() + 1e-12, ErrorKind::InvalidArgument,
            "DelayOdeRun::at outside the integrated range");
    if (t.size() == 1) return Y.front();
    const double dt = t[1] - t[0];
    auto i = static_cast<std::size_t>(std::floor((s - t.front()) / dt));
    i = std::min(i, t.size() - 2);
    const double hstep = t[i + 1] - t[i];
    const double x = (s - t[i]) / hstep;
    const double h00 = (1 + 2 * x) * (1 - x) * (1 - x), h10 = x * (1 - x) * (1 - x);
    const double h01 = x * x * (3 - 2 * x), h11 = x * x * (x - 1);
    return h00 * Y[i] + h10 * hstep * dY[i] + h01 * Y[i + 1] + h11 * hstep * dY[i + 1];
}

DelayOdeRun integrate_delay_ode(double lambda, double sigma, const std::function<double(double)>& history, double t0,
                                double horizon, double dt, double cap) {
    require(lambda > 0 && sigma > 0 && dt > 0 && horizon > 0, ErrorKind::InvalidArgument,
            "integrate_delay_ode: need λ, σ, dt, horizon > 0");
    const double per_unit = 1.0 / dt;
    require(std::abs(per_unit - std::round(per_unit)) < 1e-9 * per_unit, ErrorKind::InvalidArgument,
            "integrate_delay_ode: dt must divide 1");
    const auto steps = static_cast<std::size_t>(std::llround(horizon / dt));
    DelayOdeRun run;
    run.lambda = lambda;
    run.sigma = sigma;
    run.t0 = t0;
    run.t.reserve(steps + 1);

    auto delayed = [&](double s) {
        if (s <= t0) return history(s);
        return run.at(s);
    };
    auto rhs = [&](double s, double y) {
        const double yd = std::max(delayed(s - 1.0), 0.0);
        return -lambda * y + std::pow(yd, sigma) * y;
    };

    const double y0 = history(t0);
    require(y0 > 0, ErrorKind::InvalidArgument, "integrate_delay_ode: history must be positive");
    run.t.push_back(t0);
    run.Y.push_back(y0);
    run.dY.push_back(rhs(t0, y0));
    for (std::size_t n = 0; n < steps; ++n) {
        const double tn = t0 + static_cast<double>(n) * dt;
        const double y = run.Y.back();
        const double k1 = run.dY.back();
        const double k2 = rhs(tn + 0.5 * dt, y + 0.5 * dt * k1);
        const double k3 = rhs(tn + 0.5 * dt, y + 0.5 * dt * k2);
        const double k4 = rhs(tn + dt, y + dt * k3);
        const double yn = y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
        if (!std::isfinite(yn) || yn > cap)
            throw Error(ErrorKind::BlowUp, "integrate_delay_ode: Y exceeded cap at t = " + std::to_string(tn + dt));
        const double t_next = t0 + static_cast<double>(n + 1) * dt;
        run.t.push_back(t_next);
        run.Y.push_back(yn);
        run.dY.push_back(0.0);
        run.dY.back() = rhs(t_next, yn);
    }
    return run;
}

RateVerdict sharp_rate_verdict(const RateFit& fit, const GapReport& gap, double p, double tol) {
    if (!gap.h2_ok || !gap.lambda_p)
        throw Error(ErrorKind::H2Violated, "cp = " + std::to_string(gap.cp) + " is within the gap tolerance of an eigenvalue");
    RateVerdict v;
    v.fit = fit;
    v.lambda_fit = fit.lambda_fit;
    v.lambda_p = *gap.lambda_p;
    v.k_p = gap.k_p;
    v.p = p;
    v.tol = tol;
    v.predicted = 2.0 * v.lambda_p / p;
    v.rel_error = std::abs(v.lambda_fit - v.predicted) / v.predicted;
    v.pass = v.rel_error <= tol;
    return v;
}

} // namespace fde
