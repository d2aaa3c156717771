#pragma once

#include <functional>
#include <string>
#include <variant>
#include <vector>

#include "fde/diagnostics.hpp"
#include "fde/spectrum.hpp"

namespace fde {

struct ExplicitWindow {
    double t_lo = 0, t_hi = 0;
};

// Samples with 𝓔 ∈ [lo, hi].
struct EntropyBand {
    double lo = 1e-10, hi = 1e-4;
};

using WindowPolicy = std::variant<ExplicitWindow, EntropyBand>;

struct RateFit {
    double lambda_fit = 0; // -slope of log 𝓔 against t
    double t_lo = 0, t_hi = 0;
    double r_squared = 0;
    double std_error = 0;  // standard error of the slope
    double intercept = 0;
    int samples = 0;
};

RateFit fit_rate(const std::vector<double>& t, const std::vector<double>& E, const WindowPolicy& window);
RateFit fit_rate(const EntropyTrace& trace, const WindowPolicy& window);

// Barrier for Y' ≤ -λY + Y^σ(t-1)Y anchored so that Ybar(t0) = Y0:
//   Ybar(t) = λ^{1/σ} e^{-λs} / [e^{-λσ(s-1)} + C]^{1/σ},  s = t - t0,
// with C = λ Y0^{-σ} - e^{λσ}.
struct DelaySupersolution {
    double lambda = 1, sigma = 1, t0 = 0, Y0 = 0;
    double C = 0;

    DelaySupersolution(double lambda, double sigma, double Y0, double t0 = 0.0);

    double operator()(double t) const;
    double derivative(double t) const;
    // lim Ybar(t) e^{λ(t-t0)}
    double limit() const;
};

double delay_supersolution(double lambda, double sigma, double Y_t0, double t0, double t);

struct DelayOdeRun {
    double lambda = 0, sigma = 0, t0 = 0;
    std::vector<double> t, Y, dY;

    // Cubic Hermite dense output on [t0, t.back()].
    double at(double s) const;
};

// RK4 for Y' = -λY + Y(t-1)^σ Y with history on [t0-1, t0]. The step must divide 1.
DelayOdeRun integrate_delay_ode(double lambda, double sigma, const std::function<double(double)>& history, double t0,
                                double horizon, double dt, double cap = 1e6);

struct RateVerdict {
    bool pass = false;
    double lambda_fit = 0;
    double predicted = 0; // 2λ_p/p
    double rel_error = 0;
    double tol = 0;
    double lambda_p = 0;
    int k_p = 0;
    double p = 0;
    RateFit fit;
};

RateVerdict sharp_rate_verdict(const RateFit& fit, const GapReport& gap, double p, double tol);

} // namespace fde
