#pragma once

#include <Eigen/Core>

#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "fde/flow.hpp"
#include "fde/spectrum.hpp"
#include "fde/stationary.hpp"

namespace fde {

// Quotients below this entropy are reported as absent.
inline constexpr double kEntropyFloor = 1e-14;
inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct EntropyReport {
    double t = 0;
    double E_lin = 0;   // ∫f²V^{p-1}
    double I_lin = 0;   // ∫|∇f|² - pc∫f²V^{p-1}
    double E_nl = 0;    // nonlinear entropy
    double h_inf = 0;   // ‖v/V - 1‖∞
    double h_L2V = 0;   // (∫h²V^{p+1})^{1/2}
    double delta_now = 0;
    double cubic = 0;   // ∫|f|³V^{p-2}
    double dEdt = 0;    // semi-discrete d𝓔/dt
    double R_exact = 0; // dEdt + (p+1)/p·I_lin
    Vector Q_lin;       // |⟨f,φ_kj⟩_V| / √E
    Vector A_nl;        // |∫(v^p - V^p)φ_kj|
    Vector Q_nl;        // A_nl / √𝓔, NaN when undefined
    bool quotients_defined = false;
};

struct EntropyTrace {
    double p = 0, c = 0;
    int dimension = 1;
    std::vector<std::pair<int, int>> labels; // (k, j) of each quotient column
    std::vector<EntropyReport> rows;

    std::vector<double> times() const;
    std::vector<double> entropies() const;
};

// Precomputes the V-dependent weights once per trajectory.
class EntropyEvaluator {
public:
    EntropyEvaluator(const Grid<>& grid, const Vector& V, const Exponents& exps, const EigenSystem& eigs, int k_max);

    EntropyReport operator()(const Vector& v, double t) const;
    // Linear functionals only (E_lin, I_lin, h_L2V, Q_lin) for a signed perturbation f.
    EntropyReport linear(const Vector& f, double t) const;
    EntropyTrace empty_trace() const;

private:
    const Grid<>& grid_;
    Vector V_, W_, Vp_, Vp1_, Vpm2_;
    Exponents exps_;
    Matrix phi_;   // columns φ_kj for k ≤ k_max
    Matrix wphiW_; // w V^{p-1} φ_kj
    Matrix wphi_;  // w φ_kj
    std::vector<std::pair<int, int>> labels_;
};

EntropyReport entropy_report(const Grid<>& grid, const Vector& V, const Exponents& exps, const EigenSystem& eigs,
                             const Vector& v, double t, int k_max = 1);

// (1+h)^{q} - 1 - q·h and (1+h)^{p+1} - 1 - (p+1)/p·((1+h)^p - 1), evaluated
// without cancellation for small h.
double power_remainder(double q, double h);
double entropy_density(double p, double h);

struct ProductionResidual {
    std::vector<double> t, R_fd, R_exact, cubic, kappa;
    std::vector<bool> coarse; // finite-difference error dominates R
    double kappa_sup = 0;     // sup over the window of |R_exact| / ∫|f|³V^{p-2}
    double kappa_fd_sup = 0;  // same with R_fd, over samples that are not coarse
    int usable_fd = 0;
};

// Late-window comparison of d𝓔/dt + (p+1)/p·I with the cubic remainder bound.
// Samples need h_inf < 1/(2p) and t ≥ t_from. Throws WindowTooCoarse when
// `strict` and no sample passes the Richardson check.
ProductionResidual production_residual(const EntropyTrace& trace, double t_from = 0.0, bool strict = false);

// Leading-order constant c(p+1)(p-1)/6·((p+1) + |p-2|) of the remainder bound.
double analytic_kappa(double p, double c);

struct SandwichResult {
    double ratio = 1;      // 2𝓔 / ((p+1)E)
    double delta = 0;
    double C_needed = 0;   // smallest C with ratio ∈ [(1+Cδ)^{-2}, (1+Cδ)²]
    bool inside = true;    // for the supplied C
};

SandwichResult sandwich_check(const EntropyReport& r, double p, double C = 10.0);

struct SandwichSummary {
    double lo = 1, hi = 1; // extremal ratios
    double C = 0;          // sup of C_needed
    int samples = 0;
};

SandwichSummary sandwich_summary(const EntropyTrace& trace);

struct RayleighBracket {
    double limit = 0;         // √2·p/√(p+1)
    double worst_ratio_dev = 0; // max |𝒬/(limit·Q) - 1| over columns with Q > 0
    double C = 0, C2 = 0;     // reported constants making the bracket hold
    bool defined = false;
};

RayleighBracket rayleigh_compare(const EntropyReport& r, double p, double C = 10.0);

struct RatioSup {
    double sup = 0;
    double t_at_sup = 0;
    int samples = 0;
    std::vector<double> t, ratio;
};

// sup ‖h(t)‖∞ / 𝓔(t-1)^{exponent}; exponent defaults to 1/(4N).
RatioSup smoothing_check(const EntropyTrace& trace, int N, double exponent = 0.0);

// sup 𝒬_kj(t) / 𝓔(t-1)^{exponent} over t ≥ t_from; exponent defaults to 1/(8N).
RatioSup quantitative_orthogonality(const EntropyTrace& trace, int N, double t_from, double exponent = 0.0);

// First sampled time after which every 𝒬_kj stays ≤ eps (NaN if never).
double orthogonality_time(const EntropyTrace& trace, double eps);

struct MonotonicityResult {
    // Signed margins; positive values are violations.
    double worst_lower = -kInf; // max of lower bound minus ∫h
    double worst_upper = -kInf; // max of ∫h minus upper bound
    double worst_bc = -kInf;    // max of ∂_t h minus 2cm(h+1)
    int pairs = 0;
};

// Lemma-style two-sided bounds on ∫_{t0}^{t1} h dt for checkpoint pairs
// spaced `gap` apart with t0 ≥ T log 2, plus the discrete Benilan–Crandall bound.
MonotonicityResult time_monotonicity_check(const std::vector<double>& times, const std::vector<Vector>& h,
                                           const Exponents& exps, double gap = 1.0);
MonotonicityResult time_monotonicity_check(const Trajectory& traj, const Vector& V, const Exponents& exps,
                                           double gap = 1.0);

// True if 𝓔 is strictly decreasing on samples with t ≥ t_from and 𝓔 above the floor.
bool entropy_decreasing(const EntropyTrace& trace, double t_from, double floor = 1e-13);

struct QuotientGrowth {
    int windows = 0;
    int violations = 0;     // d𝒜/dt < 0 on qualifying windows
    double kappa_low = 0;   // min of (d𝒜/dt)/(ε0·𝒜)
};

// On samples where some 𝒬_kj ≥ eps0 and h_inf ≤ delta_ratio·eps0, checks d𝒜_kj/dt ≥ 0.
QuotientGrowth quotient_derivative_check(const EntropyTrace& trace, double eps0, double delta_ratio = 0.1);

struct ComparisonConstants {
    double sandwich_lo = 1, sandwich_hi = 1;
    double remainder_kappa = 0; // NaN when the late window is empty
    double smoothing_kappa = 0; // NaN when the trace is too short
};

ComparisonConstants comparison_constants(const EntropyTrace& trace, double t_from);

} // namespace fde
