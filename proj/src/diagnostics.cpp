#include "fde/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace fde {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool same_time(double a, double b) { return std::abs(a - b) <= 1e-9 * (1.0 + std::abs(a)); }
} // namespace

std::vector<double> EntropyTrace::times() const {
    std::vector<double> out;
    for (const auto& r : rows) out.push_back(r.t);
    return out;
}

std::vector<double> EntropyTrace::entropies() const {
    std::vector<double> out;
    for (const auto& r : rows) out.push_back(r.E_nl);
    return out;
}

double power_remainder(double q, double h) {
    if (std::abs(h) < 0.05) {
        double coef = q * (q - 1.0) / 2.0, hk = h * h, sum = 0.0;
        for (int k = 2; k < 60; ++k) {
            const double term = coef * hk;
            sum += term;
            if (std::abs(term) <= 1e-18 * std::abs(sum)) break;
            coef *= (q - k) / (k + 1.0);
            hk *= h;
        }
        return sum;
    }
    return std::expm1(q * std::log1p(h)) - q * h;
}

double entropy_density(double p, double h) {
    return power_remainder(p + 1.0, h) - (p + 1.0) / p * power_remainder(p, h);
}

EntropyEvaluator::EntropyEvaluator(const Grid<>& grid, const Vector& V, const Exponents& exps,
                                   const EigenSystem& eigs, int k_max)
    : grid_(grid), V_(V), exps_(exps) {
    require(V.size() == grid.size(), ErrorKind::InvalidArgument, "entropy evaluator: V length mismatch");
    require(V.minCoeff() > 0.0, ErrorKind::InvalidArgument, "entropy evaluator needs V > 0");
    const double p = exps.p;
    W_ = V.array().pow(p - 1.0);
    Vp_ = V.array().pow(p);
    Vp1_ = V.array().pow(p + 1.0);
    Vpm2_ = V.array().pow(p - 2.0);
    const int cols = eigs.columns_through(k_max);
    phi_ = eigs.functions.leftCols(cols);
    wphiW_ = (grid.quad_weights.cwiseProduct(W_)).asDiagonal() * phi_;
    wphi_ = grid.quad_weights.asDiagonal() * phi_;
    for (int k = 1; k <= k_max; ++k)
        for (int j = 1; j <= eigs.multiplicities[k - 1]; ++j) labels_.emplace_back(k, j);
}

EntropyTrace EntropyEvaluator::empty_trace() const {
    EntropyTrace tr;
    tr.p = exps_.p;
    tr.c = exps_.c;
    tr.dimension = grid_.dimension();
    tr.labels = labels_;
    return tr;
}

EntropyReport EntropyEvaluator::operator()(const Vector& v, double t) const {
    require(v.size() == grid_.size(), ErrorKind::InvalidArgument, "entropy_report: length mismatch");
    require(v.minCoeff() > 0.0, ErrorKind::InvalidArgument, "entropy_report needs v > 0");
    const double p = exps_.p, c = exps_.c;
    const Eigen::Index n = v.size();
    const Vector& w = grid_.quad_weights;
    const Vector f = v - V_;
    Vector h(n), dens(n), rem(n), vpdiff(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        h(i) = v(i) / V_(i) - 1.0;
        dens(i) = entropy_density(p, h(i));
        rem(i) = h(i) * power_remainder(p, h(i));
        vpdiff(i) = Vp_(i) * std::expm1(p * std::log1p(h(i)));
    }
    EntropyReport r;
    r.t = t;
    r.E_lin = (w.array() * W_.array() * f.array().square()).sum();
    const double grad = gradient_energy(grid_, f);
    r.I_lin = grad - p * c * r.E_lin;
    r.E_nl = (w.array() * Vp1_.array() * dens.array()).sum();
    r.h_inf = h.cwiseAbs().maxCoeff();
    r.h_L2V = std::sqrt((w.array() * Vp1_.array() * h.array().square()).sum());
    r.delta_now = r.h_inf;
    r.cubic = (w.array() * Vp1_.array() * h.array().abs().cube()).sum();
    r.dEdt = (p + 1.0) / p * (-grad + c * (w.array() * f.array() * vpdiff.array()).sum());
    r.R_exact = c * (p + 1.0) / p * (w.array() * Vp1_.array() * rem.array()).sum();

    r.A_nl = (wphi_.transpose() * vpdiff).cwiseAbs();
    const Vector proj = (wphiW_.transpose() * f).cwiseAbs();
    r.Q_lin = r.E_lin > 0.0 ? Vector(proj / std::sqrt(r.E_lin)) : Vector::Zero(proj.size());
    r.quotients_defined = r.E_nl > kEntropyFloor;
    r.Q_nl = r.quotients_defined ? Vector(r.A_nl / std::sqrt(r.E_nl)) : Vector::Constant(proj.size(), kNaN);
    return r;
}

EntropyReport EntropyEvaluator::linear(const Vector& f, double t) const {
    require(f.size() == grid_.size(), ErrorKind::InvalidArgument, "entropy_report: length mismatch");
    const double p = exps_.p, c = exps_.c;
    const Vector& w = grid_.quad_weights;
    EntropyReport r;
    r.t = t;
    r.E_lin = (w.array() * W_.array() * f.array().square()).sum();
    r.I_lin = gradient_energy(grid_, f) - p * c * r.E_lin;
    r.h_L2V = std::sqrt((w.array() * Vp1_.array() * (f.array() / V_.array()).square()).sum());
    r.h_inf = (f.array() / V_.array()).abs().maxCoeff();
    r.delta_now = r.h_inf;
    const Vector proj = (wphiW_.transpose() * f).cwiseAbs();
    r.Q_lin = r.E_lin > 0.0 ? Vector(proj / std::sqrt(r.E_lin)) : Vector::Zero(proj.size());
    r.A_nl = Vector::Constant(proj.size(), kNaN);
    r.Q_nl = Vector::Constant(proj.size(), kNaN);
    return r;
}

EntropyReport entropy_report(const Grid<>& grid, const Vector& V, const Exponents& exps, const EigenSystem& eigs,
                             const Vector& v, double t, int k_max) {
    return EntropyEvaluator(grid, V, exps, eigs, k_max)(v, t);
}

double analytic_kappa(double p, double c) {
    return c * (p + 1.0) * (p - 1.0) / 6.0 * ((p + 1.0) + std::abs(p - 2.0));
}

ProductionResidual production_residual(const EntropyTrace& trace, double t_from, bool strict) {
    const auto& rows = trace.rows;
    const double p = trace.p;
    ProductionResidual out;
    for (std::size_t i = 2; i + 2 < rows.size(); ++i) {
        const auto& r = rows[i];
        if (r.t < t_from || !(r.h_inf < 1.0 / (2.0 * p))) continue;
        const double d1 = (rows[i + 1].E_nl - rows[i - 1].E_nl) / (rows[i + 1].t - rows[i - 1].t);
        const double d2 = (rows[i + 2].E_nl - rows[i - 2].E_nl) / (rows[i + 2].t - rows[i - 2].t);
        const double rfd = d1 + (p + 1.0) / p * r.I_lin;
        const double err = std::abs(d2 - d1) / 3.0;
        const bool coarse = err >= std::abs(r.R_exact);
        out.t.push_back(r.t);
        out.R_fd.push_back(rfd);
        out.R_exact.push_back(r.R_exact);
        out.cubic.push_back(r.cubic);
        out.coarse.push_back(coarse);
        const double k = r.cubic > 0.0 ? std::abs(r.R_exact) / r.cubic : 0.0;
        out.kappa.push_back(k);
        out.kappa_sup = std::max(out.kappa_sup, k);
        if (!coarse && r.cubic > 0.0) {
            ++out.usable_fd;
            out.kappa_fd_sup = std::max(out.kappa_fd_sup, std::abs(rfd) / r.cubic);
        }
    }
    if (out.t.empty()) throw Error(ErrorKind::InsufficientTrace, "no samples in the production window");
    if (strict && out.usable_fd == 0)
        throw Error(ErrorKind::WindowTooCoarse, "finite-difference error dominates R_p on every sample");
    return out;
}

SandwichResult sandwich_check(const EntropyReport& r, double p, double C) {
    SandwichResult s;
    s.delta = r.h_inf;
    s.ratio = r.E_lin > 0.0 ? 2.0 * r.E_nl / ((p + 1.0) * r.E_lin) : 1.0;
    const double dev = std::sqrt(std::max(s.ratio, 1.0 / s.ratio)) - 1.0;
    s.C_needed = s.delta > 0.0 ? dev / s.delta : (dev == 0.0 ? 0.0 : std::numeric_limits<double>::infinity());
    const double b = (1.0 + C * s.delta) * (1.0 + C * s.delta);
    s.inside = s.ratio >= 1.0 / b && s.ratio <= b;
    return s;
}

SandwichSummary sandwich_summary(const EntropyTrace& trace) {
    SandwichSummary s;
    for (const auto& r : trace.rows) {
        if (!(r.h_inf < 1.0 / (2.0 * trace.p)) || r.E_lin <= 0.0 || r.E_nl <= kEntropyFloor) continue;
        auto c = sandwich_check(r, trace.p);
        s.lo = std::min(s.lo, c.ratio);
        s.hi = std::max(s.hi, c.ratio);
        s.C = std::max(s.C, c.C_needed);
        ++s.samples;
    }
    return s;
}

RayleighBracket rayleigh_compare(const EntropyReport& r, double p, double C) {
    RayleighBracket b;
    b.limit = std::sqrt(2.0) * p / std::sqrt(p + 1.0);
    b.C = C;
    if (!r.quotients_defined) return b;
    b.defined = true;
    const double up = 1.0 + C * r.h_inf;
    const double se = std::sqrt(r.E_lin);
    for (Eigen::Index i = 0; i < r.Q_lin.size(); ++i) {
        const double q = r.Q_lin(i), qn = r.Q_nl(i);
        const double excess = std::max({0.0, qn - b.limit * up * q, b.limit * q / up - qn});
        if (se > 0.0) b.C2 = std::max(b.C2, excess / se);
        if (q > 1e-3) b.worst_ratio_dev = std::max(b.worst_ratio_dev, std::abs(qn / (b.limit * q) - 1.0));
    }
    return b;
}

namespace {

// Index of the first sample with 𝓔 ≤ 1.
double entropy_below_one_time(const EntropyTrace& trace) {
    for (const auto& r : trace.rows)
        if (r.E_nl <= 1.0) return r.t;
    return std::numeric_limits<double>::infinity();
}

template <typename Numerator>
RatioSup delayed_ratio(const EntropyTrace& trace, double t_from, double exponent, Numerator num) {
    RatioSup out;
    const auto& rows = trace.rows;
    std::size_t j = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].t < t_from - 1e-12) continue;
        const double target = rows[i].t - 1.0;
        while (j + 1 < rows.size() && rows[j].t < target && !same_time(rows[j].t, target)) ++j;
        if (!same_time(rows[j].t, target)) continue;
        const double e = rows[j].E_nl;
        if (!(e > kEntropyFloor)) continue;
        const double n = num(rows[i]);
        if (std::isnan(n)) continue;
        const double ratio = n / std::pow(e, exponent);
        out.t.push_back(rows[i].t);
        out.ratio.push_back(ratio);
        ++out.samples;
        if (ratio > out.sup) {
            out.sup = ratio;
            out.t_at_sup = rows[i].t;
        }
    }
    if (out.samples == 0) throw Error(ErrorKind::InsufficientTrace, "no sample pairs (t, t-1) in the trace");
    return out;
}

} // namespace

RatioSup smoothing_check(const EntropyTrace& trace, int N, double exponent) {
    const double ex = exponent > 0.0 ? exponent : 1.0 / (4.0 * N);
    const double t0 = entropy_below_one_time(trace);
    if (!std::isfinite(t0)) throw Error(ErrorKind::InsufficientTrace, "entropy never drops below 1");
    return delayed_ratio(trace, t0 + 1.0, ex, [](const EntropyReport& r) { return r.h_inf; });
}

RatioSup quantitative_orthogonality(const EntropyTrace& trace, int N, double t_from, double exponent) {
    const double ex = exponent > 0.0 ? exponent : 1.0 / (8.0 * N);
    return delayed_ratio(trace, t_from, ex, [](const EntropyReport& r) {
        if (!r.quotients_defined || r.Q_nl.size() == 0) return kNaN;
        return r.Q_nl.maxCoeff();
    });
}

double orthogonality_time(const EntropyTrace& trace, double eps) {
    const auto& rows = trace.rows;
    long last_bad = -1;
    long last_defined = -1;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (!rows[i].quotients_defined) continue;
        last_defined = static_cast<long>(i);
        if (rows[i].Q_nl.size() > 0 && rows[i].Q_nl.maxCoeff() > eps) last_bad = static_cast<long>(i);
    }
    if (last_defined < 0 || last_bad == last_defined) return kNaN;
    return rows[static_cast<std::size_t>(last_bad + 1)].t;
}

MonotonicityResult time_monotonicity_check(const std::vector<double>& times, const std::vector<Vector>& h,
                                           const Exponents& exps, double gap) {
    require(times.size() == h.size(), ErrorKind::InvalidArgument, "time_monotonicity_check: size mismatch");
    const double cm = exps.c * exps.m;
    const double t_start = exps.T * std::log(2.0);
    MonotonicityResult out;
    for (std::size_t i = 0; i < times.size(); ++i) {
        if (times[i] < t_start) continue;
        if (i + 1 < times.size()) {
            const double dt = times[i + 1] - times[i];
            const Vector dh = (h[i + 1] - h[i]) / dt;
            const Vector bound = 2.0 * cm * (h[i].cwiseMax(h[i + 1]).array() + 1.0);
            out.worst_bc = std::max(out.worst_bc, (dh - bound).maxCoeff());
        }
        std::size_t j = i;
        Vector integral = Vector::Zero(h[i].size());
        while (j + 1 < times.size() && times[j + 1] <= times[i] + gap + 1e-9 * (1 + times[i])) {
            integral += 0.5 * (times[j + 1] - times[j]) * (h[j] + h[j + 1]);
            ++j;
        }
        if (j == i || !same_time(times[j], times[i] + gap)) continue;
        const double d = times[j] - times[i];
        const double a = 2.0 * cm * d;
        const Vector lower = (1.0 - std::exp(-a)) / (2.0 * cm) * h[j].array() - cm * d * d;
        const Vector upper = std::expm1(a) / (2.0 * cm) * h[i].array() + cm * d * d * std::exp(a);
        out.worst_lower = std::max(out.worst_lower, (lower - integral).maxCoeff());
        out.worst_upper = std::max(out.worst_upper, (integral - upper).maxCoeff());
        ++out.pairs;
    }
    if (out.pairs == 0) throw Error(ErrorKind::InsufficientTrace, "no checkpoint pairs after T log 2");
    return out;
}

MonotonicityResult time_monotonicity_check(const Trajectory& traj, const Vector& V, const Exponents& exps,
                                           double gap) {
    require(traj.kind == FlowKind::Rescaled, ErrorKind::InvalidArgument, "time monotonicity needs a rescaled run");
    std::vector<Vector> h;
    for (const auto& f : traj.fields) h.push_back((f.cwiseQuotient(V).array() - 1.0).matrix());
    return time_monotonicity_check(traj.field_times, h, exps, gap);
}

bool entropy_decreasing(const EntropyTrace& trace, double t_from, double floor) {
    const auto& rows = trace.rows;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i - 1].t < t_from || rows[i].E_nl <= floor) continue;
        if (!(rows[i].E_nl < rows[i - 1].E_nl)) return false;
    }
    return true;
}

QuotientGrowth quotient_derivative_check(const EntropyTrace& trace, double eps0, double delta_ratio) {
    QuotientGrowth out;
    out.kappa_low = std::numeric_limits<double>::infinity();
    const auto& rows = trace.rows;
    for (std::size_t i = 1; i + 1 < rows.size(); ++i) {
        const auto& r = rows[i];
        if (!r.quotients_defined || r.h_inf > delta_ratio * eps0) continue;
        for (Eigen::Index c = 0; c < r.Q_nl.size(); ++c) {
            if (!(r.Q_nl(c) >= eps0)) continue;
            const double d = (rows[i + 1].A_nl(c) - rows[i - 1].A_nl(c)) / (rows[i + 1].t - rows[i - 1].t);
            ++out.windows;
            if (d < 0.0) ++out.violations;
            out.kappa_low = std::min(out.kappa_low, d / (eps0 * r.A_nl(c)));
        }
    }
    if (out.windows == 0) out.kappa_low = 0.0;
    return out;
}

ComparisonConstants comparison_constants(const EntropyTrace& trace, double t_from) {
    ComparisonConstants out;
    const auto sw = sandwich_summary(trace);
    out.sandwich_lo = sw.lo;
    out.sandwich_hi = sw.hi;
    try {
        out.remainder_kappa = production_residual(trace, t_from).kappa_sup;
    } catch (const Error&) {
        out.remainder_kappa = kNaN;
    }
    try {
        out.smoothing_kappa = smoothing_check(trace, trace.dimension).sup;
    } catch (const Error&) {
        out.smoothing_kappa = kNaN;
    }
    return out;
}

} // namespace fde
