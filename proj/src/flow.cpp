#include "fde/flow.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace fde {

const char* to_string(FlowKind k) {
    switch (k) {
    case FlowKind::Original: return "original";
    case FlowKind::Rescaled: return "rescaled";
    case FlowKind::Linearized: return "linearized";
    }
    return "unknown";
}

namespace {

// Damped Newton for w·(a z^p - rhs) + b K z = 0 with z > 0 (or z ≥ 0 when
// `allow_zero`). Returns the iteration count; throws StepFailure.
int solve_power_system(const Grid<>& grid, const Tridiagonal<double>& K, double a, double b, double p,
                       const Vector& rhs, Vector& z, bool allow_zero, const NewtonOptions& opts) {
    const Vector& w = grid.quad_weights;
    auto residual = [&](const Vector& x) -> Vector {
        return w.cwiseProduct((a * x.array().pow(p) - rhs.array()).matrix()) + b * apply_stiffness(grid, x);
    };
    Vector F = residual(z);
    double fn = F.lpNorm<Eigen::Infinity>();
    for (int it = 1; it <= opts.max_iters; ++it) {
        Tridiagonal<double> J = K;
        J.upper *= b;
        J.lower *= b;
        J.diag = b * K.diag + a * p * w.cwiseProduct(z.cwiseMax(0.0).array().pow(p - 1.0).matrix());
        Vector delta;
        try {
            delta = TridiagonalLU<double>(J).solve(-F);
        } catch (const Error&) {
            throw Error(ErrorKind::StepFailure, "singular Newton Jacobian");
        }
        if (!delta.allFinite()) throw Error(ErrorKind::StepFailure, "non-finite Newton update");
        double t = 1.0;
        bool accepted = false;
        for (int k = 0; k < 40; ++k, t *= 0.5) {
            Vector trial = z + t * delta;
            if (allow_zero) {
                if (trial.minCoeff() < 0.0) {
                    if (trial.minCoeff() > -1e-300) trial = trial.cwiseMax(0.0);
                    else continue;
                }
            } else if (trial.minCoeff() <= 0.0) {
                continue;
            }
            Vector Ft = residual(trial);
            const double ft = Ft.lpNorm<Eigen::Infinity>();
            if (t == 1.0 || ft < fn) {
                z = std::move(trial);
                F = std::move(Ft);
                fn = ft;
                accepted = true;
                break;
            }
        }
        if (!accepted) throw Error(ErrorKind::StepFailure, "Newton damping could not keep the iterate positive");
        const double scale = std::max(z.lpNorm<Eigen::Infinity>(), std::numeric_limits<double>::min());
        if (t * delta.lpNorm<Eigen::Infinity>() <= opts.tol * scale) return it;
    }
    throw Error(ErrorKind::StepFailure, "Newton did not converge within the step");
}

} // namespace

FlowState step_rescaled(const Grid<>& grid, const Exponents& exps, const FlowState& state, double dt,
                        int* newton_iters, const NewtonOptions& opts) {
    require(state.kind == FlowKind::Rescaled, ErrorKind::InvalidArgument, "step_rescaled needs a rescaled state");
    require(state.field.size() == grid.size(), ErrorKind::InvalidArgument, "step_rescaled: length mismatch");
    require(dt > 0.0, ErrorKind::InvalidArgument, "dt must be positive");
    if (!(state.field.minCoeff() > 0.0)) throw Error(ErrorKind::PositivityLoss, "rescaled iterate must stay positive");
    const double a = 1.0 - dt * exps.c;
    if (!(a > 0.0)) throw Error(ErrorKind::StepFailure, "dt·c must stay below 1");
    const Vector rhs = state.field.array().pow(exps.p);
    Vector z = state.field;
    const int it = solve_power_system(grid, stiffness(grid), a, dt, exps.p, rhs, z, false, opts);
    if (newton_iters) *newton_iters = it;
    if (!(z.minCoeff() > 0.0)) throw Error(ErrorKind::PositivityLoss, "rescaled step lost positivity");
    return {FlowKind::Rescaled, std::move(z), state.time + dt};
}

FlowState step_original(const Grid<>& grid, const Exponents& exps, const FlowState& state, double dt,
                        int* newton_iters, const NewtonOptions& opts) {
    require(state.kind == FlowKind::Original, ErrorKind::InvalidArgument, "step_original needs an original state");
    require(state.field.size() == grid.size(), ErrorKind::InvalidArgument, "step_original: length mismatch");
    require(dt > 0.0, ErrorKind::InvalidArgument, "dt must be positive");
    require(state.field.minCoeff() >= 0.0, ErrorKind::PositivityLoss, "u must be nonnegative");
    if (state.field.maxCoeff() == 0.0) {
        if (newton_iters) *newton_iters = 0;
        return {FlowKind::Original, state.field, state.time + dt};
    }
    Vector z = state.field.array().pow(exps.m);
    const int it = solve_power_system(grid, stiffness(grid), 1.0, dt, exps.p, state.field, z, true, opts);
    if (newton_iters) *newton_iters = it;
    return {FlowKind::Original, z.array().pow(exps.p).matrix(), state.time + dt};
}

LinearizedStepper::LinearizedStepper(const Grid<>& grid, const Vector& V, const Exponents& exps)
    : grid_(grid), exps_(exps), stiff_(stiffness(grid)) {
    require(V.size() == grid.size(), ErrorKind::InvalidArgument, "linearized flow: V length mismatch");
    require(V.minCoeff() > 0.0, ErrorKind::InvalidArgument, "linearized flow needs V > 0");
    mass_ = grid.quad_weights.cwiseProduct(V.array().pow(exps.p - 1.0).matrix());
}

FlowState LinearizedStepper::step(const FlowState& state, double dt) {
    require(state.kind == FlowKind::Linearized, ErrorKind::InvalidArgument, "linearized stepper needs f");
    require(state.field.size() == grid_.size(), ErrorKind::InvalidArgument, "linearized step: length mismatch");
    require(dt > 0.0, ErrorKind::InvalidArgument, "dt must be positive");
    // p + dt(λ - cp) > 0 for every λ ≥ λ_1 = c iff dt < p/(c(p-1)).
    if (!(dt < exps_.p / (exps_.c * (exps_.p - 1.0))))
        throw Error(ErrorKind::StepFailure, "dt collides with the spectral pole of the linearized step");
    auto found = cache_.find(dt);
    if (found == cache_.end()) {
        Tridiagonal<double> A = stiff_;
        A.upper *= dt;
        A.lower *= dt;
        A.diag = dt * stiff_.diag + (exps_.p - dt * exps_.c * exps_.p) * mass_;
        found = cache_.emplace(dt, TridiagonalLU<double>(A)).first;
    }
    Vector next = found->second.solve(exps_.p * mass_.cwiseProduct(state.field));
    return {FlowKind::Linearized, std::move(next), state.time + dt};
}

FlowState step_linearized(const Grid<>& grid, const Vector& V, const Exponents& exps, const FlowState& state,
                          double dt) {
    LinearizedStepper s(grid, V, exps);
    return s.step(state, dt);
}

Trajectory evolve(const Grid<>& grid, const Exponents& exps, const FlowState& initial, double horizon,
                  const DtPolicy& policy, const EvolveOptions& eopts, const Sampler& sampler, const Vector* V) {
    require(horizon > initial.time, ErrorKind::InvalidArgument, "horizon must exceed the initial time");
    require(eopts.sample_interval > 0.0, ErrorKind::InvalidArgument, "sample interval must be positive");
    require(policy.dt > 0.0 && policy.dt_min > 0.0 && policy.dt_max >= policy.dt_min, ErrorKind::InvalidArgument,
            "invalid dt policy");
    require(initial.field.size() == grid.size(), ErrorKind::InvalidArgument, "initial field: length mismatch");
    std::optional<LinearizedStepper> lin;
    if (initial.kind == FlowKind::Linearized) {
        require(V != nullptr, ErrorKind::InvalidArgument, "linearized evolution needs V");
        lin.emplace(grid, *V, exps);
    }

    Trajectory tr;
    tr.kind = initial.kind;
    FlowState state = initial;
    const double u0max = initial.field.lpNorm<Eigen::Infinity>();
    if (eopts.store_fields) {
        tr.fields.push_back(state.field);
        tr.field_times.push_back(state.time);
    }
    if (sampler && !sampler(state)) {
        tr.stopped_early = true;
        tr.stop_reason = "sampler";
        tr.final_state = state;
        return tr;
    }

    const double t0 = initial.time;
    long k = 1;
    double dt = std::min(policy.dt, policy.dt_max);
    const double eps_t = 1e-12 * std::max(1.0, horizon);
    while (state.time < horizon - eps_t) {
        const double target = std::min(t0 + double(k) * eopts.sample_interval, horizon);
        double step = std::min(dt, target - state.time);
        const bool lands = step >= target - state.time - eps_t;
        FlowState next;
        int iters = 0;
        try {
            switch (state.kind) {
            case FlowKind::Rescaled: next = step_rescaled(grid, exps, state, step, &iters); break;
            case FlowKind::Original: next = step_original(grid, exps, state, step, &iters); break;
            case FlowKind::Linearized: next = lin->step(state, step); break;
            }
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::StepFailure && e.kind() != ErrorKind::PositivityLoss) throw;
            dt = 0.5 * step;
            ++tr.halvings;
            if (dt < policy.dt_min)
                throw Error(ErrorKind::StepFailure, "dt fell below dt_min at t = " + std::to_string(state.time) +
                                                        " (" + e.what() + ")");
            continue;
        }
        if (lands) next.time = target;
        state = std::move(next);
        tr.newton_iters.push_back(iters);
        tr.dt_history.push_back(step);
        if (policy.adaptive) {
            if (iters <= policy.easy_iters) dt = std::min(dt * policy.grow, policy.dt_max);
        } else {
            dt = std::min(policy.dt, policy.dt_max);
        }
        if (lands) {
            tr.sample_times.push_back(state.time);
            if (eopts.store_fields) {
                tr.fields.push_back(state.field);
                tr.field_times.push_back(state.time);
            }
            ++k;
            if (sampler && !sampler(state)) {
                tr.stopped_early = true;
                tr.stop_reason = "sampler";
                break;
            }
        }
        if (state.kind == FlowKind::Original &&
            state.field.lpNorm<Eigen::Infinity>() < eopts.extinction_fraction * u0max) {
            tr.stopped_early = true;
            tr.stop_reason = "near extinction";
            break;
        }
    }
    tr.final_state = state;
    return tr;
}

ExtinctionEstimate estimate_extinction_time(const std::vector<double>& tau, const std::vector<double>& sup_u,
                                            double m, double threshold, double window_fraction) {
    require(tau.size() == sup_u.size() && !tau.empty(), ErrorKind::InsufficientDecay, "empty extinction trace");
    require(m > 0.0 && m < 1.0, ErrorKind::InvalidArgument, "m must lie in (0,1)");
    const double u0 = sup_u.front();
    const double umin = *std::min_element(sup_u.begin(), sup_u.end());
    if (!(umin < threshold * u0))
        throw Error(ErrorKind::InsufficientDecay, "‖u‖∞ never dropped below the threshold");
    const double t_end = tau.back();
    const double t_start = t_end - window_fraction * (t_end - tau.front());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int count = 0;
    std::vector<std::pair<double, double>> pts;
    for (std::size_t i = 0; i < tau.size(); ++i) {
        if (tau[i] < t_start || sup_u[i] <= 0.0) continue;
        const double y = std::pow(sup_u[i] / u0, 1.0 - m);
        pts.emplace_back(tau[i], y);
    }
    require(pts.size() >= 3, ErrorKind::InsufficientDecay, "too few samples in the extinction window");
    const double xm = pts.front().first;
    for (auto [x, y] : pts) {
        sx += x - xm;
        sy += y;
        sxx += (x - xm) * (x - xm);
        sxy += (x - xm) * y;
        ++count;
    }
    const double slope = (count * sxy - sx * sy) / (count * sxx - sx * sx);
    const double icpt = (sy - slope * sx) / count;
    require(slope < 0.0, ErrorKind::InsufficientDecay, "‖u‖∞^{1-m} is not decreasing");
    ExtinctionEstimate out;
    out.T = xm - icpt / slope;
    out.t_lo = pts.front().first;
    out.t_hi = pts.back().first;
    out.samples = count;
    for (auto [x, y] : pts) out.fit_residual = std::max(out.fit_residual, std::abs(y - (icpt + slope * (x - xm))));
    return out;
}

ExtinctionEstimate estimate_extinction_time(const Trajectory& traj, double m, double threshold,
                                            double window_fraction) {
    require(traj.kind == FlowKind::Original, ErrorKind::InvalidArgument, "extinction needs an original-flow run");
    require(!traj.fields.empty(), ErrorKind::InsufficientDecay, "trajectory stores no fields");
    std::vector<double> tau = traj.field_times, sup;
    for (const auto& f : traj.fields) sup.push_back(f.lpNorm<Eigen::Infinity>());
    if (traj.field_times.back() < traj.final_state.time) {
        tau.push_back(traj.final_state.time);
        sup.push_back(traj.final_state.field.lpNorm<Eigen::Infinity>());
    }
    return estimate_extinction_time(tau, sup, m, threshold, window_fraction);
}

Calibration calibrate_rescaled(const Grid<>& grid, const Exponents& exps, const Vector& V, const Vector& v0,
                               double horizon, const DtPolicy& policy) {
    require(V.size() == grid.size() && v0.size() == grid.size(), ErrorKind::InvalidArgument,
            "calibration: length mismatch");
    const Vector Vp = V.array().pow(exps.p);
    const double scale_a = integrate(grid, Vp.cwiseProduct(V));
    Calibration cal;
    // Returns ∫(v^p - V^p)V at the horizon, or a saturated signed value on escape.
    auto outcome = [&](double s) -> double {
        ++cal.runs;
        double a = 0;
        Sampler watch = [&](const FlowState& st) {
            a = integrate(grid, (st.field.array().pow(exps.p) - Vp.array()).matrix().cwiseProduct(V));
            return std::abs(a) <= scale_a;
        };
        EvolveOptions eo;
        eo.store_fields = false;
        eo.sample_interval = std::max(policy.dt, 0.05);
        try {
            evolve(grid, exps, {FlowKind::Rescaled, s * v0, 0.0}, horizon, policy, eo, watch);
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::StepFailure || e.kind() == ErrorKind::PositivityLoss) return -scale_a;
            throw;
        }
        return a;
    };
    double lo = 1.0, hi = 1.0;
    double alo = outcome(lo), ahi = alo;
    if (alo == 0.0) {
        cal.scale = 1.0;
        return cal;
    }
    for (int i = 0; i < 60 && alo > 0.0; ++i) {
        hi = lo;
        ahi = alo;
        lo /= 1.25;
        alo = outcome(lo);
    }
    for (int i = 0; i < 60 && ahi < 0.0; ++i) {
        lo = hi;
        alo = ahi;
        hi *= 1.25;
        ahi = outcome(hi);
    }
    if (!(alo <= 0.0 && ahi >= 0.0)) throw Error(ErrorKind::RootBracketFailure, "cannot bracket the calibration scale");
    while (hi - lo > 4.0 * std::numeric_limits<double>::epsilon() * hi) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        const double am = outcome(mid);
        if (am > 0.0) {
            hi = mid;
            ahi = am;
        } else {
            lo = mid;
            alo = am;
        }
    }
    cal.scale = std::abs(alo) <= std::abs(ahi) ? lo : hi;
    cal.a_final = std::abs(alo) <= std::abs(ahi) ? alo : ahi;
    return cal;
}

} // namespace fde
