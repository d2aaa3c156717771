#pragma once

#include <Eigen/Core>

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fde/grid.hpp"
#include "fde/stationary.hpp"

namespace fde {

enum class FlowKind { Original, Rescaled, Linearized };

const char* to_string(FlowKind k);

struct FlowState {
    FlowKind kind = FlowKind::Rescaled;
    Vector field; // u, v or f
    double time = 0;
};

struct NewtonOptions {
    int max_iters = 30;
    double tol = 1e-13; // on ‖δ‖∞ / ‖iterate‖∞
};

// Implicit Euler for ∂_t v^p = Δv + cv^p. Newton acts on v; the discrete
// equation (1 - dt c)v^p - dt Δ_h v = v_old^p is the w = v^p step of the flow.
FlowState step_rescaled(const Grid<>& grid, const Exponents& exps, const FlowState& state, double dt,
                        int* newton_iters = nullptr, const NewtonOptions& opts = {});

// Implicit Euler for u_τ = Δu^m, solved for z = (u⁺)^m: z^p - dt Δ_h z = u.
FlowState step_original(const Grid<>& grid, const Exponents& exps, const FlowState& state, double dt,
                        int* newton_iters = nullptr, const NewtonOptions& opts = {});

// Implicit Euler for pV^{p-1} f_t = Δf + cpV^{p-1} f. Caches the factorization per dt.
class LinearizedStepper {
public:
    LinearizedStepper(const Grid<>& grid, const Vector& V, const Exponents& exps);
    FlowState step(const FlowState& state, double dt);

private:
    const Grid<>& grid_;
    Vector mass_; // w V^{p-1}
    Exponents exps_;
    Tridiagonal<double> stiff_;
    std::map<double, TridiagonalLU<double>> cache_;
};

FlowState step_linearized(const Grid<>& grid, const Vector& V, const Exponents& exps, const FlowState& state,
                          double dt);

struct DtPolicy {
    double dt = 1e-2;       // initial step
    double dt_max = 1e-2;
    double dt_min = 1e-8;
    double grow = 1.2;
    int easy_iters = 3;     // grow after steps needing at most this many Newton iterations
    bool adaptive = false;  // fixed dt unless failures force halving
};

// Called at every sample time; returning false stops the run.
using Sampler = std::function<bool(const FlowState&)>;

struct Trajectory {
    FlowKind kind = FlowKind::Rescaled;
    std::vector<double> sample_times;
    std::vector<Vector> fields; // sampled fields (initial state first when stored)
    std::vector<double> field_times;
    std::vector<int> newton_iters;
    std::vector<double> dt_history;
    int halvings = 0;
    bool stopped_early = false;
    std::string stop_reason;
    FlowState final_state;
};

struct EvolveOptions {
    double sample_interval = 0.1;
    bool store_fields = true;
    double extinction_fraction = 1e-6; // Original runs stop once ‖u‖∞ < fraction·‖u0‖∞
};

// Steps `initial` to `horizon`, landing exactly on the sample times k·Δt.
Trajectory evolve(const Grid<>& grid, const Exponents& exps, const FlowState& initial, double horizon,
                  const DtPolicy& policy, const EvolveOptions& eopts = {}, const Sampler& sampler = {},
                  const Vector* V = nullptr);

struct ExtinctionEstimate {
    double T = 0;
    double t_lo = 0, t_hi = 0;
    double fit_residual = 0; // max |y - fit| over the window
    int samples = 0;
};

// Linear fit of ‖u(τ)‖∞^{1-m} against τ over the last `window_fraction` of the
// sampled times; the root of the fit is T.
ExtinctionEstimate estimate_extinction_time(const Trajectory& traj, double m, double threshold = 1e-3,
                                            double window_fraction = 0.25);
ExtinctionEstimate estimate_extinction_time(const std::vector<double>& tau, const std::vector<double>& sup_u,
                                            double m, double threshold = 1e-3, double window_fraction = 0.25);

// Finds s > 0 so that the rescaled run from s·v0 neither escapes along V nor
// collapses: bisection on the sign of ∫(v^p - V^p)V at the horizon.
struct Calibration {
    double scale = 1.0;
    double a_final = 0;
    int runs = 0;
};

Calibration calibrate_rescaled(const Grid<>& grid, const Exponents& exps, const Vector& V, const Vector& v0,
                               double horizon, const DtPolicy& policy);

} // namespace fde
