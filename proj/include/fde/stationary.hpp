#pragma once

#include <Eigen/Core>

#include <optional>
#include <utility>

#include "fde/grid.hpp"

namespace fde {

using Vector = Eigen::VectorXd;

// p = 1/m, c = p/((p-1)T).
struct Exponents {
    double p = 2.0;
    double m = 0.5;
    double c = 1.0;
    double T = 2.0;

    static Exponents from_p_c(double p, double c);
    static Exponents from_p_T(double p, double T);
    static Exponents from_m_c(double m, double c);
    static Exponents from_m_T(double m, double T);
};

// Checks p > 1, c > 0 and subcriticality p < (N+2)/(N-2) when N >= 3.
void validate(const Exponents& e, int dimension = 1);

struct StationaryOptions {
    int max_iters = 100;
    double tol = 1e-10; // residual target relative to ‖V‖∞
};

struct StationaryProfile {
    Vector V;
    Vector S;
    double p = 0;
    double c = 0;
    double residual_norm = 0;  // ‖Δ_h V + cV^p‖∞
    double roundoff_floor = 0; // residual attainable from rounding V alone
    int newton_iters = 0;
};

// ‖Δ_h V + cV^p‖∞.
double stationary_residual(const Grid<>& grid, const Vector& V, double p, double c);

// Estimate of the sup-norm residual produced by rounding V to working precision.
double residual_roundoff_floor(const Grid<>& grid, const Vector& V);

// Lowest Dirichlet eigenpair of -Δ_h, normalized so that max φ = 1.
std::pair<double, Vector> first_dirichlet_eigenpair(const Grid<>& grid);

// Damped Newton for -Δ_h V = cV^p. Without `init`, starts from the first
// Dirichlet eigenfunction scaled to satisfy the energy identity.
StationaryProfile solve_stationary(const Grid<>& grid, const Exponents& exps,
                                   const std::optional<Vector>& init = std::nullopt,
                                   const StationaryOptions& opts = {});

// ∫₀¹ dt/√(1 - t^{p+1}).
double half_length_integral(double p);

// Symmetric 1D profile from the first integral V'² = (2c/(p+1))(M^{p+1} - V^{p+1}).
double oracle_maximum(double p, double c, double length);
StationaryProfile oracle_profile_1d(const Exponents& exps, const Grid<>& grid);
StationaryProfile oracle_profile_1d(const Exponents& exps, int n, double length = 1.0);

// (c0, c1) = (min, max) of V_i / dist(x_i, ∂Ω).
std::pair<double, double> boundary_slope_bounds(const Grid<>& grid, const Vector& V);

} // namespace fde
