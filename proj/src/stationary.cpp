#include "fde/stationary.hpp"

#include <cmath>
#include <limits>

#include "fde/quadrature.hpp"

namespace fde {

Exponents Exponents::from_p_c(double p, double c) {
    require(p > 1.0 && std::isfinite(p), ErrorKind::InvalidArgument, "p must exceed 1");
    require(c > 0.0 && std::isfinite(c), ErrorKind::InvalidArgument, "c must be positive");
    return {p, 1.0 / p, c, p / ((p - 1.0) * c)};
}

Exponents Exponents::from_p_T(double p, double T) {
    require(p > 1.0 && std::isfinite(p), ErrorKind::InvalidArgument, "p must exceed 1");
    require(T > 0.0 && std::isfinite(T), ErrorKind::InvalidArgument, "T must be positive");
    return {p, 1.0 / p, p / ((p - 1.0) * T), T};
}

Exponents Exponents::from_m_c(double m, double c) {
    require(m > 0.0 && m < 1.0, ErrorKind::InvalidArgument, "m must lie in (0,1)");
    return from_p_c(1.0 / m, c);
}

Exponents Exponents::from_m_T(double m, double T) {
    require(m > 0.0 && m < 1.0, ErrorKind::InvalidArgument, "m must lie in (0,1)");
    return from_p_T(1.0 / m, T);
}

void validate(const Exponents& e, int dimension) {
    require(e.p > 1.0, ErrorKind::InvalidArgument, "p must exceed 1");
    require(e.c > 0.0, ErrorKind::InvalidArgument, "c must be positive");
    require(std::abs(e.p * e.m - 1.0) <= 1e-14, ErrorKind::InvalidArgument, "p*m must equal 1");
    require(std::abs(e.c * (e.p - 1.0) * e.T - e.p) <= 1e-12 * e.p, ErrorKind::InvalidArgument,
            "c(p-1)T must equal p");
    if (dimension >= 3)
        require(e.p < (dimension + 2.0) / (dimension - 2.0), ErrorKind::InvalidArgument,
                "p must be below the Sobolev exponent (N+2)/(N-2)");
}

double stationary_residual(const Grid<>& grid, const Vector& V, double p, double c) {
    return (apply_laplacian(grid, V).array() + c * V.array().pow(p)).abs().maxCoeff();
}

double residual_roundoff_floor(const Grid<>& grid, const Vector& V) {
    const Eigen::Index n = grid.size();
    Vector scale(n);
    for (Eigen::Index i = 0; i < n; ++i) scale(i) = (grid.faces(i) + grid.faces(i + 1)) / grid.quad_weights(i);
    return 4.0 * std::numeric_limits<double>::epsilon() * (scale.array() * V.array().abs()).maxCoeff();
}

std::pair<double, Vector> first_dirichlet_eigenpair(const Grid<>& grid) {
    TridiagonalLU<double> lu(stiffness(grid));
    Vector phi = grid.boundary_distance;
    double lambda = 0;
    for (int it = 0; it < 200; ++it) {
        Vector next = lu.solve(grid.quad_weights.cwiseProduct(phi));
        next /= next.maxCoeff();
        const double change = (next - phi).lpNorm<Eigen::Infinity>();
        phi = next;
        if (change < 1e-15) break;
    }
    lambda = gradient_energy(grid, phi) / integrate(grid, phi.cwiseAbs2());
    return {lambda, phi};
}

namespace {

// Weighted residual G = -K V + c W V^p  (= W·(Δ_h V + cV^p)).
Vector weighted_residual(const Grid<>& grid, const Vector& V, double p, double c) {
    return -apply_stiffness(grid, V) + c * grid.quad_weights.cwiseProduct(V.array().pow(p).matrix());
}

double sup_residual(const Grid<>& grid, const Vector& G) {
    return (G.array() / grid.quad_weights.array()).abs().maxCoeff();
}

} // namespace

StationaryProfile solve_stationary(const Grid<>& grid, const Exponents& exps, const std::optional<Vector>& init,
                                   const StationaryOptions& opts) {
    validate(exps, grid.dimension());
    const double p = exps.p, c = exps.c;
    Vector V;
    if (init) {
        require(init->size() == grid.size(), ErrorKind::InvalidArgument, "initial guess: length mismatch");
        require(init->minCoeff() > 0.0, ErrorKind::InvalidArgument, "initial guess must be positive");
        V = *init;
    } else {
        auto [lambda1, phi] = first_dirichlet_eigenpair(grid);
        const double num = lambda1 * integrate(grid, phi.cwiseAbs2());
        const double den = c * integrate(grid, phi.array().pow(p + 1.0).matrix());
        V = std::pow(num / den, 1.0 / (p - 1.0)) * phi;
    }

    const Tridiagonal<double> K = stiffness(grid);
    const double eps = std::numeric_limits<double>::epsilon();
    Vector G = weighted_residual(grid, V, p, c);
    double res = sup_residual(grid, G);
    StationaryProfile out;
    out.p = p;
    out.c = c;
    int it = 0;
    bool converged = false;
    for (; it < opts.max_iters; ++it) {
        const double vmax = V.lpNorm<Eigen::Infinity>();
        const double floor = residual_roundoff_floor(grid, V);
        if (res <= opts.tol * vmax) {
            converged = true;
            break;
        }
        Tridiagonal<double> J = K;
        J.diag -= c * p * grid.quad_weights.cwiseProduct(V.array().pow(p - 1.0).matrix());
        const Vector delta = TridiagonalLU<double>(J).solve(G);
        if (delta.lpNorm<Eigen::Infinity>() <= 8.0 * eps * vmax) {
            converged = res <= std::max(opts.tol * vmax, 4.0 * floor);
            break;
        }
        double t = 1.0;
        bool accepted = false, positive_seen = false;
        for (int k = 0; k < 60; ++k, t *= 0.5) {
            Vector trial = V + t * delta;
            if (trial.minCoeff() <= 0.0) continue;
            positive_seen = true;
            Vector Gt = weighted_residual(grid, trial, p, c);
            const double rt = sup_residual(grid, Gt);
            if (rt < res || rt <= 4.0 * floor) {
                V = std::move(trial);
                G = std::move(Gt);
                res = rt;
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            if (!positive_seen) throw Error(ErrorKind::NegativeIterate, "Newton step leaves the positive cone");
            converged = res <= std::max(opts.tol * vmax, 4.0 * floor);
            break;
        }
    }
    if (!converged) {
        const double vmax = V.lpNorm<Eigen::Infinity>();
        converged = res <= std::max(opts.tol * vmax, 4.0 * residual_roundoff_floor(grid, V));
    }
    if (!converged)
        throw Error(ErrorKind::NonConvergence,
                    "stationary Newton did not converge in " + std::to_string(opts.max_iters) + " iterations");
    out.V = V;
    out.S = V.array().pow(p);
    out.residual_norm = res;
    out.roundoff_floor = residual_roundoff_floor(grid, V);
    out.newton_iters = it;
    return out;
}

double half_length_integral(double p) {
    // t = 1 - s² removes the endpoint singularity.
    const double q = p + 1.0;
    auto g = [q](double s) {
        if (s == 0.0) return 2.0 / std::sqrt(q);
        return 2.0 * s / std::sqrt(-std::expm1(q * std::log1p(-s * s)));
    };
    return GaussKronrod<double>(1e-16, 1e-15)(g, 0.0, 1.0);
}

double oracle_maximum(double p, double c, double length) {
    const double ip = half_length_integral(p);
    const double base = 2.0 * ip * std::sqrt((p + 1.0) / (2.0 * c)) / length;
    require(base > 0.0 && std::isfinite(base), ErrorKind::RootBracketFailure, "cannot bracket the profile maximum");
    return std::pow(base, 2.0 / (p - 1.0));
}

namespace {

// Solves G(y) = ∫₀^y dt/√(1-t^q) = target for y ∈ (0, 1).
double invert_profile_integral(double q, double ip, double target) {
    const GaussKronrod<double> quad(1e-17, 1e-15);
    auto f = [q](double t) { return 1.0 / std::sqrt(-std::expm1(q * std::log(t))); };
    auto g = [q](double s) {
        if (s == 0.0) return 2.0 / std::sqrt(q);
        return 2.0 * s / std::sqrt(-std::expm1(q * std::log1p(-s * s)));
    };
    auto G = [&](double y) {
        if (y <= 0.5) return quad([&](double t) { return t == 0.0 ? 1.0 : f(t); }, 0.0, y);
        return ip - quad(g, 0.0, std::sqrt(1.0 - y));
    };
    if (target <= 0.0) return 0.0;
    if (target >= ip) return 1.0;
    double lo = 0.0, hi = 1.0;
    double y = std::min(target, 0.5);
    for (int it = 0; it < 200; ++it) {
        const double r = G(y) - target;
        if (r > 0) hi = y;
        else lo = y;
        if (std::abs(r) <= 1e-16 * ip) break;
        const double dG = y < 1.0 ? f(std::max(y, 1e-300)) : std::numeric_limits<double>::infinity();
        double next = y - r / dG;
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (std::abs(next - y) <= 1e-17 * std::max(1.0, y)) {
            y = next;
            break;
        }
        y = next;
        if (hi - lo <= 4 * std::numeric_limits<double>::epsilon() * hi) break;
    }
    return y;
}

} // namespace

StationaryProfile oracle_profile_1d(const Exponents& exps, const Grid<>& grid) {
    require(grid.spec.geometry == Geometry::Interval, ErrorKind::InvalidArgument,
            "the first-integral oracle needs an interval");
    const double p = exps.p, c = exps.c, L = grid.spec.extent;
    const double q = p + 1.0;
    const double ip = half_length_integral(p);
    const double M = oracle_maximum(p, c, L);
    StationaryProfile out;
    out.p = p;
    out.c = c;
    out.V.resize(grid.size());
    for (Eigen::Index i = 0; i < grid.size(); ++i) {
        const double xx = grid.boundary_distance(i);
        out.V(i) = M * invert_profile_integral(q, ip, 2.0 * xx / L * ip);
    }
    out.S = out.V.array().pow(p);
    out.residual_norm = stationary_residual(grid, out.V, p, c);
    out.roundoff_floor = residual_roundoff_floor(grid, out.V);
    return out;
}

StationaryProfile oracle_profile_1d(const Exponents& exps, int n, double length) {
    return oracle_profile_1d(exps, build_domain(DomainSpec::interval(length, n)));
}

std::pair<double, double> boundary_slope_bounds(const Grid<>& grid, const Vector& V) {
    require(V.size() == grid.size(), ErrorKind::InvalidArgument, "boundary_slope_bounds: length mismatch");
    require(V.minCoeff() > 0.0, ErrorKind::InvalidArgument, "boundary_slope_bounds needs positive V");
    const Vector ratio = V.cwiseQuotient(grid.boundary_distance);
    return {ratio.minCoeff(), ratio.maxCoeff()};
}

} // namespace fde
