#pragma once

#include <Eigen/Core>

#include <cmath>
#include <numbers>
#include <string>

#include "fde/error.hpp"
#include "fde/tridiagonal.hpp"

namespace fde {

enum class Geometry { Interval, RadialBall };

struct DomainSpec {
    Geometry geometry = Geometry::Interval;
    double extent = 1.0; // L for the interval, R for the ball
    int dimension = 1;   // N; always 1 for the interval
    int nodes = 64;

    static DomainSpec interval(double length, int n) { return {Geometry::Interval, length, 1, n}; }
    static DomainSpec ball(int dim, double radius, int n) { return {Geometry::RadialBall, radius, dim, n}; }
};

inline void validate(const DomainSpec& s) {
    require(s.nodes >= 8, ErrorKind::InvalidArgument, "domain needs n >= 8 interior nodes");
    require(s.extent > 0.0 && std::isfinite(s.extent), ErrorKind::InvalidArgument,
            "domain length/radius must be positive");
    require(s.dimension >= 1, ErrorKind::InvalidArgument, "ball dimension must be >= 1");
    require(s.geometry == Geometry::RadialBall || s.dimension == 1, ErrorKind::InvalidArgument,
            "interval has dimension 1");
}

inline double sphere_area(int dim) {
    return 2.0 * std::pow(std::numbers::pi, 0.5 * dim) / std::tgamma(0.5 * dim);
}

// Finite-volume form of the Dirichlet Laplacian: with face coefficients a_i and
// cell weights w_i, (Δ_h u)_i = (a_i(u_{i+1}-u_i) - a_{i-1}(u_i-u_{i-1})) / w_i.
// Boundary values are zero; on the ball face 0 sits at r = 0 and carries no flux.
template <typename Scalar = double>
struct Grid {
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

    DomainSpec spec;
    Scalar h{};
    Vector coords;
    Vector quad_weights;
    Vector boundary_distance;
    Vector faces; // n+1 coefficients a_0..a_n

    Eigen::Index size() const { return coords.size(); }
    int dimension() const { return spec.geometry == Geometry::Interval ? 1 : spec.dimension; }
};

// Interval: x_i = i h, h = L/(n+1).
// Ball: cell-centred r_i = (i - 1/2) h, h = R/(n + 1/2), so the symmetric
// extension of an N = 1 ball is exactly the interval (-R, R) with 2n nodes.
template <typename Scalar = double>
Grid<Scalar> build_domain(const DomainSpec& spec) {
    validate(spec);
    Grid<Scalar> g;
    g.spec = spec;
    const Eigen::Index n = spec.nodes;
    const Scalar ext = static_cast<Scalar>(spec.extent);
    g.coords.resize(n);
    g.quad_weights.resize(n);
    g.boundary_distance.resize(n);
    g.faces.resize(n + 1);

    if (spec.geometry == Geometry::Interval) {
        g.h = ext / Scalar(n + 1);
        for (Eigen::Index i = 0; i < n; ++i) {
            const Scalar x = Scalar(i + 1) * g.h;
            g.coords(i) = x;
            g.quad_weights(i) = g.h;
            g.boundary_distance(i) = std::min(x, ext - x);
        }
        g.faces.setConstant(Scalar(1) / g.h);
    } else {
        const int N = spec.dimension;
        const Scalar area = static_cast<Scalar>(sphere_area(N));
        g.h = ext / (Scalar(n) + Scalar(0.5));
        for (Eigen::Index i = 0; i < n; ++i) {
            const Scalar r = (Scalar(i) + Scalar(0.5)) * g.h;
            const Scalar lo = Scalar(i) * g.h;
            const Scalar hi = Scalar(i + 1) * g.h;
            g.coords(i) = r;
            g.quad_weights(i) = area * (std::pow(hi, N) - std::pow(lo, N)) / Scalar(N);
            g.boundary_distance(i) = ext - r;
        }
        for (Eigen::Index i = 0; i <= n; ++i)
            g.faces(i) = area * std::pow(Scalar(i) * g.h, N - 1) / g.h;
        g.faces(0) = Scalar(0); // symmetry: no flux through the centre
    }
    return g;
}

namespace detail {
template <typename Scalar, typename Derived>
void check_length(const Grid<Scalar>& g, const Eigen::MatrixBase<Derived>& f, const char* what) {
    require(f.size() == g.size(), ErrorKind::InvalidArgument, std::string(what) + ": length mismatch");
}
} // namespace detail

// Stiffness matrix K with u^T K u = ∫|∇u|² and Δ_h = -diag(w)^{-1} K.
template <typename Scalar>
Tridiagonal<Scalar> stiffness(const Grid<Scalar>& g) {
    const Eigen::Index n = g.size();
    Tridiagonal<Scalar> k(n);
    for (Eigen::Index i = 0; i < n; ++i) k.diag(i) = g.faces(i) + g.faces(i + 1);
    for (Eigen::Index i = 0; i + 1 < n; ++i) {
        k.upper(i) = -g.faces(i + 1);
        k.lower(i) = -g.faces(i + 1);
    }
    return k;
}

// K u computed as a difference of fluxes.
template <typename Scalar, typename Derived>
typename Grid<Scalar>::Vector apply_stiffness(const Grid<Scalar>& g, const Eigen::MatrixBase<Derived>& u) {
    detail::check_length(g, u, "apply_stiffness");
    const Eigen::Index n = g.size();
    typename Grid<Scalar>::Vector flux(n + 1);
    flux(0) = g.faces(0) * Scalar(u(0));
    for (Eigen::Index i = 1; i < n; ++i) flux(i) = g.faces(i) * (Scalar(u(i)) - Scalar(u(i - 1)));
    flux(n) = -g.faces(n) * Scalar(u(n - 1));
    return flux.head(n) - flux.tail(n);
}

template <typename Scalar, typename Derived>
typename Grid<Scalar>::Vector apply_laplacian(const Grid<Scalar>& g, const Eigen::MatrixBase<Derived>& u) {
    detail::check_length(g, u, "apply_laplacian");
    return -(apply_stiffness(g, u).array() / g.quad_weights.array()).matrix();
}

// Solves -Δ_h g = rhs.
template <typename Scalar, typename Derived>
typename Grid<Scalar>::Vector solve_poisson(const Grid<Scalar>& g, const Eigen::MatrixBase<Derived>& rhs) {
    detail::check_length(g, rhs, "solve_poisson");
    TridiagonalLU<Scalar> lu(stiffness(g));
    return lu.solve(g.quad_weights.cwiseProduct(rhs));
}

template <typename Scalar, typename Derived>
Scalar integrate(const Grid<Scalar>& g, const Eigen::MatrixBase<Derived>& f) {
    detail::check_length(g, f, "integrate");
    return g.quad_weights.dot(f);
}

template <typename Scalar, typename DF, typename DG, typename DW>
Scalar inner_product_weighted(const Grid<Scalar>& g, const Eigen::MatrixBase<DF>& f,
                              const Eigen::MatrixBase<DG>& h, const Eigen::MatrixBase<DW>& w) {
    detail::check_length(g, f, "inner_product_weighted");
    detail::check_length(g, h, "inner_product_weighted");
    detail::check_length(g, w, "inner_product_weighted");
    return (g.quad_weights.array() * f.array() * h.array() * w.array()).sum();
}

// Discrete ∫|∇u|² = Σ a_i (u_{i+1} - u_i)².
template <typename Scalar, typename Derived>
Scalar gradient_energy(const Grid<Scalar>& g, const Eigen::MatrixBase<Derived>& u) {
    detail::check_length(g, u, "gradient_energy");
    const Eigen::Index n = g.size();
    Scalar s = g.faces(0) * Scalar(u(0)) * Scalar(u(0));
    for (Eigen::Index i = 1; i < n; ++i) {
        const Scalar d = Scalar(u(i)) - Scalar(u(i - 1));
        s += g.faces(i) * d * d;
    }
    s += g.faces(n) * Scalar(u(n - 1)) * Scalar(u(n - 1));
    return s;
}

// Bilinear form ∫∇u·∇v.
template <typename Scalar, typename DU, typename DV>
Scalar gradient_product(const Grid<Scalar>& g, const Eigen::MatrixBase<DU>& u, const Eigen::MatrixBase<DV>& v) {
    return apply_stiffness(g, u).dot(v);
}

} // namespace fde
