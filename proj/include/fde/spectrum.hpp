#pragma once

#include <Eigen/Core>

#include <optional>
#include <vector>

#include "fde/grid.hpp"

namespace fde {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Eigenpairs of -Δ_h φ = λ V^{p-1} φ. Columns of `functions` are ordered by
// eigenvalue; distinct value k (1-based) owns columns
// offsets[k-1] .. offsets[k-1] + multiplicities[k-1] - 1.
struct EigenSystem {
    Vector eigenvalues;             // distinct λ_{V,k}, ascending
    Vector inverse_eigenvalues;     // μ_{V,k} = 1/λ_{V,k}
    std::vector<int> multiplicities;
    std::vector<int> offsets;
    Matrix functions;               // φ_{k,j}, normalized in L²_V
    Vector residuals;               // per column
    Vector weight;                  // V^{p-1}

    int distinct() const { return static_cast<int>(eigenvalues.size()); }
    int columns_through(int k) const; // number of columns with index ≤ k
    int column(int k, int j) const;   // 1-based (k, j)
    Eigen::Ref<const Vector> phi(int k, int j) const { return functions.col(column(k, j)); }
};

struct EigenOptions {
    double tol = 1e-8;           // residual ‖Kφ - λMφ‖_{M^{-1}} / λ
    double cluster_tol = 1e-6;   // relative gap merging eigenvalues into one k
    int max_iters = 500;
};

// Lowest K eigenpairs (columns) by block inverse iteration with σ = 0,
// L²_V-orthonormalization and Rayleigh–Ritz on the projected pencil.
EigenSystem weighted_eigensystem(const Grid<>& grid, const Vector& V, double p, int K,
                                 const EigenOptions& opts = {});

// Same with an explicit weight W (the generalized problem Kφ = λ diag(w·W) φ).
EigenSystem weighted_eigensystem_w(const Grid<>& grid, const Vector& weight, int K, const EigenOptions& opts = {});

struct GapReport {
    int k_p = 0;
    std::optional<double> lambda_p; // λ_{V,k_p+1} - cp, absent when (H2) fails
    double gamma_p = 0;
    bool h2_ok = false;
    double gap_margin = 0;
    double cp = 0;
    double lambda_next = 0; // λ_{V,k_p+1}
};

GapReport classify_gap(const EigenSystem& eigs, double p, double c, double gap_tol = 1e-3);

// ⟨field, φ_{k,j}⟩_{L²_V} for all columns with k ≤ k_max.
Vector project_coefficients(const Grid<>& grid, const EigenSystem& eigs, const Vector& field, int k_max);

// field minus its L²_V projection onto V_1 ⊕ … ⊕ V_{k_p}.
Vector deflate(const Grid<>& grid, const EigenSystem& eigs, const Vector& field, int k_p);

struct PoincareMargin {
    double margin = 0;    // ∫|∇φ|² - λ_{V,k_p+1}∫φ²V^{p-1}
    double corollary = 0; // I[φ] - λ_p E[φ]
    double weighted_norm2 = 0;
};

PoincareMargin check_improved_poincare(const Grid<>& grid, const EigenSystem& eigs, const GapReport& gap,
                                       const Vector& field);

// ∫|∇φ|² - (cp + λ_p - γ_p ε²)∫φ²V^{p-1} with ε the largest linear quotient
// over k ≤ k_p; nonnegative for any field.
double almost_orthogonal_poincare_margin(const Grid<>& grid, const EigenSystem& eigs, const GapReport& gap,
                                         const Vector& field);

// Dense reference solve (small n only).
Vector dense_weighted_eigenvalues(const Grid<>& grid, const Vector& weight);

} // namespace fde
