#include "fde/spectrum.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace fde {

int EigenSystem::columns_through(int k) const {
    require(k >= 0 && k <= distinct(), ErrorKind::InvalidArgument,
            "eigen index " + std::to_string(k) + " exceeds the computed spectrum");
    if (k == 0) return 0;
    return offsets[k - 1] + multiplicities[k - 1];
}

int EigenSystem::column(int k, int j) const {
    require(k >= 1 && k <= distinct(), ErrorKind::InvalidArgument,
            "eigen index k=" + std::to_string(k) + " exceeds the computed spectrum");
    require(j >= 1 && j <= multiplicities[k - 1], ErrorKind::InvalidArgument,
            "multiplicity index j=" + std::to_string(j) + " out of range");
    return offsets[k - 1] + j - 1;
}

namespace {

Vector weighted_residual_norms(const Grid<>& grid, const Vector& mass, const Matrix& X, const Vector& theta) {
    Vector out(X.cols());
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
        const Vector r = apply_stiffness(grid, X.col(j)) - theta(j) * mass.cwiseProduct(X.col(j));
        out(j) = std::sqrt((r.array().square() / mass.array()).sum()) / std::abs(theta(j));
    }
    return out;
}

// Number of eigenvalues of Kφ = λMφ below sigma (Sylvester inertia of K - σM).
Eigen::Index count_below(const Tridiagonal<double>& K, const Vector& mass, double sigma) {
    Tridiagonal<double> S = K;
    S.diag -= sigma * mass;
    return TridiagonalLU<double>(S).negative_pivots();
}

} // namespace

EigenSystem weighted_eigensystem_w(const Grid<>& grid, const Vector& weight, int K, const EigenOptions& opts) {
    const Eigen::Index n = grid.size();
    require(weight.size() == n, ErrorKind::InvalidArgument, "eigen weight: length mismatch");
    require(weight.minCoeff() > 0.0, ErrorKind::InvalidArgument, "eigen weight must be positive");
    require(K >= 1 && K <= n / 4, ErrorKind::InvalidArgument, "need 1 <= K <= n/4 eigenpairs");

    const Tridiagonal<double> stiff = stiffness(grid);
    const TridiagonalLU<double> lu(stiff);
    const Vector mass = grid.quad_weights.cwiseProduct(weight);
    const Eigen::Index b = std::min<Eigen::Index>(n, std::max<Eigen::Index>(2 * K, K + 8));

    Matrix X(n, b);
    for (Eigen::Index j = 0; j < b; ++j)
        for (Eigen::Index i = 0; i < n; ++i)
            X(i, j) = std::sin(std::numbers::pi * double(j + 1) * double(i + 1) / double(n + 1)) +
                      1e-3 * std::cos(double(7 * i + 3 * j));

    Vector theta = Vector::Ones(b);
    Vector res;
    bool converged = false;
    Matrix Y(n, b);
    for (int it = 0; it < opts.max_iters; ++it) {
        for (Eigen::Index j = 0; j < b; ++j) Y.col(j) = theta(j) * lu.solve(mass.cwiseProduct(X.col(j)));
        Matrix KY(n, b);
        for (Eigen::Index j = 0; j < b; ++j) KY.col(j) = apply_stiffness(grid, Y.col(j));
        Matrix A = Y.transpose() * KY;
        Matrix B = Y.transpose() * mass.asDiagonal() * Y;
        A = 0.5 * (A + A.transpose()).eval();
        B = 0.5 * (B + B.transpose()).eval();
        Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> rr(A, B);
        if (rr.info() != Eigen::Success)
            throw Error(ErrorKind::EigensolverFailure, "Rayleigh–Ritz step failed");
        theta = rr.eigenvalues();
        X = Y * rr.eigenvectors();
        res = weighted_residual_norms(grid, mass, X.leftCols(K), theta.head(K));
        if (res.maxCoeff() <= opts.tol) {
            converged = true;
            break;
        }
    }
    if (!converged)
        throw Error(ErrorKind::EigensolverFailure,
                    "block inverse iteration stagnated at residual " + std::to_string(res.maxCoeff()));

    // Extend the last cluster if it straddles column K.
    Eigen::Index keep = K;
    while (keep < b && theta(keep) - theta(keep - 1) <= opts.cluster_tol * theta(keep)) ++keep;
    if (keep > K) res = weighted_residual_norms(grid, mass, X.leftCols(keep), theta.head(keep));

    const double sigma = keep < b ? 0.5 * (theta(keep - 1) + theta(keep)) : theta(keep - 1) * (1 + 1e-6);
    const Eigen::Index below = count_below(stiff, mass, sigma);
    if (below != keep)
        throw Error(ErrorKind::EigensolverFailure, "inertia count " + std::to_string(below) + " disagrees with " +
                                                       std::to_string(keep) + " computed eigenvalues");

    EigenSystem out;
    out.weight = weight;
    out.functions = X.leftCols(keep);
    out.residuals = res;
    for (Eigen::Index j = 0; j < keep; ++j) {
        auto col = out.functions.col(j);
        col /= std::sqrt(col.cwiseAbs2().dot(mass));
        const double cut = 1e-3 * col.cwiseAbs().maxCoeff();
        for (Eigen::Index i = 0; i < n; ++i)
            if (std::abs(col(i)) > cut) {
                if (col(i) < 0) col = -col;
                break;
            }
    }
    std::vector<double> values;
    for (Eigen::Index j = 0; j < keep;) {
        Eigen::Index e = j + 1;
        while (e < keep && theta(e) - theta(e - 1) <= opts.cluster_tol * theta(e)) ++e;
        out.offsets.push_back(static_cast<int>(j));
        out.multiplicities.push_back(static_cast<int>(e - j));
        values.push_back(theta.segment(j, e - j).mean());
        j = e;
    }
    out.eigenvalues = Eigen::Map<Vector>(values.data(), Eigen::Index(values.size()));
    out.inverse_eigenvalues = out.eigenvalues.cwiseInverse();
    return out;
}

EigenSystem weighted_eigensystem(const Grid<>& grid, const Vector& V, double p, int K, const EigenOptions& opts) {
    require(V.size() == grid.size(), ErrorKind::InvalidArgument, "weighted_eigensystem: length mismatch");
    require(V.minCoeff() > 0.0, ErrorKind::InvalidArgument, "weighted_eigensystem needs V > 0");
    return weighted_eigensystem_w(grid, V.array().pow(p - 1.0).matrix(), K, opts);
}

GapReport classify_gap(const EigenSystem& eigs, double p, double c, double gap_tol) {
    require(eigs.distinct() >= 1, ErrorKind::SpectrumTooShort, "empty spectrum");
    const double cp = c * p;
    const Vector& lam = eigs.eigenvalues;
    if (lam(eigs.distinct() - 1) < cp)
        throw Error(ErrorKind::SpectrumTooShort, "largest computed eigenvalue lies below cp; increase K");
    GapReport g;
    g.cp = cp;
    g.k_p = static_cast<int>((lam.array() < cp).count());
    g.gap_margin = (lam.array() - cp).abs().minCoeff() / cp;
    g.h2_ok = g.gap_margin > gap_tol;
    if (g.k_p >= 1 && g.k_p < eigs.distinct()) {
        g.lambda_next = lam(g.k_p);
        g.gamma_p = (lam(g.k_p) - lam(0)) * g.k_p * eigs.multiplicities[g.k_p - 1];
        if (g.h2_ok) g.lambda_p = lam(g.k_p) - cp;
    }
    return g;
}

Vector project_coefficients(const Grid<>& grid, const EigenSystem& eigs, const Vector& field, int k_max) {
    require(field.size() == grid.size(), ErrorKind::InvalidArgument, "project_coefficients: length mismatch");
    const int cols = eigs.columns_through(k_max);
    const Vector wf = grid.quad_weights.cwiseProduct(eigs.weight).cwiseProduct(field);
    return eigs.functions.leftCols(cols).transpose() * wf;
}

Vector deflate(const Grid<>& grid, const EigenSystem& eigs, const Vector& field, int k_p) {
    const int cols = eigs.columns_through(k_p);
    Vector out = field;
    for (int pass = 0; pass < 2; ++pass)
        out -= eigs.functions.leftCols(cols) * project_coefficients(grid, eigs, out, k_p);
    return out;
}

PoincareMargin check_improved_poincare(const Grid<>& grid, const EigenSystem& eigs, const GapReport& gap,
                                       const Vector& field) {
    require(field.size() == grid.size(), ErrorKind::InvalidArgument, "check_improved_poincare: length mismatch");
    PoincareMargin m;
    const double grad = gradient_energy(grid, field);
    m.weighted_norm2 = inner_product_weighted(grid, field, field, eigs.weight);
    m.margin = grad - gap.lambda_next * m.weighted_norm2;
    const double I = grad - gap.cp * m.weighted_norm2;
    m.corollary = I - (gap.lambda_next - gap.cp) * m.weighted_norm2;
    return m;
}

double almost_orthogonal_poincare_margin(const Grid<>& grid, const EigenSystem& eigs, const GapReport& gap,
                                         const Vector& field) {
    const double e = inner_product_weighted(grid, field, field, eigs.weight);
    const Vector coef = project_coefficients(grid, eigs, field, gap.k_p);
    const double eps = e > 0 ? coef.cwiseAbs().maxCoeff() / std::sqrt(e) : 0.0;
    return gradient_energy(grid, field) - (gap.lambda_next - gap.gamma_p * eps * eps) * e;
}

Vector dense_weighted_eigenvalues(const Grid<>& grid, const Vector& weight) {
    const Tridiagonal<double> K = stiffness(grid);
    const Vector s = grid.quad_weights.cwiseProduct(weight).cwiseSqrt().cwiseInverse();
    const Vector d = K.diag.cwiseProduct(s).cwiseProduct(s);
    const Vector e = K.upper.cwiseProduct(s.head(s.size() - 1)).cwiseProduct(s.tail(s.size() - 1));
    Eigen::SelfAdjointEigenSolver<Matrix> es;
    es.computeFromTridiagonal(d, e, Eigen::EigenvaluesOnly);
    return es.eigenvalues();
}

} // namespace fde
