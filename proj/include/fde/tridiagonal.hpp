#pragma once

#include <Eigen/Core>

#include <cmath>

#include "fde/error.hpp"

namespace fde {

// Tridiagonal matrix stored by diagonals. lower(i) couples row i+1 to column i,
// upper(i) couples row i to column i+1.
template <typename Scalar>
struct Tridiagonal {
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

    Vector lower;
    Vector diag;
    Vector upper;

    Tridiagonal() = default;
    explicit Tridiagonal(Eigen::Index n)
        : lower(Vector::Zero(n > 0 ? n - 1 : 0)), diag(Vector::Zero(n)), upper(Vector::Zero(n > 0 ? n - 1 : 0)) {}

    Eigen::Index size() const { return diag.size(); }

    template <typename Derived>
    Vector operator*(const Eigen::MatrixBase<Derived>& x) const {
        const Eigen::Index n = size();
        require(x.size() == n, ErrorKind::InvalidArgument, "tridiagonal product: length mismatch");
        Vector y = diag.cwiseProduct(x);
        if (n > 1) {
            y.head(n - 1) += upper.cwiseProduct(x.tail(n - 1));
            y.tail(n - 1) += lower.cwiseProduct(x.head(n - 1));
        }
        return y;
    }

    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> dense() const {
        const Eigen::Index n = size();
        Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> m =
            Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>::Zero(n, n);
        m.diagonal() = diag;
        if (n > 1) {
            m.template diagonal<1>() = upper;
            m.template diagonal<-1>() = lower;
        }
        return m;
    }
};

// LU factorization without pivoting (Thomas algorithm). Intended for the
// diagonally dominant / SPD systems that arise from the Dirichlet stencil.
template <typename Scalar>
class TridiagonalLU {
public:
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

    TridiagonalLU() = default;
    explicit TridiagonalLU(const Tridiagonal<Scalar>& a) { compute(a); }

    TridiagonalLU& compute(const Tridiagonal<Scalar>& a) {
        const Eigen::Index n = a.size();
        require(n > 0, ErrorKind::InvalidArgument, "tridiagonal factorization of empty matrix");
        pivot_.resize(n);
        mult_.resize(n > 1 ? n - 1 : 0);
        upper_ = a.upper;
        pivot_(0) = a.diag(0);
        for (Eigen::Index i = 1; i < n; ++i) {
            require(pivot_(i - 1) != Scalar(0) && std::isfinite(static_cast<double>(pivot_(i - 1))),
                    ErrorKind::InvalidArgument, "singular tridiagonal system");
            mult_(i - 1) = a.lower(i - 1) / pivot_(i - 1);
            pivot_(i) = a.diag(i) - mult_(i - 1) * a.upper(i - 1);
        }
        require(pivot_(n - 1) != Scalar(0) && std::isfinite(static_cast<double>(pivot_(n - 1))),
                ErrorKind::InvalidArgument, "singular tridiagonal system");
        return *this;
    }

    template <typename Derived>
    Vector solve(const Eigen::MatrixBase<Derived>& b) const {
        const Eigen::Index n = pivot_.size();
        require(b.size() == n, ErrorKind::InvalidArgument, "tridiagonal solve: length mismatch");
        Vector x = b;
        for (Eigen::Index i = 1; i < n; ++i) x(i) -= mult_(i - 1) * x(i - 1);
        x(n - 1) /= pivot_(n - 1);
        for (Eigen::Index i = n - 2; i >= 0; --i) x(i) = (x(i) - upper_(i) * x(i + 1)) / pivot_(i);
        return x;
    }

    // Number of negative pivots; equals the number of negative eigenvalues
    // when the factored matrix is symmetric (Sylvester inertia).
    Eigen::Index negative_pivots() const { return (pivot_.array() < Scalar(0)).count(); }

private:
    Vector pivot_;
    Vector mult_;
    Vector upper_;
};

} // namespace fde
