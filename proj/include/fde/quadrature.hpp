#pragma once

#include <algorithm>
#include <array>
#include <limits>
#include <cmath>

namespace fde {

// Adaptive Gauss–Kronrod (7/15) quadrature by recursive bisection.
template <typename Scalar = double>
class GaussKronrod {
public:
    explicit GaussKronrod(Scalar abs_tol = Scalar(1e-15), Scalar rel_tol = Scalar(1e-14), int max_depth = 30)
        : abs_tol_(abs_tol), rel_tol_(rel_tol), max_depth_(max_depth) {}

    template <typename F>
    Scalar operator()(F&& f, Scalar a, Scalar b) const {
        if (a == b) return Scalar(0);
        Scalar err = 0;
        const Scalar whole = rule(f, a, b, err);
        return refine(f, a, b, whole, err, abs_tol_, 0);
    }

private:
    template <typename F>
    static Scalar rule(F& f, Scalar a, Scalar b, Scalar& err) {
        static constexpr std::array<double, 8> xk = {
            0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
            0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
            0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
            0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
        static constexpr std::array<double, 8> wk = {
            0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
            0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
            0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
            0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
        static constexpr std::array<double, 4> wg = {
            0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
            0.381830050505118944950369775488975, 0.417959183673469387755102040816327};
        const Scalar c = (a + b) / 2, r = (b - a) / 2;
        const Scalar fc = f(c);
        Scalar kron = Scalar(wk[7]) * fc;
        Scalar gauss = Scalar(wg[3]) * fc;
        for (int j = 0; j < 7; ++j) {
            const Scalar dx = r * Scalar(xk[j]);
            const Scalar s = f(c - dx) + f(c + dx);
            kron += Scalar(wk[j]) * s;
            if (j % 2 == 1) gauss += Scalar(wg[j / 2]) * s;
        }
        err = std::abs((kron - gauss) * r);
        return kron * r;
    }

    template <typename F>
    Scalar refine(F& f, Scalar a, Scalar b, Scalar whole, Scalar err, Scalar tol, int depth) const {
        const Scalar floor = Scalar(50) * std::numeric_limits<Scalar>::epsilon() * std::abs(whole);
        if (err <= std::max({tol, rel_tol_ * std::abs(whole), floor}) || depth >= max_depth_) return whole;
        const Scalar m = (a + b) / 2;
        Scalar el = 0, er = 0;
        const Scalar left = rule(f, a, m, el);
        const Scalar right = rule(f, m, b, er);
        return refine(f, a, m, left, el, tol / 2, depth + 1) + refine(f, m, b, right, er, tol / 2, depth + 1);
    }

    Scalar abs_tol_;
    Scalar rel_tol_;
    int max_depth_;
};

} // namespace fde
