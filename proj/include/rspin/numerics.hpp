// Complex scalars, dense complex linear algebra, and scaled-product
// arithmetic shared by every other header.
#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace rspin {

using Cplx = std::complex<double>;
using Mat = Eigen::MatrixXcd;
using Vec = Eigen::VectorXcd;

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SingularMatrix : Error {
    using Error::Error;
};
struct RankDeficient : Error {
    using Error::Error;
};

/// Relative tolerances used throughout; a single injectable value.
struct TolerancePolicy {
    double residual_tol = 1e-9;     // relative residual for accepted solutions
    double rank_cutoff = 1e-8;      // relative to largest singular value
    double distinct_margin = 1e-6;  // relative point-separation margin
    double fd_step = 1e-6;          // finite-difference step

    void validate() const {
        if (residual_tol <= 0 || residual_tol >= 1 || rank_cutoff <= 0 ||
            rank_cutoff >= 1 || distinct_margin <= 0 || fd_step <= 0)
            throw Error("TolerancePolicy: all entries must be positive, "
                        "residual_tol and rank_cutoff below 1");
    }
};

inline bool is_finite(Cplx v) {
    return std::isfinite(v.real()) && std::isfinite(v.imag());
}

// Separation test relative to the magnitude of the two points themselves
// (and 1), so that geometric ladders spanning many orders of magnitude do
// not drown small well-separated points in a global scale.
inline bool separated(Cplx p, Cplx q, double margin) {
    double s = std::max({1.0, std::abs(p), std::abs(q)});
    return std::abs(p - q) >= margin * s;
}

// ---------------------------------------------------------------------------
// ScaledCplx: a complex mantissa with an explicit power-of-two exponent.
// Residues of the rational forms handled here are products of up to ~4g
// linear factors whose magnitudes span hundreds of decades for ladder
// configurations; plain doubles overflow/underflow long before the final
// ratios do. Power-of-two rescaling is exact, so no precision is lost.
// ---------------------------------------------------------------------------
struct ScaledCplx {
    Cplx m{0.0, 0.0};
    long e = 0;

    ScaledCplx() = default;
    explicit ScaledCplx(Cplx v) : m(v) { normalize(); }
    ScaledCplx(Cplx v, long exp2) : m(v), e(exp2) { normalize(); }

    bool is_zero() const { return m == Cplx(0.0, 0.0); }

    void normalize() {
        if (is_zero()) {
            e = 0;
            return;
        }
        double a = std::max(std::fabs(m.real()), std::fabs(m.imag()));
        int k = std::ilogb(a);
        if (k > 256 || k < -256) {
            m = Cplx(std::ldexp(m.real(), -k), std::ldexp(m.imag(), -k));
            e += k;
        }
    }

    ScaledCplx& operator*=(Cplx f) {
        m *= f;
        normalize();
        return *this;
    }
    ScaledCplx& operator/=(Cplx f) {
        m /= f;
        normalize();
        return *this;
    }
    ScaledCplx& operator*=(const ScaledCplx& o) {
        m *= o.m;
        e += o.e;
        normalize();
        return *this;
    }
    ScaledCplx& operator/=(const ScaledCplx& o) {
        m /= o.m;
        e -= o.e;
        normalize();
        return *this;
    }

    friend ScaledCplx operator*(ScaledCplx a, const ScaledCplx& b) { return a *= b; }
    friend ScaledCplx operator/(ScaledCplx a, const ScaledCplx& b) { return a /= b; }
    friend ScaledCplx operator*(ScaledCplx a, Cplx b) { return a *= b; }
    friend ScaledCplx operator-(ScaledCplx a) {
        a.m = -a.m;
        return a;
    }

    friend ScaledCplx operator+(const ScaledCplx& a, const ScaledCplx& b) {
        if (a.is_zero()) return b;
        if (b.is_zero()) return a;
        long d = a.e - b.e;
        if (d > 128) return a;
        if (d < -128) return b;
        // align onto the larger exponent
        if (d >= 0) {
            double f = std::ldexp(1.0, static_cast<int>(-d));
            return ScaledCplx(a.m + b.m * f, a.e);
        }
        double f = std::ldexp(1.0, static_cast<int>(d));
        return ScaledCplx(a.m * f + b.m, b.e);
    }

    /// log2 of the magnitude; -inf for zero.
    double log2_abs() const {
        if (is_zero()) return -std::numeric_limits<double>::infinity();
        return std::log2(std::abs(m)) + static_cast<double>(e);
    }

    /// |this| / |other|, valid even when both magnitudes are unrepresentable.
    double abs_ratio(const ScaledCplx& o) const {
        if (is_zero()) return 0.0;
        if (o.is_zero()) return std::numeric_limits<double>::infinity();
        double l = log2_abs() - o.log2_abs();
        if (l > 1020) return std::numeric_limits<double>::infinity();
        if (l < -1020) return 0.0;
        return std::exp2(l);
    }

    /// Collapse to a plain complex; honest over/underflow if out of range.
    Cplx value() const {
        int k = static_cast<int>(std::clamp(e, -2100L, 2100L));
        return Cplx(std::ldexp(m.real(), k), std::ldexp(m.imag(), k));
    }

    /// Mantissa relative to the power 2^ref, i.e. this / 2^ref.
    Cplx value_scaled(long ref) const {
        long d = e - ref;
        int k = static_cast<int>(std::clamp(d, -2100L, 2100L));
        return Cplx(std::ldexp(m.real(), k), std::ldexp(m.imag(), k));
    }
};

/// One linear factor (t - point)^exponent of a factored rational function.
struct LinFactor {
    Cplx point;
    int exponent;  // positive for zeros, negative for poles
};

// Product of (t - point)^exponent over all factors, taken in increasing
// |t - point| order. Returns a scaled value so that intermediate growth
// cannot overflow.
inline ScaledCplx eval_linear_factors(const std::vector<LinFactor>& factors, Cplx t) {
    std::vector<std::pair<double, const LinFactor*>> order;
    order.reserve(factors.size());
    for (const auto& f : factors) order.emplace_back(std::abs(t - f.point), &f);
    std::sort(order.begin(), order.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    ScaledCplx acc(Cplx(1.0, 0.0));
    for (const auto& [dist, f] : order) {
        Cplx base = t - f->point;
        int n = std::abs(f->exponent);
        for (int i = 0; i < n; ++i) {
            if (f->exponent > 0)
                acc *= base;
            else
                acc /= base;
        }
    }
    return acc;
}

// ---------------------------------------------------------------------------
// Dense solves. Backed by Eigen; the contracts (pivoting, sigma list,
// minimal-norm optimality) are what the rest of the library relies on.
// ---------------------------------------------------------------------------

/// Square solve with partial pivoting. Throws SingularMatrix when a pivot
/// falls below rank_cutoff times the largest initial column norm.
inline Vec lu_solve(const Mat& A, const Vec& b, const TolerancePolicy& pol = {}) {
    if (A.rows() != A.cols()) throw Error("lu_solve: matrix must be square");
    if (b.size() != A.rows()) throw Error("lu_solve: size mismatch");
    double colmax = 0.0;
    for (Eigen::Index j = 0; j < A.cols(); ++j)
        colmax = std::max(colmax, A.col(j).norm());
    Eigen::PartialPivLU<Mat> lu(A);
    double pivmin = lu.matrixLU().diagonal().cwiseAbs().minCoeff();
    if (pivmin < pol.rank_cutoff * colmax)
        throw SingularMatrix("lu_solve: pivot " + std::to_string(pivmin) +
                             " below cutoff");
    return lu.solve(b);
}

/// Rank by singular-value cutoff; returns the sigma list in nonincreasing
/// order alongside the count above rank_cutoff * sigma_max.
inline std::pair<int, std::vector<double>> numeric_rank(const Mat& A,
                                                        const TolerancePolicy& pol = {}) {
    if (A.rows() == 0 || A.cols() == 0)
        return {0, {}};
    Eigen::JacobiSVD<Mat> svd(A);
    const auto& sv = svd.singularValues();
    std::vector<double> sigma(sv.data(), sv.data() + sv.size());
    double smax = sigma.empty() ? 0.0 : sigma.front();
    int rank = 0;
    for (double s : sigma)
        if (s > pol.rank_cutoff * smax && s > 0.0) ++rank;
    return {rank, sigma};
}

/// Minimal-norm solution of the underdetermined system J s = r
/// (rows <= cols). Throws RankDeficient when J lacks full row rank.
inline Vec minnorm_step(const Mat& J, const Vec& r, const TolerancePolicy& pol = {}) {
    if (J.rows() > J.cols()) throw Error("minnorm_step: expected rows <= cols");
    if (r.size() != J.rows()) throw Error("minnorm_step: size mismatch");
    Eigen::JacobiSVD<Mat> svd(J, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    double smax = sv.size() ? sv(0) : 0.0;
    for (Eigen::Index i = 0; i < sv.size(); ++i)
        if (!(sv(i) > pol.rank_cutoff * smax) || smax == 0.0)
            throw RankDeficient("minnorm_step: numeric rank below row count");
    Vec c = svd.matrixU().adjoint() * r;
    for (Eigen::Index i = 0; i < sv.size(); ++i) c(i) /= sv(i);
    return svd.matrixV() * c;
}

/// Truncated-SVD least-squares/minimal-norm solve that tolerates rank
/// deficiency (Gauss-Newton fallback path).
inline Vec pinv_solve(const Mat& J, const Vec& r, double cutoff) {
    Eigen::JacobiSVD<Mat> svd(J, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    double smax = sv.size() ? sv(0) : 0.0;
    Vec c = svd.matrixU().adjoint() * r;
    for (Eigen::Index i = 0; i < sv.size(); ++i) {
        if (smax > 0.0 && sv(i) > cutoff * smax)
            c(i) /= sv(i);
        else
            c(i) = Cplx(0.0, 0.0);
    }
    return svd.matrixV() * c;
}

}  // namespace rspin
