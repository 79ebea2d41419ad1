#pragma once

#include "mlsis/linalg.hpp"
#include "mlsis/types.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

namespace mlsis
{

/// Rightmost eigenvalue (and spectral radius, when requested) with its
/// Perron vector, normalized so that `max_k y_k = 1`.
struct SpectralResult {
    double mu = std::numeric_limits<double>::quiet_NaN();
    std::optional<double> rho;
    Vector perron_vector;
    double residual   = 0.0; ///< `||G y - mu y||_inf`
    Index iterations  = 0;
    bool bracketed    = false; ///< converged on the Collatz-Wielandt bracket (y >> 0 certified)
};

struct PowerIterationOptions {
    /// Width of the Collatz-Wielandt bracket, relative to max(1, |lambda|).
    double tol           = 1e-12;
    Index max_iterations = 100000;
};

inline bool is_metzler(const Matrix& g)
{
    for (Index i = 0; i < g.rows(); ++i) {
        for (Index j = 0; j < g.cols(); ++j) {
            if (i != j && g(i, j) < 0.0) {
                return false;
            }
        }
    }
    return true;
}

inline bool is_z_matrix(const Matrix& a)
{
    return is_metzler(-a);
}

inline bool is_irreducible(const Matrix& g)
{
    return is_strongly_connected(g);
}

namespace detail
{

struct PerronRoot {
    double lambda;
    Vector y;
    Index iterations;
    bool bracketed;
};

/// Power iteration on a nonnegative matrix with positive diagonal, which is
/// primitive whenever it is irreducible, so its Perron root strictly
/// dominates. For y >> 0, `min_k (Sy)_k/y_k <= rho(S) <= max_k (Sy)_k/y_k`;
/// iteration stops once that bracket is narrow. If rounding keeps the
/// bracket open, a tiny eigen-residual with a stationary iterate also ends it.
inline PerronRoot power_iteration(const Matrix& s, const PowerIterationOptions& opts)
{
    const Index n     = s.rows();
    const double norm = std::max(s.cwiseAbs().rowwise().sum().maxCoeff(), 1e-300);
    Vector y          = Vector::Ones(n);
    double lambda     = 0.0;
    double residual   = std::numeric_limits<double>::infinity();

    for (Index it = 1; it <= opts.max_iterations; ++it) {
        const Vector z = s * y;
        double lo      = std::numeric_limits<double>::infinity();
        double hi      = 0.0;
        for (Index k = 0; k < n; ++k) {
            if (y(k) > 1e-280) {
                const double r = z(k) / y(k);
                lo             = std::min(lo, r);
                hi             = std::max(hi, r);
            }
        }
        const double zmax = z.maxCoeff();
        if (!(zmax > 0.0)) {
            // nilpotent direction; cannot happen with a positive diagonal
            throw ConvergenceError("perron_root: iterate collapsed to zero", 0.0);
        }
        lambda   = zmax; // max_k y_k = 1 before the multiply
        residual = (z - lambda * y).cwiseAbs().maxCoeff();
        const Vector y_next = z / zmax;

        const double scale = std::max(1.0, std::abs(hi));
        if (hi - lo <= opts.tol * scale) {
            return {0.5 * (lo + hi), y_next, it, true};
        }
        if (residual <= 1e-2 * opts.tol * norm && (y_next - y).cwiseAbs().maxCoeff() <= 1e-2 * opts.tol) {
            return {lambda, y_next, it, false};
        }
        y = y_next;
    }
    throw ConvergenceError("power iteration did not converge within the iteration cap", residual);
}

/// Perron root of a nonnegative matrix with positive diagonal. Irreducible
/// input goes straight to power_iteration. Otherwise the spectrum is the
/// union of the spectra of the diagonal blocks on the strongly connected
/// components, so the root is the largest block root; the nonnegative
/// eigenvector then comes from inverse iteration just above that root, where
/// `(sigma I - S)^{-1} >= 0` keeps the iterates nonnegative.
inline PerronRoot perron_root(const Matrix& s, const PowerIterationOptions& opts)
{
    const auto comps = strongly_connected_components(s);
    if (comps.size() <= 1) {
        return power_iteration(s, opts);
    }
    const Index n     = s.rows();
    double lambda     = 0.0;
    Index iterations  = 0;
    for (const auto& c : comps) {
        const Index k = static_cast<Index>(c.size());
        Matrix block(k, k);
        for (Index a = 0; a < k; ++a) {
            for (Index b = 0; b < k; ++b) {
                block(a, b) = s(c[static_cast<size_t>(a)], c[static_cast<size_t>(b)]);
            }
        }
        const auto r = power_iteration(block, opts);
        lambda       = std::max(lambda, r.lambda);
        iterations += r.iterations;
    }

    const double sigma = lambda * (1.0 + 1e-10) + 1e-300;
    const Eigen::PartialPivLU<Matrix> lu(sigma * Matrix::Identity(n, n) - s);
    Vector y = Vector::Ones(n);
    for (int it = 0; it < 100; ++it) {
        Vector z = lu.solve(y).cwiseMax(0.0);
        z /= z.maxCoeff();
        const double change = (z - y).cwiseAbs().maxCoeff();
        y                   = std::move(z);
        ++iterations;
        if (change <= 1e-15) {
            break;
        }
    }
    return {lambda, y, iterations, false};
}

} // namespace detail

/// Spectral abscissa of a Metzler matrix. `G + cI` with `c = 1 + max_k |g_kk|`
/// is nonnegative with positive diagonal; its Perron root minus c is mu(G).
inline SpectralResult spectral_abscissa(const Matrix& g, const PowerIterationOptions& opts = {})
{
    if (g.rows() != g.cols() || g.rows() == 0) {
        throw DomainError("spectral_abscissa: matrix must be square and non-empty");
    }
    if (!is_metzler(g)) {
        throw DomainError("spectral_abscissa: matrix must be Metzler (nonnegative off-diagonals)");
    }
    const Index n  = g.rows();
    const double c = 1.0 + g.diagonal().cwiseAbs().maxCoeff();
    const Matrix s = g + c * Matrix::Identity(n, n);
    const auto root = detail::perron_root(s, opts);

    SpectralResult out;
    out.mu            = root.lambda - c;
    out.perron_vector = root.y;
    out.residual      = (g * root.y - out.mu * root.y).cwiseAbs().maxCoeff();
    out.iterations    = root.iterations;
    out.bracketed     = root.bracketed;
    return out;
}

/// Spectral radius of a nonnegative matrix, via the Perron root of `G + I`.
inline SpectralResult spectral_radius(const Matrix& g, const PowerIterationOptions& opts = {})
{
    if (g.rows() != g.cols() || g.rows() == 0) {
        throw DomainError("spectral_radius: matrix must be square and non-empty");
    }
    if ((g.array() < 0.0).any()) {
        throw DomainError("spectral_radius: matrix must be entrywise nonnegative");
    }
    const Index n   = g.rows();
    const Matrix s  = g + Matrix::Identity(n, n);
    const auto root = detail::perron_root(s, opts);

    SpectralResult out;
    out.rho           = root.lambda - 1.0;
    out.mu            = *out.rho;
    out.perron_vector = root.y;
    out.residual      = (g * root.y - *out.rho * root.y).cwiseAbs().maxCoeff();
    out.iterations    = root.iterations;
    out.bracketed     = root.bracketed;
    return out;
}

/// Three independent characterizations of a non-singular M-matrix.
struct MMatrixReport {
    bool stable = false;                  ///< every eigenvalue has positive real part
    double min_real_part = 0.0;           ///< `-mu(-A)`
    bool singular = false;                ///< LU found A numerically singular
    std::optional<bool> inverse_positive; ///< `A^{-1} >= 0`; empty when A is singular
    bool inverse_strictly_positive = false;
    bool semi_positive = false;           ///< Perron vector y >> 0 of -A has `A y >> 0`
    bool irreducible   = false;

    bool unanimous() const
    {
        const bool inv = inverse_positive.value_or(false);
        return stable == inv && inv == semi_positive;
    }

    bool nonsingular_m_matrix() const
    {
        return stable && inverse_positive.value_or(false) && semi_positive;
    }
};

inline MMatrixReport mmatrix_checks(const Matrix& a, const PowerIterationOptions& opts = {})
{
    if (a.rows() != a.cols() || a.rows() == 0) {
        throw DomainError("mmatrix_checks: matrix must be square and non-empty");
    }
    if (!is_z_matrix(a)) {
        throw DomainError("mmatrix_checks: matrix must be a Z-matrix (nonpositive off-diagonals)");
    }
    const Index n     = a.rows();
    const double norm = std::max(a.cwiseAbs().rowwise().sum().maxCoeff(), 1e-300);

    MMatrixReport report;
    report.irreducible = is_irreducible(a);

    const auto sa        = spectral_abscissa(-a, opts);
    report.min_real_part = -sa.mu;
    report.stable        = report.min_real_part > 1e-10 * norm;

    Eigen::PartialPivLU<Matrix> lu(a);
    if (lu.rcond() < 1e-13) {
        report.singular = true;
    }
    else {
        const Matrix inv                 = lu.solve(Matrix::Identity(n, n));
        report.inverse_positive          = inv.minCoeff() >= -1e-10;
        report.inverse_strictly_positive = inv.minCoeff() > 0.0;
    }

    const Vector& y   = sa.perron_vector;
    const Vector ay   = a * y;
    report.semi_positive = (y.array() > 0.0).all();
    for (Index k = 0; k < n && report.semi_positive; ++k) {
        report.semi_positive = ay(k) > 1e-10 * norm * y(k);
    }
    return report;
}

} // namespace mlsis
