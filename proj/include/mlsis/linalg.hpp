#pragma once

#include "mlsis/types.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace mlsis
{

/// Strong connectivity of the digraph with an edge i -> j wherever
/// `adjacency(i, j) != 0` (i != j). Two reachability sweeps from node 0,
/// one on the edges and one on the reversed edges.
inline bool is_strongly_connected(const Matrix& adjacency)
{
    const Index n = adjacency.rows();
    if (n <= 1) {
        return true;
    }
    auto sweep = [&](bool reversed) {
        std::vector<char> seen(static_cast<size_t>(n), 0);
        std::vector<Index> stack{0};
        seen[0]      = 1;
        Index visits = 1;
        while (!stack.empty()) {
            const Index i = stack.back();
            stack.pop_back();
            for (Index j = 0; j < n; ++j) {
                const double a = reversed ? adjacency(j, i) : adjacency(i, j);
                if (j != i && a != 0.0 && !seen[static_cast<size_t>(j)]) {
                    seen[static_cast<size_t>(j)] = 1;
                    ++visits;
                    stack.push_back(j);
                }
            }
        }
        return visits == n;
    };
    return sweep(false) && sweep(true);
}

/// Strongly connected components (Kosaraju), each listed in ascending node order.
inline std::vector<std::vector<Index>> strongly_connected_components(const Matrix& adjacency)
{
    const Index n = adjacency.rows();
    auto edge     = [&](Index i, Index j, bool reversed) {
        return i != j && (reversed ? adjacency(j, i) : adjacency(i, j)) != 0.0;
    };

    // first pass: finishing order on the forward graph
    std::vector<char> seen(static_cast<size_t>(n), 0);
    std::vector<Index> order;
    for (Index root = 0; root < n; ++root) {
        if (seen[static_cast<size_t>(root)]) {
            continue;
        }
        std::vector<std::pair<Index, Index>> stack{{root, 0}};
        seen[static_cast<size_t>(root)] = 1;
        while (!stack.empty()) {
            auto& [i, next] = stack.back();
            while (next < n && (seen[static_cast<size_t>(next)] || !edge(i, next, false))) {
                ++next;
            }
            if (next == n) {
                order.push_back(i);
                stack.pop_back();
                continue;
            }
            const Index j                = next++;
            seen[static_cast<size_t>(j)] = 1;
            stack.emplace_back(j, 0);
        }
    }

    // second pass: reversed graph in decreasing finishing time
    std::vector<std::vector<Index>> comps;
    std::fill(seen.begin(), seen.end(), 0);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if (seen[static_cast<size_t>(*it)]) {
            continue;
        }
        std::vector<Index> comp;
        std::vector<Index> stack{*it};
        seen[static_cast<size_t>(*it)] = 1;
        while (!stack.empty()) {
            const Index i = stack.back();
            stack.pop_back();
            comp.push_back(i);
            for (Index j = 0; j < n; ++j) {
                if (!seen[static_cast<size_t>(j)] && edge(i, j, true)) {
                    seen[static_cast<size_t>(j)] = 1;
                    stack.push_back(j);
                }
            }
        }
        std::sort(comp.begin(), comp.end());
        comps.push_back(std::move(comp));
    }
    return comps;
}

/// Normalized null vector of `K^T` for a generator-like matrix K (zero row
/// sums, irreducible): solves `K^T v = 0, 1^T v = 1`. One equation of
/// `K^T v = 0` is redundant (its rows sum to `(K 1)^T = 0`), so the last row
/// is replaced by the normalization and the square system is LU-solved.
inline Vector stationary_null_vector(const Matrix& generator)
{
    const Index n = generator.rows();
    if (n == 0 || generator.cols() != n) {
        throw DomainError("stationary_null_vector: generator must be square and non-empty");
    }
    Matrix bordered          = generator.transpose();
    bordered.row(n - 1).setOnes();
    Vector rhs               = Vector::Zero(n);
    rhs(n - 1)               = 1.0;
    Eigen::PartialPivLU<Matrix> lu(bordered);
    return lu.solve(rhs);
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, sorted ascending.
inline Vector symmetric_eigenvalues(const Matrix& symmetric, double tol = 1e-15, int max_sweeps = 100)
{
    const Index n = symmetric.rows();
    if (symmetric.cols() != n) {
        throw DomainError("symmetric_eigenvalues: matrix must be square");
    }
    Matrix a = 0.5 * (symmetric + symmetric.transpose());

    auto off_norm = [&] {
        double s = 0.0;
        for (Index i = 0; i < n; ++i) {
            for (Index j = 0; j < n; ++j) {
                if (i != j) {
                    s += a(i, j) * a(i, j);
                }
            }
        }
        return std::sqrt(s);
    };
    const double scale = std::max(a.norm(), 1e-300);

    for (int sweep = 0; sweep < max_sweeps && off_norm() > tol * scale; ++sweep) {
        for (Index p = 0; p < n - 1; ++p) {
            for (Index q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (std::abs(apq) < 1e-300) {
                    continue;
                }
                // rotation angle zeroing a(p, q)
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t     = std::copysign(1.0, theta) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c     = 1.0 / std::sqrt(t * t + 1.0);
                const double s     = t * c;
                for (Index k = 0; k < n; ++k) {
                    const double akp = a(k, p);
                    const double akq = a(k, q);
                    a(k, p)          = c * akp - s * akq;
                    a(k, q)          = s * akp + c * akq;
                }
                for (Index k = 0; k < n; ++k) {
                    const double apk = a(p, k);
                    const double aqk = a(q, k);
                    a(p, k)          = c * apk - s * aqk;
                    a(q, k)          = s * apk + c * aqk;
                }
            }
        }
    }

    Vector eig = a.diagonal();
    std::sort(eig.data(), eig.data() + n);
    return eig;
}

} // namespace mlsis
