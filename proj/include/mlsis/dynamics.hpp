#pragma once

#include "mlsis/io.hpp"
#include "mlsis/network.hpp"
#include "mlsis/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <vector>

namespace mlsis
{

/// Full problem instance: mobility network plus per-node infection rates
/// `beta_i > 0` and recovery rates `delta_i >= 0` (both 1/time).
///
/// All nm-vectors in the library (p, x, v, ...) are layer-major: entry
/// `flat_index(alpha, i, n) = alpha * n + i` holds class alpha at node i.
class ModelSpec
{
public:
    ModelSpec() = default;

    ModelSpec(MultiLayerNetwork net, Vector beta, Vector delta)
        : m_net(std::move(net))
        , m_beta(std::move(beta))
        , m_delta(std::move(delta))
    {
        const Index n = m_net.num_nodes();
        if (m_beta.size() != n) {
            throw DomainError("ModelSpec: beta must have one entry per node");
        }
        if (m_delta.size() != n) {
            throw DomainError("ModelSpec: delta must have one entry per node");
        }
        if ((m_beta.array() <= 0.0).any()) {
            throw DomainError("ModelSpec: infection rates must be positive");
        }
        if ((m_delta.array() < 0.0).any()) {
            throw DomainError("ModelSpec: recovery rates must be non-negative");
        }
    }

    const MultiLayerNetwork& network() const
    {
        return m_net;
    }
    const Vector& beta() const
    {
        return m_beta;
    }
    const Vector& delta() const
    {
        return m_delta;
    }
    Index num_nodes() const
    {
        return m_net.num_nodes();
    }
    Index num_layers() const
    {
        return m_net.num_layers();
    }
    Index dim() const
    {
        return m_net.dim();
    }

    /// beta repeated per layer (the diagonal of B).
    Vector beta_stacked() const
    {
        return m_beta.replicate(num_layers(), 1);
    }

    /// delta repeated per layer (the diagonal of D).
    Vector delta_stacked() const
    {
        return m_delta.replicate(num_layers(), 1);
    }

    Matrix infection_matrix() const
    {
        return beta_stacked().asDiagonal();
    }

    Matrix recovery_matrix() const
    {
        return delta_stacked().asDiagonal();
    }

    bool has_recovery() const
    {
        return (m_delta.array() > 0.0).any();
    }

    ModelSpec with_beta(Vector beta) const
    {
        return ModelSpec(m_net, std::move(beta), m_delta);
    }

    ModelSpec with_delta(Vector delta) const
    {
        return ModelSpec(m_net, m_beta, std::move(delta));
    }

    ModelSpec with_network(MultiLayerNetwork net) const
    {
        return ModelSpec(std::move(net), m_beta, m_delta);
    }

private:
    MultiLayerNetwork m_net;
    Vector m_beta;
    Vector m_delta;
};

/// Infected fractions p and class populations x at time t.
struct SystemState {
    double t = 0.0;
    Vector p;
    Vector x;
};

/// Matrices of the p-dynamics evaluated at a population vector x.
struct AssembledMatrices {
    Matrix F; ///< class shares per node, `F((a,i),(b,i)) = f^b_i`
    Matrix L; ///< block-diagonal mobility operator on fractions
    Matrix M; ///< `I - F`, a Laplacian
    std::optional<Vector> pbar; ///< node-level infected fractions, when p was given
};

namespace detail
{
inline void require_positive_populations(const ModelSpec& spec, const Vector& x)
{
    if (x.size() != spec.dim()) {
        throw DomainError("population vector has wrong length");
    }
    if ((x.array() <= 0.0).any()) {
        throw DomainError("populations must be strictly positive for L(x) to be defined");
    }
}

inline Vector node_totals(const ModelSpec& spec, const Vector& x)
{
    const Index n = spec.num_nodes();
    Vector tot    = Vector::Zero(n);
    for (Index a = 0; a < spec.num_layers(); ++a) {
        tot += x.segment(a * n, n);
    }
    return tot;
}
} // namespace detail

/// `p_bar_i = sum_a f^a_i p^a_i`.
inline Vector node_infected_fraction(const ModelSpec& spec, const Vector& x, const Vector& p)
{
    const Index n     = spec.num_nodes();
    const Vector tot  = detail::node_totals(spec, x);
    Vector infected   = Vector::Zero(n);
    for (Index a = 0; a < spec.num_layers(); ++a) {
        infected += x.segment(a * n, n).cwiseProduct(p.segment(a * n, n));
    }
    return infected.cwiseQuotient(tot);
}

inline AssembledMatrices assemble(const ModelSpec& spec, const Vector& x, const std::optional<Vector>& p = {})
{
    detail::require_positive_populations(spec, x);
    const Index n    = spec.num_nodes();
    const Index m    = spec.num_layers();
    const Index nm   = spec.dim();
    const Vector tot = detail::node_totals(spec, x);

    AssembledMatrices out;
    out.F = Matrix::Zero(nm, nm);
    for (Index a = 0; a < m; ++a) {
        for (Index b = 0; b < m; ++b) {
            for (Index i = 0; i < n; ++i) {
                out.F(flat_index(a, i, n), flat_index(b, i, n)) = x(flat_index(b, i, n)) / tot(i);
            }
        }
    }

    out.L = Matrix::Zero(nm, nm);
    for (Index a = 0; a < m; ++a) {
        const Matrix& q = spec.network().layer(a).generator();
        const auto xa   = x.segment(a * n, n);
        for (Index i = 0; i < n; ++i) {
            double diag = 0.0;
            for (Index j = 0; j < n; ++j) {
                if (j == i) {
                    continue;
                }
                const double lij                                  = -q(j, i) * xa(j) / xa(i);
                out.L(flat_index(a, i, n), flat_index(a, j, n)) = lij;
                diag -= lij;
            }
            out.L(flat_index(a, i, n), flat_index(a, i, n)) = diag;
        }
    }

    out.M = Matrix::Identity(nm, nm) - out.F;
    if (p) {
        out.pbar = node_infected_fraction(spec, x, *p);
    }
    return out;
}

struct Derivative {
    Vector dp;
    Vector dx;
};

/// Right-hand side, node by node:
/// `dp^a_i = -delta_i p^a_i + beta_i pbar_i (1 - p^a_i) + sum_{j!=i} q^a_ji (x^a_j / x^a_i)(p^a_j - p^a_i)`
/// and `dx^a = (Q^a)^T x^a`.
inline Derivative rhs(const ModelSpec& spec, const SystemState& state)
{
    detail::require_positive_populations(spec, state.x);
    const Index n     = spec.num_nodes();
    const Index m     = spec.num_layers();
    const Vector pbar = node_infected_fraction(spec, state.x, state.p);
    const Vector& b   = spec.beta();
    const Vector& d   = spec.delta();

    Derivative out{Vector(spec.dim()), Vector(spec.dim())};
    for (Index a = 0; a < m; ++a) {
        const Matrix& q = spec.network().layer(a).generator();
        const auto x    = state.x.segment(a * n, n);
        const auto p    = state.p.segment(a * n, n);
        for (Index i = 0; i < n; ++i) {
            double mobility = 0.0;
            double inflow   = 0.0;
            for (Index j = 0; j < n; ++j) {
                inflow += q(j, i) * x(j);
                if (j != i) {
                    mobility += q(j, i) * (x(j) / x(i)) * (p(j) - p(i));
                }
            }
            out.dp(a * n + i) = -d(i) * p(i) + b(i) * pbar(i) * (1.0 - p(i)) + mobility;
            out.dx(a * n + i) = inflow;
        }
    }
    return out;
}

/// Same right-hand side in matrix form, `dp = (B F - D - L) p - P B F p`.
inline Derivative rhs_matrix_form(const ModelSpec& spec, const SystemState& state)
{
    const auto mats = assemble(spec, state.x);
    const Vector bd = spec.beta_stacked();
    const Vector bfp = bd.cwiseProduct(mats.F * state.p);
    Derivative out;
    out.dp = bfp - spec.delta_stacked().cwiseProduct(state.p) - mats.L * state.p - state.p.cwiseProduct(bfp);
    out.dx = Vector(spec.dim());
    const Index n = spec.num_nodes();
    for (Index a = 0; a < spec.num_layers(); ++a) {
        out.dx.segment(a * n, n) = spec.network().layer(a).generator().transpose() * state.x.segment(a * n, n);
    }
    return out;
}

/// Time series of states with its provenance.
struct Trajectory {
    enum class Kind { Deterministic, Stochastic };

    Kind kind = Kind::Deterministic;
    std::optional<std::uint64_t> seed;
    double dt = 0.0;
    std::vector<SystemState> samples;

    // diagnostics accumulated over every step, not only the sampled ones
    double max_population_drift = 0.0; ///< max over t and classes of |1^T x^a(t) - 1^T x^a(0)| / 1^T x^a(0)
    double max_clamp            = 0.0; ///< largest excursion of p outside [0, 1] that was clamped

    const SystemState& final_state() const
    {
        return samples.back();
    }
};

struct IntegrationOptions {
    double dt          = 0.01;
    Index sample_every = 1;
    double clamp_tol   = 1e-9;
};

/// Number of fixed steps of size dt covering [0, t_end].
inline Index step_count(double t_end, double dt)
{
    const double ratio   = t_end / dt;
    const double rounded = std::round(ratio);
    if (std::abs(ratio - rounded) <= 1e-9 * std::max(1.0, ratio)) {
        return static_cast<Index>(rounded);
    }
    return static_cast<Index>(std::ceil(ratio));
}

/// Classical fixed-step RK4 over the joint (p, x) system.
inline Trajectory integrate(const ModelSpec& spec, const SystemState& initial, double t_end,
                            const IntegrationOptions& options = {})
{
    if (!(options.dt > 0.0)) {
        throw DomainError("integrate: dt must be positive");
    }
    if (!(t_end >= 0.0)) {
        throw DomainError("integrate: t_end must be non-negative");
    }
    if (options.sample_every < 1) {
        throw DomainError("integrate: sample_every must be at least 1");
    }
    const Index nm = spec.dim();
    if (initial.p.size() != nm || initial.x.size() != nm) {
        throw DomainError("integrate: state vectors must have length n*m");
    }
    if ((initial.p.array() < 0.0).any() || (initial.p.array() > 1.0).any()) {
        throw DomainError("integrate: initial infected fractions must lie in [0, 1]");
    }
    detail::require_positive_populations(spec, initial.x);

    const Index n = spec.num_nodes();
    const Index m = spec.num_layers();
    const double dt = options.dt;
    const Index steps = step_count(t_end, dt);

    Vector class_total0(m);
    for (Index a = 0; a < m; ++a) {
        class_total0(a) = initial.x.segment(a * n, n).sum();
    }

    Trajectory traj;
    traj.dt = dt;
    traj.samples.reserve(static_cast<size_t>(steps / options.sample_every + 2));
    traj.samples.push_back({0.0, initial.p, initial.x});

    SystemState s{0.0, initial.p, initial.x};
    auto eval = [&](const Vector& p, const Vector& x) { return rhs(spec, {0.0, p, x}); };

    for (Index k = 1; k <= steps; ++k) {
        const auto k1 = eval(s.p, s.x);
        const auto k2 = eval(s.p + 0.5 * dt * k1.dp, s.x + 0.5 * dt * k1.dx);
        const auto k3 = eval(s.p + 0.5 * dt * k2.dp, s.x + 0.5 * dt * k2.dx);
        const auto k4 = eval(s.p + dt * k3.dp, s.x + dt * k3.dx);
        s.p += dt / 6.0 * (k1.dp + 2.0 * k2.dp + 2.0 * k3.dp + k4.dp);
        s.x += dt / 6.0 * (k1.dx + 2.0 * k2.dx + 2.0 * k3.dx + k4.dx);
        s.t = static_cast<double>(k) * dt;

        for (Index i = 0; i < nm; ++i) {
            const double excess = std::max(-s.p(i), s.p(i) - 1.0);
            if (excess > options.clamp_tol) {
                throw IntegrationError("integrate: p left [0, 1] by " + std::to_string(excess) + " at t = " +
                                       std::to_string(s.t) + "; reduce dt");
            }
            if (excess > 0.0) {
                traj.max_clamp = std::max(traj.max_clamp, excess);
                s.p(i)         = std::clamp(s.p(i), 0.0, 1.0);
            }
        }
        if ((s.x.array() <= 0.0).any()) {
            throw IntegrationError("integrate: a class population became non-positive at t = " + std::to_string(s.t) +
                                   "; reduce dt");
        }
        for (Index a = 0; a < m; ++a) {
            const double drift = std::abs(s.x.segment(a * n, n).sum() - class_total0(a)) / class_total0(a);
            traj.max_population_drift = std::max(traj.max_population_drift, drift);
        }

        if (k % options.sample_every == 0 || k == steps) {
            traj.samples.push_back(s);
        }
    }
    return traj;
}

/// CSV with header `t,p[a][i]...,x[a][i]...`, one row per sample.
inline void write_trajectory_csv(std::ostream& os, const Trajectory& traj, Index num_nodes, Index num_layers)
{
    os << "t";
    for (const char* name : {"p", "x"}) {
        for (Index a = 0; a < num_layers; ++a) {
            for (Index i = 0; i < num_nodes; ++i) {
                os << ',' << io::column_name(name, a, i);
            }
        }
    }
    os << '\n';
    for (const auto& s : traj.samples) {
        os << io::format_double(s.t);
        for (Index k = 0; k < s.p.size(); ++k) {
            os << ',' << io::format_double(s.p(k));
        }
        for (Index k = 0; k < s.x.size(); ++k) {
            os << ',' << io::format_double(s.x(k));
        }
        os << '\n';
    }
}

} // namespace mlsis
