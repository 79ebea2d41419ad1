#pragma once

#include "mlsis/dynamics.hpp"
#include "mlsis/linalg.hpp"
#include "mlsis/network.hpp"
#include "mlsis/spectral.hpp"
#include "mlsis/types.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mlsis
{

/// Matrices evaluated at the stationary population x* = v.
struct DerivedMatrices {
    StationaryDistribution stationary;
    Matrix F;    ///< F* = F(v)
    Matrix L;    ///< L* = L(v)
    Matrix M;    ///< I - F*
    Vector b;    ///< diagonal of B
    Vector d;    ///< diagonal of D
    Matrix jacobian; ///< `B F* - D - L*`, the linearization of the p-dynamics at the DFE
    std::optional<Matrix> A; ///< `(L* + D)^{-1} B`, present when some delta_i > 0
};

inline DerivedMatrices derive(const ModelSpec& spec)
{
    spec.network().require_connected();
    DerivedMatrices out;
    out.stationary  = stationary_populations(spec.network());
    auto mats       = assemble(spec, out.stationary.v);
    out.F           = std::move(mats.F);
    out.L           = std::move(mats.L);
    out.M           = std::move(mats.M);
    out.b           = spec.beta_stacked();
    out.d           = spec.delta_stacked();
    out.jacobian    = out.b.asDiagonal() * out.F;
    out.jacobian   -= Matrix(out.d.asDiagonal()) + out.L;
    if (spec.has_recovery()) {
        const Matrix ld = out.L + Matrix(out.d.asDiagonal());
        out.A           = Eigen::PartialPivLU<Matrix>(ld).solve(Matrix(out.b.asDiagonal()));
    }
    return out;
}

/// `H(p) = (I + A (P + (I - P) M))^{-1} A p`; its fixed points in (0, 1]^{nm}
/// are endemic equilibria.
inline Vector fixed_point_map(const DerivedMatrices& derived, const Vector& p)
{
    if (!derived.A) {
        throw DomainError("fixed_point_map: requires at least one positive recovery rate");
    }
    const Matrix& a = *derived.A;
    const Index nm  = a.rows();
    if (p.size() != nm) {
        throw DomainError("fixed_point_map: p has wrong length");
    }
    const Matrix pm = Matrix(p.asDiagonal()) + (Vector::Ones(nm) - p).asDiagonal() * derived.M;
    const Matrix k  = Matrix::Identity(nm, nm) + a * pm;
    return Eigen::PartialPivLU<Matrix>(k).solve(a * p);
}

struct FixedPointOptions {
    double step_tol       = 1e-10;
    Index max_iterations  = 100000;
    double residual_tol   = 1e-8;
    int newton_steps      = 3;
};

struct FixedPointResult {
    Vector p;
    Index iterations = 0;
    double residual  = 0.0; ///< `||dp/dt||_inf` at (p, v)
    bool monotone    = true; ///< every iterate was entrywise <= the previous one (to 1e-12)
};

/// Endemic equilibrium `(B F* - D - L* - P* B F*) p* = 0` by iterating H from p = 1.
inline FixedPointResult endemic_fixed_point(const ModelSpec& spec, const DerivedMatrices& derived,
                                            const FixedPointOptions& opts = {})
{
    if (!derived.A) {
        throw DomainError("endemic_fixed_point: requires at least one positive recovery rate");
    }
    const double mu = spectral_abscissa(derived.jacobian).mu;
    if (!(mu > 0.0)) {
        throw DomainError("endemic_fixed_point: no endemic equilibrium exists when mu <= 0 (mu = " +
                          std::to_string(mu) + ")");
    }

    FixedPointResult out;
    out.p = Vector::Ones(spec.dim());
    double step = 0.0;
    for (out.iterations = 1; out.iterations <= opts.max_iterations; ++out.iterations) {
        Vector next = fixed_point_map(derived, out.p);
        if ((next.array() > out.p.array() + 1e-12).any()) {
            out.monotone = false;
        }
        step  = (next - out.p).cwiseAbs().maxCoeff();
        out.p = std::move(next);
        if (step <= opts.step_tol) {
            break;
        }
    }
    if (step > opts.step_tol) {
        throw ConvergenceError("endemic_fixed_point: iteration cap reached", step);
    }

    // The step rule bounds the error only up to the contraction factor, which
    // approaches 1 near threshold. A few Newton steps on the equilibrium
    // equation remove the remainder; a step is kept only if it lowers the residual.
    const Vector& v = derived.stationary.v;
    auto residual   = [&](const Vector& p) { return rhs(spec, {0.0, p, v}).dp; };
    Vector r        = residual(out.p);
    out.residual    = r.cwiseAbs().maxCoeff();
    for (int k = 0; k < opts.newton_steps && out.residual > 0.0; ++k) {
        const Vector bfp = derived.b.cwiseProduct(derived.F * out.p);
        const Matrix jac = derived.jacobian - Matrix(bfp.asDiagonal()) -
                           out.p.cwiseProduct(derived.b).asDiagonal() * derived.F;
        const Vector candidate = out.p - Eigen::PartialPivLU<Matrix>(jac).solve(r);
        if (!candidate.allFinite() || (candidate.array() <= 0.0).any() || (candidate.array() > 1.0).any()) {
            break;
        }
        const Vector rc   = residual(candidate);
        const double norm = rc.cwiseAbs().maxCoeff();
        if (!(norm < out.residual)) {
            break;
        }
        out.p        = candidate;
        r            = rc;
        out.residual = norm;
    }
    if (out.residual > opts.residual_tol) {
        throw ConvergenceError("endemic_fixed_point: equilibrium residual too large", out.residual);
    }
    return out;
}

/// Quantities of the lambda_2 sufficient condition.
struct Lambda2Condition {
    bool applicable = false; ///< false when every recovery deficit is equal (the bound needs a nonzero perturbation)
    bool holds      = false;
    Vector w;                ///< positive left null vector of `B M + L*`, max entry 1
    double lambda2      = 0.0;
    double s            = 0.0; ///< `min_i (delta_i - beta_i)`
    double deficit_mass = 0.0; ///< `sum_k w_k (delta_k - beta_k - s)`
    double bound        = 0.0; ///< left-hand side of the condition, minus s
};

struct ConditionReport {
    std::vector<bool> nec_per_node; ///< per node: some class has `delta_i > beta_i - nu^a_i`
    bool nec_all_nodes = false;     ///< every entry of nec_per_node
    bool nec_exists    = false;     ///< some node with `delta_i >= beta_i`
    bool suf_all       = false;     ///< `delta_i >= beta_i` at every node
    Lambda2Condition suf_lambda2;
    double s_lower = 0.0;           ///< `-lambda_2 / (4 m n + 1)`
    Index i_star   = 0;             ///< node attaining s
};

namespace detail
{
inline Lambda2Condition lambda2_quantities(const DerivedMatrices& derived)
{
    const Index nm  = derived.M.rows();
    const Matrix k  = derived.b.asDiagonal() * derived.M + derived.L;
    Lambda2Condition out;

    // -k has zero row sums and nonnegative off-diagonals: its stationary
    // vector is the left null vector of k.
    Vector w = stationary_null_vector(-k);
    if ((w.array() <= 0.0).any()) {
        throw AssumptionViolation("lambda2 condition: B M + L* has no positive left null vector");
    }
    out.w = w / w.maxCoeff();

    if (nm >= 2) {
        const Matrix wk  = out.w.asDiagonal() * k;
        const Vector eig = symmetric_eigenvalues(0.5 * (wk + wk.transpose()));
        out.lambda2      = eig(1);
    }
    return out;
}
} // namespace detail

inline ConditionReport corollary_conditions(const ModelSpec& spec, const DerivedMatrices& derived)
{
    const Index n   = spec.num_nodes();
    const Index m   = spec.num_layers();
    const Vector& b = spec.beta();
    const Vector& d = spec.delta();

    ConditionReport out;
    out.nec_per_node.assign(static_cast<size_t>(n), false);
    for (Index i = 0; i < n; ++i) {
        for (Index a = 0; a < m; ++a) {
            if (d(i) > b(i) - spec.network().layer(a).exit_rate(i)) {
                out.nec_per_node[static_cast<size_t>(i)] = true;
            }
        }
    }
    out.nec_all_nodes = std::all_of(out.nec_per_node.begin(), out.nec_per_node.end(), [](bool x) { return x; });
    out.nec_exists    = ((d - b).array() >= 0.0).any();
    out.suf_all       = ((d - b).array() >= 0.0).all();

    auto& l2 = out.suf_lambda2;
    l2       = detail::lambda2_quantities(derived);
    const Vector gap = derived.d - derived.b;
    l2.s             = gap.minCoeff(&out.i_star);
    out.i_star %= n;
    l2.deficit_mass = out.suf_lambda2.w.dot((gap.array() - l2.s).matrix());
    out.s_lower     = -l2.lambda2 / (4.0 * static_cast<double>(m * n) + 1.0);

    l2.applicable = l2.deficit_mass > 0.0 && spec.dim() >= 2;
    if (l2.applicable) {
        const double root = 1.0 + std::sqrt(1.0 + l2.lambda2 / l2.deficit_mass);
        l2.bound          = l2.lambda2 / (root * root * static_cast<double>(spec.dim()) + 1.0);
        l2.holds          = l2.bound + l2.s >= 0.0;
    }
    return out;
}

enum class Classification { DfeStable, Critical, DfeUnstableEeExists };

inline std::string to_string(Classification c)
{
    switch (c) {
    case Classification::DfeStable:
        return "DFE_stable";
    case Classification::Critical:
        return "critical";
    case Classification::DfeUnstableEeExists:
        return "DFE_unstable_EE_exists";
    }
    return "unknown";
}

/// |mu| at or below this is reported as critical rather than classified.
inline constexpr double critical_mu_tolerance = 1e-10;

struct EquilibriumReport {
    Vector v;
    double mu = 0.0;
    std::optional<double> R0;
    Classification classification = Classification::DfeStable;
    std::optional<Vector> p_star;
    double p_star_residual       = 0.0;
    Index fixed_point_iterations = 0;
    ConditionReport conditions;
};

inline EquilibriumReport classify(const ModelSpec& spec)
{
    const auto derived = derive(spec);

    EquilibriumReport out;
    out.v  = derived.stationary.v;
    out.mu = spectral_abscissa(derived.jacobian).mu;
    if (derived.A) {
        out.R0 = spectral_radius(*derived.A * derived.F).rho;
    }

    if (std::abs(out.mu) <= critical_mu_tolerance) {
        out.classification = Classification::Critical;
    }
    else if (out.mu < 0.0) {
        out.classification = Classification::DfeStable;
    }
    else {
        out.classification = Classification::DfeUnstableEeExists;
        if (derived.A) {
            const auto fp              = endemic_fixed_point(spec, derived);
            out.p_star                 = fp.p;
            out.p_star_residual        = fp.residual;
            out.fixed_point_iterations = fp.iterations;
        }
        else {
            // without recovery everyone ends up infected
            out.p_star = Vector::Ones(spec.dim());
        }
    }
    out.conditions = corollary_conditions(spec, derived);
    return out;
}

/// Recovery rates built to satisfy the lambda_2 condition: nodes in
/// `deficit_nodes` get `beta_i + s` with `s = s_factor * s_lower`, every
/// other node gets `beta_i + s + c` with the smallest uniform surplus c for
/// which the condition holds.
struct RecoveryDesign {
    Vector delta;
    double lambda2 = 0.0;
    double s_lower = 0.0;
    double s       = 0.0;
    double surplus = 0.0;
};

inline RecoveryDesign design_lambda2_recovery(const MultiLayerNetwork& net, const Vector& beta, double s_factor,
                                              std::span<const Index> deficit_nodes, int round_up_decimals = -1)
{
    if (!(s_factor > 0.0 && s_factor < 1.0)) {
        throw DomainError("design_lambda2_recovery: s_factor must lie in (0, 1)");
    }
    const Index n  = net.num_nodes();
    const Index m  = net.num_layers();
    const Index nm = n * m;
    if (nm < 2) {
        throw DomainError("design_lambda2_recovery: needs at least two nodes or classes");
    }
    std::vector<char> is_deficit(static_cast<size_t>(n), 0);
    for (Index i : deficit_nodes) {
        if (i < 0 || i >= n) {
            throw DomainError("design_lambda2_recovery: deficit node out of range");
        }
        is_deficit[static_cast<size_t>(i)] = 1;
    }

    // B, M, L* do not depend on delta
    const ModelSpec probe(net, beta, Vector::Ones(n));
    const auto l2 = detail::lambda2_quantities(derive(probe));

    RecoveryDesign out;
    out.lambda2 = l2.lambda2;
    out.s_lower = -l2.lambda2 / (4.0 * static_cast<double>(nm) + 1.0);
    out.s       = s_factor * out.s_lower;

    // lambda2 / ((1 + sqrt(1 + lambda2/S))^2 nm + 1) >= -s  <=>  S >= lambda2 / ((sqrt(T/nm) - 1)^2 - 1),
    // T = lambda2/(-s) - 1; s > s_lower makes the denominator positive.
    const double t      = l2.lambda2 / (-out.s) - 1.0;
    const double r      = std::sqrt(t / static_cast<double>(nm)) - 1.0;
    const double needed = l2.lambda2 / (r * r - 1.0);

    double free_weight = 0.0;
    for (Index a = 0; a < m; ++a) {
        for (Index i = 0; i < n; ++i) {
            if (!is_deficit[static_cast<size_t>(i)]) {
                free_weight += l2.w(flat_index(a, i, n));
            }
        }
    }
    if (!(free_weight > 0.0)) {
        throw DomainError("design_lambda2_recovery: every node is a deficit node");
    }
    out.surplus = needed / free_weight * (1.0 + 1e-12);

    out.delta = Vector(n);
    for (Index i = 0; i < n; ++i) {
        double di = beta(i) + out.s;
        if (!is_deficit[static_cast<size_t>(i)]) {
            di += out.surplus;
            if (round_up_decimals >= 0) {
                const double scale = std::pow(10.0, round_up_decimals);
                di                 = std::ceil(di * scale) / scale;
            }
        }
        out.delta(i) = di;
    }
    return out;
}

// ---- JSON serialization ----

inline nlohmann::json vector_json(const Vector& v)
{
    return std::vector<double>(v.data(), v.data() + v.size());
}

inline nlohmann::json to_json(const ConditionReport& c)
{
    nlohmann::json j;
    j["nec_per_node"]  = c.nec_per_node;
    j["nec_all_nodes"] = c.nec_all_nodes;
    j["nec_exists"]    = c.nec_exists;
    j["suf_all"]       = c.suf_all;
    const auto& l2     = c.suf_lambda2;
    j["suf_lambda2"]   = {{"applicable", l2.applicable},
                          {"holds", l2.holds},
                          {"lambda2", l2.lambda2},
                          {"s", l2.s},
                          {"w", vector_json(l2.w)},
                          {"deficit_mass", l2.deficit_mass},
                          {"bound", l2.bound}};
    j["s_lower"]       = c.s_lower;
    j["i_star"]        = c.i_star;
    return j;
}

inline nlohmann::json to_json(const EquilibriumReport& r)
{
    nlohmann::json j;
    j["v"]              = vector_json(r.v);
    j["mu"]             = r.mu;
    j["R0"]             = r.R0 ? nlohmann::json(*r.R0) : nlohmann::json(nullptr);
    j["classification"] = to_string(r.classification);
    j["p_star"]         = r.p_star ? vector_json(*r.p_star) : nlohmann::json(nullptr);
    j["p_star_residual"]        = r.p_star ? nlohmann::json(r.p_star_residual) : nlohmann::json(nullptr);
    j["fixed_point_iterations"] = r.fixed_point_iterations;
    j["conditions"]             = to_json(r.conditions);
    return j;
}

} // namespace mlsis
