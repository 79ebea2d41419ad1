#pragma once

#include "mlsis/dynamics.hpp"
#include "mlsis/io.hpp"
#include "mlsis/types.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <random>
#include <string>
#include <vector>

namespace mlsis
{

using CountMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;

/// Integer susceptible and infected counts, each n x m (node, class).
struct AgentCounts {
    CountMatrix susceptible;
    CountMatrix infected;

    Index num_nodes() const
    {
        return susceptible.rows();
    }
    Index num_layers() const
    {
        return susceptible.cols();
    }

    CountMatrix population() const
    {
        return susceptible + infected;
    }

    /// Per-class totals summed over nodes.
    Eigen::Matrix<std::int64_t, Eigen::Dynamic, 1> class_totals() const
    {
        return population().colwise().sum().transpose();
    }

    bool operator==(const AgentCounts& o) const
    {
        return susceptible == o.susceptible && infected == o.infected;
    }
};

/// Generator behind every stochastic run. A 64-bit Mersenne Twister seeded
/// from the run seed; binomial variates come from std::binomial_distribution,
/// so runs are bit-reproducible for a given standard library.
using Rng = std::mt19937_64;

/// Integer realization of (x0, p0): class populations are rounded by largest
/// remainder so each class keeps its rounded total, infected counts are
/// `round(p0 * population)`.
inline AgentCounts initial_counts(const ModelSpec& spec, const Vector& x0, const Vector& p0)
{
    const Index n = spec.num_nodes();
    const Index m = spec.num_layers();
    if (x0.size() != n * m || p0.size() != n * m) {
        throw DomainError("initial_counts: x0 and p0 must have length n*m");
    }
    if ((x0.array() < 0.0).any() || (p0.array() < 0.0).any() || (p0.array() > 1.0).any()) {
        throw DomainError("initial_counts: x0 must be nonnegative and p0 in [0, 1]");
    }
    AgentCounts c{CountMatrix::Zero(n, m), CountMatrix::Zero(n, m)};
    for (Index a = 0; a < m; ++a) {
        const auto xa        = x0.segment(a * n, n);
        const double total   = xa.sum();
        const auto target    = static_cast<std::int64_t>(std::llround(total));
        std::vector<std::int64_t> pop(static_cast<size_t>(n));
        std::vector<std::pair<double, Index>> remainder;
        std::int64_t assigned = 0;
        for (Index i = 0; i < n; ++i) {
            const double fl            = std::floor(xa(i));
            pop[static_cast<size_t>(i)] = static_cast<std::int64_t>(fl);
            assigned += pop[static_cast<size_t>(i)];
            remainder.emplace_back(xa(i) - fl, i);
        }
        std::stable_sort(remainder.begin(), remainder.end(),
                         [](const auto& l, const auto& r) { return l.first > r.first; });
        for (size_t k = 0; assigned < target && k < remainder.size(); ++k, ++assigned) {
            ++pop[static_cast<size_t>(remainder[k].second)];
        }
        for (Index i = 0; i < n; ++i) {
            const auto total_i = pop[static_cast<size_t>(i)];
            const auto inf     = std::min<std::int64_t>(
                total_i, static_cast<std::int64_t>(std::llround(p0(a * n + i) * static_cast<double>(total_i))));
            c.infected(i, a)    = inf;
            c.susceptible(i, a) = total_i - inf;
        }
    }
    return c;
}

/// Stacked class populations as an nm-vector (same layout as SystemState::x).
inline Vector population_vector(const AgentCounts& c)
{
    const Index n = c.num_nodes();
    Vector x(n * c.num_layers());
    for (Index a = 0; a < c.num_layers(); ++a) {
        for (Index i = 0; i < n; ++i) {
            x(a * n + i) = static_cast<double>(c.susceptible(i, a) + c.infected(i, a));
        }
    }
    return x;
}

/// `I / (S + I)` per (class, node), NaN where the sub-population is empty.
inline Vector infected_fraction(const AgentCounts& c)
{
    const Index n = c.num_nodes();
    Vector p(n * c.num_layers());
    for (Index a = 0; a < c.num_layers(); ++a) {
        for (Index i = 0; i < n; ++i) {
            const auto tot = c.susceptible(i, a) + c.infected(i, a);
            p(a * n + i)   = tot > 0 ? static_cast<double>(c.infected(i, a)) / static_cast<double>(tot)
                                     : std::numeric_limits<double>::quiet_NaN();
        }
    }
    return p;
}

/// Node-level infected fraction (all classes pooled), averaged over the non-empty nodes.
inline double mean_node_infected_fraction(const AgentCounts& c)
{
    double sum  = 0.0;
    Index nodes = 0;
    for (Index i = 0; i < c.num_nodes(); ++i) {
        const auto tot = c.susceptible.row(i).sum() + c.infected.row(i).sum();
        if (tot > 0) {
            sum += static_cast<double>(c.infected.row(i).sum()) / static_cast<double>(tot);
            ++nodes;
        }
    }
    return nodes > 0 ? sum / static_cast<double>(nodes) : 0.0;
}

inline void check_step_size(const ModelSpec& spec, double h)
{
    if (!(h >= 0.0)) {
        throw StepSizeError("step size must be non-negative");
    }
    for (Index a = 0; a < spec.num_layers(); ++a) {
        if (spec.network().layer(a).max_exit_rate() * h > 1.0) {
            throw StepSizeError("h * nu exceeds 1 in layer " + std::to_string(a));
        }
    }
    if (spec.beta().maxCoeff() * h > 1.0) {
        throw StepSizeError("h * beta exceeds 1");
    }
    if (spec.delta().maxCoeff() * h > 1.0) {
        throw StepSizeError("h * delta exceeds 1");
    }
}

namespace detail
{
inline std::int64_t binomial(Rng& rng, std::int64_t trials, double prob)
{
    if (trials <= 0 || prob <= 0.0) {
        return 0;
    }
    if (prob >= 1.0) {
        return trials;
    }
    return std::binomial_distribution<std::int64_t>(trials, prob)(rng);
}

/// Relocates `count` individuals from node i: Binomial(count, nu_i h) leave,
/// then the leavers are split over destinations in proportion to q_ij.
/// Together this is one multinomial draw with stay probability `1 - nu_i h`.
inline void relocate(const MobilityLayer& layer, Index i, std::int64_t count, double h, Rng& rng,
                     Eigen::Ref<Eigen::Matrix<std::int64_t, Eigen::Dynamic, 1>> dest)
{
    const double nu      = layer.exit_rate(i);
    std::int64_t movers  = binomial(rng, count, nu * h);
    dest(i) += count - movers;
    double rate_left = nu;
    const Index n    = layer.size();
    for (Index j = 0; j < n && movers > 0; ++j) {
        const double q = j == i ? 0.0 : layer.rate(i, j);
        if (q <= 0.0) {
            continue;
        }
        const std::int64_t k = q >= rate_left ? movers : binomial(rng, movers, q / rate_left);
        dest(j) += k;
        movers -= k;
        rate_left -= q;
    }
    // rounding in rate_left can leave a remainder; it stays put
    dest(i) += movers;
}
} // namespace detail

/// One step of length h: every individual relocates per its class's CTMC,
/// then SIS acts on the post-move populations. A susceptible at node i is
/// infected with probability `beta_i pbar_i h`, an infected recovers with
/// probability `delta_i h`.
inline AgentCounts step(const ModelSpec& spec, const AgentCounts& counts, double h, Rng& rng)
{
    check_step_size(spec, h);
    const Index n = spec.num_nodes();
    const Index m = spec.num_layers();
    if (counts.num_nodes() != n || counts.num_layers() != m) {
        throw DomainError("step: count matrices must be n x m");
    }

    AgentCounts moved{CountMatrix::Zero(n, m), CountMatrix::Zero(n, m)};
    for (Index a = 0; a < m; ++a) {
        const auto& layer = spec.network().layer(a);
        for (Index i = 0; i < n; ++i) {
            detail::relocate(layer, i, counts.susceptible(i, a), h, rng, moved.susceptible.col(a));
            detail::relocate(layer, i, counts.infected(i, a), h, rng, moved.infected.col(a));
        }
    }

    for (Index i = 0; i < n; ++i) {
        const auto infected = moved.infected.row(i).sum();
        const auto total    = infected + moved.susceptible.row(i).sum();
        if (total == 0) {
            continue;
        }
        const double pbar = static_cast<double>(infected) / static_cast<double>(total);
        for (Index a = 0; a < m; ++a) {
            const auto new_inf = detail::binomial(rng, moved.susceptible(i, a), spec.beta()(i) * pbar * h);
            const auto rec     = detail::binomial(rng, moved.infected(i, a), spec.delta()(i) * h);
            moved.susceptible(i, a) += rec - new_inf;
            moved.infected(i, a) += new_inf - rec;
        }
    }
    return moved;
}

struct StochasticSample {
    double t = 0.0;
    AgentCounts counts;
};

struct StochasticRun {
    std::uint64_t seed = 0;
    double h           = 0.01;
    double t_end       = 0.0;
    Index steps        = 0;
    Index sample_every = 1;
    std::vector<StochasticSample> samples;
};

inline StochasticRun simulate(const ModelSpec& spec, const AgentCounts& initial, double t_end, double h,
                              std::uint64_t seed, Index sample_every = 1)
{
    check_step_size(spec, h);
    if (!(h > 0.0)) {
        throw StepSizeError("simulate: h must be positive");
    }
    if (sample_every < 1) {
        throw DomainError("simulate: sample_every must be at least 1");
    }
    if ((initial.susceptible.array() < 0).any() || (initial.infected.array() < 0).any()) {
        throw DomainError("simulate: counts must be nonnegative");
    }
    StochasticRun run;
    run.seed         = seed;
    run.h            = h;
    run.t_end        = t_end;
    run.steps        = step_count(t_end, h);
    run.sample_every = sample_every;
    run.samples.push_back({0.0, initial});

    Rng rng(seed);
    AgentCounts state = initial;
    for (Index k = 1; k <= run.steps; ++k) {
        state = step(spec, state, h, rng);
        if (k % sample_every == 0 || k == run.steps) {
            run.samples.push_back({static_cast<double>(k) * h, state});
        }
    }
    return run;
}

/// Deterministic CSV layout followed by `S[a][i]...,I[a][i]...` count columns;
/// empty sub-populations have p = nan.
inline void write_stochastic_csv(std::ostream& os, const StochasticRun& run)
{
    if (run.samples.empty()) {
        return;
    }
    const Index n = run.samples.front().counts.num_nodes();
    const Index m = run.samples.front().counts.num_layers();
    os << "t";
    for (const char* name : {"p", "x", "S", "I"}) {
        for (Index a = 0; a < m; ++a) {
            for (Index i = 0; i < n; ++i) {
                os << ',' << io::column_name(name, a, i);
            }
        }
    }
    os << '\n';
    for (const auto& s : run.samples) {
        os << io::format_double(s.t);
        const Vector p = infected_fraction(s.counts);
        for (Index k = 0; k < p.size(); ++k) {
            os << ',' << io::format_double(p(k));
        }
        for (Index a = 0; a < m; ++a) {
            for (Index i = 0; i < n; ++i) {
                os << ',' << (s.counts.susceptible(i, a) + s.counts.infected(i, a));
            }
        }
        for (const CountMatrix* c : {&s.counts.susceptible, &s.counts.infected}) {
            for (Index a = 0; a < m; ++a) {
                for (Index i = 0; i < n; ++i) {
                    os << ',' << (*c)(i, a);
                }
            }
        }
        os << '\n';
    }
}

inline nlohmann::json run_metadata(const StochasticRun& run)
{
    return {{"seed", run.seed},
            {"h", run.h},
            {"t_end", run.t_end},
            {"steps", run.steps},
            {"sample_every", run.sample_every},
            {"rng", "std::mt19937_64"},
            {"binomial_sampler", "std::binomial_distribution<int64_t>"}};
}

} // namespace mlsis
