#pragma once

#include "mlsis/linalg.hpp"
#include "mlsis/types.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace mlsis
{

/// Directed edge of a mobility digraph with its CTMC transition rate (1/time).
struct Edge {
    Index from;
    Index to;
    double rate;
};

/// One class's mobility: a CTMC generator Q over the n patches. The edge set
/// is exactly the positive off-diagonal pattern of Q.
class MobilityLayer
{
public:
    MobilityLayer() = default;

    explicit MobilityLayer(Matrix generator)
        : m_Q(std::move(generator))
    {
        if (m_Q.rows() != m_Q.cols() || m_Q.rows() == 0) {
            throw DomainError("MobilityLayer: generator must be a non-empty square matrix");
        }
    }

    /// Builds Q from (from, to, rate) triples; the diagonal is set to minus the row sum.
    static MobilityLayer from_edges(Index num_nodes, std::span<const Edge> edges)
    {
        if (num_nodes <= 0) {
            throw DomainError("MobilityLayer: node count must be positive");
        }
        Matrix q = Matrix::Zero(num_nodes, num_nodes);
        for (const auto& e : edges) {
            if (e.from < 0 || e.from >= num_nodes || e.to < 0 || e.to >= num_nodes) {
                throw DomainError("MobilityLayer: edge (" + std::to_string(e.from) + ", " + std::to_string(e.to) +
                                  ") out of range");
            }
            if (e.from == e.to) {
                throw DomainError("MobilityLayer: self-loop at node " + std::to_string(e.from));
            }
            if (!(e.rate > 0.0)) {
                throw DomainError("MobilityLayer: edge rates must be positive");
            }
            if (q(e.from, e.to) != 0.0) {
                throw DomainError("MobilityLayer: duplicate edge (" + std::to_string(e.from) + ", " +
                                  std::to_string(e.to) + ")");
            }
            q(e.from, e.to) = e.rate;
        }
        for (Index i = 0; i < num_nodes; ++i) {
            q(i, i) = -q.row(i).sum();
        }
        return MobilityLayer(std::move(q));
    }

    Index size() const
    {
        return m_Q.rows();
    }

    const Matrix& generator() const
    {
        return m_Q;
    }

    double rate(Index i, Index j) const
    {
        return m_Q(i, j);
    }

    /// Total rate of leaving node i, `nu_i = -q_ii`.
    double exit_rate(Index i) const
    {
        return -m_Q(i, i);
    }

    double max_exit_rate() const
    {
        return (-m_Q.diagonal()).maxCoeff();
    }

    std::vector<Edge> edges() const
    {
        std::vector<Edge> out;
        for (Index i = 0; i < size(); ++i) {
            for (Index j = 0; j < size(); ++j) {
                if (i != j && m_Q(i, j) > 0.0) {
                    out.push_back({i, j, m_Q(i, j)});
                }
            }
        }
        return out;
    }

    /// Same chain with every rate multiplied by `factor`.
    MobilityLayer scaled(double factor) const
    {
        return MobilityLayer(m_Q * factor);
    }

    /// Relabels nodes: new node `perm[i]` is old node i.
    MobilityLayer permuted(std::span<const Index> perm) const
    {
        Matrix q(size(), size());
        for (Index i = 0; i < size(); ++i) {
            for (Index j = 0; j < size(); ++j) {
                q(perm[static_cast<size_t>(i)], perm[static_cast<size_t>(j)]) = m_Q(i, j);
            }
        }
        return MobilityLayer(std::move(q));
    }

private:
    Matrix m_Q;
};

/// Outcome of checking a layer against the generator and connectivity requirements.
struct LayerValidation {
    bool square             = false;
    bool row_sums_zero      = false;
    bool sign_pattern_ok    = false;
    bool strongly_connected = false;
    double max_row_sum_error = 0.0;
    std::vector<std::string> issues;

    /// Structurally a generator (dynamics can run on it).
    bool is_generator() const
    {
        return square && row_sums_zero && sign_pattern_ok;
    }

    /// Also irreducible (analysis can run on it).
    bool valid() const
    {
        return is_generator() && strongly_connected;
    }
};

inline constexpr double row_sum_tolerance = 1e-12;

inline LayerValidation validate_layer(const MobilityLayer& layer)
{
    LayerValidation report;
    const Matrix& q = layer.generator();
    report.square   = q.rows() == q.cols();
    if (!report.square) {
        report.issues.push_back("generator is not square");
        return report;
    }
    const Index n = q.rows();

    report.max_row_sum_error = n > 0 ? q.rowwise().sum().cwiseAbs().maxCoeff() : 0.0;
    report.row_sums_zero     = report.max_row_sum_error <= row_sum_tolerance;
    if (!report.row_sums_zero) {
        report.issues.push_back("malformed generator: row sum error " + std::to_string(report.max_row_sum_error));
    }

    report.sign_pattern_ok = true;
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < n; ++j) {
            if (i != j && q(i, j) < 0.0) {
                report.sign_pattern_ok = false;
            }
        }
    }
    if (!report.sign_pattern_ok) {
        report.issues.push_back("malformed generator: negative off-diagonal rate");
    }

    report.strongly_connected = is_strongly_connected(q);
    if (!report.strongly_connected) {
        report.issues.push_back("not strongly connected (generator is reducible)");
    }
    return report;
}

/// Throws unless `layer` is a well-formed generator; with `require_connected`
/// also unless it is irreducible.
inline void require_valid(const MobilityLayer& layer, bool require_connected = true)
{
    const auto report = validate_layer(layer);
    if (!report.is_generator()) {
        throw MalformedGenerator(report.issues.empty() ? "malformed generator" : report.issues.front());
    }
    if (require_connected && !report.strongly_connected) {
        throw AssumptionViolation("mobility layer is not strongly connected");
    }
}

/// Layers sharing one patch set, plus the total population of each class.
class MultiLayerNetwork
{
public:
    MultiLayerNetwork() = default;

    MultiLayerNetwork(std::vector<MobilityLayer> layers, Vector class_populations)
        : m_layers(std::move(layers))
        , m_N(std::move(class_populations))
    {
        if (m_layers.empty()) {
            throw DomainError("MultiLayerNetwork: at least one layer is required");
        }
        if (static_cast<Index>(m_layers.size()) != m_N.size()) {
            throw DomainError("MultiLayerNetwork: one population total per layer is required");
        }
        const Index n = m_layers.front().size();
        for (const auto& layer : m_layers) {
            if (layer.size() != n) {
                throw DomainError("MultiLayerNetwork: all layers must share the same node count");
            }
            require_valid(layer, false);
        }
        if ((m_N.array() <= 0.0).any()) {
            throw DomainError("MultiLayerNetwork: class populations must be positive");
        }
    }

    Index num_nodes() const
    {
        return m_layers.front().size();
    }

    Index num_layers() const
    {
        return static_cast<Index>(m_layers.size());
    }

    Index dim() const
    {
        return num_nodes() * num_layers();
    }

    const std::vector<MobilityLayer>& layers() const
    {
        return m_layers;
    }

    const MobilityLayer& layer(Index alpha) const
    {
        return m_layers[static_cast<size_t>(alpha)];
    }

    const Vector& class_populations() const
    {
        return m_N;
    }

    bool strongly_connected() const
    {
        return std::all_of(m_layers.begin(), m_layers.end(), [](const auto& l) {
            return validate_layer(l).strongly_connected;
        });
    }

    void require_connected() const
    {
        for (Index a = 0; a < num_layers(); ++a) {
            if (!validate_layer(layer(a)).strongly_connected) {
                throw AssumptionViolation("layer " + std::to_string(a) + " is not strongly connected");
            }
        }
    }

    /// Every layer's rates multiplied by `factor`.
    MultiLayerNetwork with_scaled_mobility(double factor) const
    {
        std::vector<MobilityLayer> layers;
        for (const auto& l : m_layers) {
            layers.push_back(l.scaled(factor));
        }
        return MultiLayerNetwork(std::move(layers), m_N);
    }

private:
    std::vector<MobilityLayer> m_layers;
    Vector m_N;
};

/// Stationary law of one chain: `v >> 0`, `1^T v = 1`, `Q^T v = 0`.
inline Vector stationary_distribution(const MobilityLayer& layer)
{
    require_valid(layer, true);
    const Matrix& q = layer.generator();
    Vector v        = stationary_null_vector(q);

    const double scale    = std::max(q.cwiseAbs().maxCoeff(), 1.0);
    const double residual = (q.transpose() * v).cwiseAbs().maxCoeff();
    if (residual > 1e-12 * scale) {
        throw ConvergenceError("stationary_distribution: null-space residual too large", residual);
    }
    if ((v.array() <= 0.0).any()) {
        throw AssumptionViolation("stationary_distribution: null vector is not strictly positive");
    }
    return v;
}

/// Per-layer stationary laws and the stacked population vector `[N^1 v^1; ...; N^m v^m]`.
struct StationaryDistribution {
    std::vector<Vector> per_layer;
    Vector v;
};

inline StationaryDistribution stationary_populations(const MultiLayerNetwork& net)
{
    StationaryDistribution out;
    const Index n = net.num_nodes();
    out.v         = Vector(net.dim());
    for (Index a = 0; a < net.num_layers(); ++a) {
        out.per_layer.push_back(stationary_distribution(net.layer(a)));
        out.v.segment(a * n, n) = net.class_populations()(a) * out.per_layer.back();
    }
    return out;
}

// ---- undirected graph presets ----

struct UndirectedGraph {
    Index num_nodes = 0;
    std::vector<std::pair<Index, Index>> edges;

    std::vector<Index> degrees() const
    {
        std::vector<Index> d(static_cast<size_t>(num_nodes), 0);
        for (auto [i, j] : edges) {
            ++d[static_cast<size_t>(i)];
            ++d[static_cast<size_t>(j)];
        }
        return d;
    }

    Matrix adjacency() const
    {
        Matrix a = Matrix::Zero(num_nodes, num_nodes);
        for (auto [i, j] : edges) {
            a(i, j) = a(j, i) = 1.0;
        }
        return a;
    }

    bool connected() const
    {
        return is_strongly_connected(adjacency());
    }
};

inline UndirectedGraph complete_graph(Index n)
{
    UndirectedGraph g{n, {}};
    for (Index i = 0; i < n; ++i) {
        for (Index j = i + 1; j < n; ++j) {
            g.edges.emplace_back(i, j);
        }
    }
    return g;
}

inline UndirectedGraph line_graph(Index n)
{
    UndirectedGraph g{n, {}};
    for (Index i = 0; i + 1 < n; ++i) {
        g.edges.emplace_back(i, i + 1);
    }
    return g;
}

inline UndirectedGraph ring_graph(Index n)
{
    UndirectedGraph g = line_graph(n);
    if (n >= 3) {
        g.edges.emplace_back(n - 1, 0);
    }
    return g;
}

/// Star with hub at node 0.
inline UndirectedGraph star_graph(Index n)
{
    UndirectedGraph g{n, {}};
    for (Index i = 1; i < n; ++i) {
        g.edges.emplace_back(0, i);
    }
    return g;
}

/// Preset by name: "complete", "line", "ring", "star".
inline UndirectedGraph graph_preset(const std::string& name, Index n)
{
    if (n <= 0) {
        throw DomainError("graph_preset: node count must be positive");
    }
    if (name == "complete") {
        return complete_graph(n);
    }
    if (name == "line") {
        return line_graph(n);
    }
    if (name == "ring") {
        return ring_graph(n);
    }
    if (name == "star") {
        return star_graph(n);
    }
    throw DomainError("graph_preset: unknown preset '" + name + "'");
}

/// Random walk that leaves node i at total rate nu and picks a neighbor
/// uniformly: `q_ij = nu / d_i`.
inline MobilityLayer uniform_out_rates(const UndirectedGraph& graph, double rate_scale)
{
    if (!(rate_scale > 0.0)) {
        throw DomainError("uniform_out_rates: rate scale must be positive");
    }
    if (!graph.connected()) {
        throw AssumptionViolation("uniform_out_rates: graph is not connected");
    }
    const auto deg = graph.degrees();
    std::vector<Edge> edges;
    for (auto [i, j] : graph.edges) {
        edges.push_back({i, j, rate_scale / static_cast<double>(deg[static_cast<size_t>(i)])});
        edges.push_back({j, i, rate_scale / static_cast<double>(deg[static_cast<size_t>(j)])});
    }
    return MobilityLayer::from_edges(graph.num_nodes, edges);
}

/// Metropolis-Hastings rates with a uniform-over-neighbors proposal:
/// `q_ij = nu * (1/d_i) * min(1, (pi_j d_i) / (pi_i d_j))`. The resulting
/// chain is reversible with stationary law `target`.
inline MobilityLayer metropolis_hastings_rates(const UndirectedGraph& graph, const Vector& target, double rate_scale)
{
    if (target.size() != graph.num_nodes) {
        throw DomainError("metropolis_hastings_rates: target length must equal node count");
    }
    if ((target.array() <= 0.0).any()) {
        throw DomainError("metropolis_hastings_rates: target must be strictly positive");
    }
    if (std::abs(target.sum() - 1.0) > 1e-9) {
        throw DomainError("metropolis_hastings_rates: target must sum to one");
    }
    if (!(rate_scale > 0.0)) {
        throw DomainError("metropolis_hastings_rates: rate scale must be positive");
    }
    if (!graph.connected()) {
        throw AssumptionViolation("metropolis_hastings_rates: graph is not connected");
    }
    const auto deg = graph.degrees();
    auto rate      = [&](Index i, Index j) {
        const double di = static_cast<double>(deg[static_cast<size_t>(i)]);
        const double dj = static_cast<double>(deg[static_cast<size_t>(j)]);
        return rate_scale / di * std::min(1.0, (target(j) * di) / (target(i) * dj));
    };
    std::vector<Edge> edges;
    for (auto [i, j] : graph.edges) {
        edges.push_back({i, j, rate(i, j)});
        edges.push_back({j, i, rate(j, i)});
    }
    return MobilityLayer::from_edges(graph.num_nodes, edges);
}

/// Symmetric rates `q_ij = nu * min(1/d_i, 1/d_j)`, i.e. Metropolis-Hastings
/// towards the uniform law. On a complete graph this is `nu / (n - 1)`.
inline MobilityLayer symmetric_rates(const UndirectedGraph& graph, double rate_scale)
{
    return metropolis_hastings_rates(graph, Vector::Constant(graph.num_nodes, 1.0 / graph.num_nodes), rate_scale);
}

} // namespace mlsis
