#include "random_instances.hpp"

#include <gtest/gtest.h>

#include <Eigen/LU>

using namespace mlsis;
using mlsis::testing::Gen;

namespace
{

Matrix mat2(double a, double b, double c, double d)
{
    Matrix m(2, 2);
    m << a, b, c, d;
    return m;
}

// Dense oracle: kernel of Q^T from a full-pivot LU, scaled to a probability vector.
Vector kernel_oracle(const Matrix& q)
{
    Eigen::FullPivLU<Matrix> lu(q.transpose());
    const Matrix k = lu.kernel();
    EXPECT_EQ(k.cols(), 1);
    Vector v = k.col(0);
    return v / v.sum();
}

} // namespace

TEST(ValidateLayer, SymmetricTwoNodeChainIsValid)
{
    const auto r = validate_layer(MobilityLayer(mat2(-0.2, 0.2, 0.2, -0.2)));
    EXPECT_TRUE(r.is_generator());
    EXPECT_TRUE(r.strongly_connected);
    EXPECT_TRUE(r.issues.empty());
}

TEST(ValidateLayer, AbsorbingNodeIsNotStronglyConnected)
{
    const MobilityLayer layer(mat2(-0.2, 0.2, 0.0, 0.0));
    const auto r = validate_layer(layer);
    EXPECT_TRUE(r.is_generator());
    EXPECT_FALSE(r.strongly_connected);
    EXPECT_THROW(require_valid(layer), AssumptionViolation);
    EXPECT_NO_THROW(require_valid(layer, false));
}

TEST(ValidateLayer, RowSumViolationIsMalformed)
{
    const MobilityLayer layer(mat2(-0.2, 0.2, 0.2, -0.2 + 1e-9));
    const auto r = validate_layer(layer);
    EXPECT_FALSE(r.row_sums_zero);
    EXPECT_THROW(require_valid(layer), MalformedGenerator);

    // within tolerance
    EXPECT_TRUE(validate_layer(MobilityLayer(mat2(-0.2, 0.2, 0.2, -0.2 + 1e-14))).row_sums_zero);
}

TEST(ValidateLayer, NegativeOffDiagonalIsMalformed)
{
    Matrix q(3, 3);
    q << -0.1, 0.2, -0.1, 0.1, -0.2, 0.1, 0.1, 0.1, -0.2;
    const auto r = validate_layer(MobilityLayer(q));
    EXPECT_FALSE(r.sign_pattern_ok);
    EXPECT_FALSE(r.is_generator());
}

TEST(ValidateLayer, CompleteGraphUniformRates)
{
    const Index n    = 20;
    const auto layer = uniform_out_rates(complete_graph(n), 0.2);
    EXPECT_TRUE(validate_layer(layer).strongly_connected);
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < n; ++j) {
            if (i != j) {
                EXPECT_DOUBLE_EQ(layer.rate(i, j), 0.2 / 19.0);
            }
        }
        EXPECT_NEAR(layer.exit_rate(i), 0.2, 1e-15);
    }
}

TEST(MobilityLayer, FromEdgesRejectsBadInput)
{
    const std::vector<Edge> self{{0, 0, 1.0}};
    const std::vector<Edge> range{{0, 2, 1.0}};
    const std::vector<Edge> neg{{0, 1, -1.0}};
    const std::vector<Edge> dup{{0, 1, 1.0}, {0, 1, 2.0}};
    EXPECT_THROW(MobilityLayer::from_edges(2, self), DomainError);
    EXPECT_THROW(MobilityLayer::from_edges(2, range), DomainError);
    EXPECT_THROW(MobilityLayer::from_edges(2, neg), DomainError);
    EXPECT_THROW(MobilityLayer::from_edges(2, dup), DomainError);
}

TEST(MobilityLayer, FromEdgesSetsDiagonal)
{
    const std::vector<Edge> e{{0, 1, 0.3}, {1, 0, 0.1}, {1, 2, 0.2}, {2, 0, 0.5}};
    const auto layer = MobilityLayer::from_edges(3, e);
    EXPECT_DOUBLE_EQ(layer.exit_rate(1), 0.3);
    EXPECT_EQ(layer.edges().size(), 4u);
    EXPECT_TRUE(validate_layer(layer).strongly_connected);
}

TEST(StationaryDistribution, CompleteGraphIsUniform)
{
    const auto v = stationary_distribution(uniform_out_rates(complete_graph(7), 0.4));
    for (Index i = 0; i < 7; ++i) {
        EXPECT_NEAR(v(i), 1.0 / 7.0, 1e-14);
    }
}

TEST(StationaryDistribution, TwoNodeDetailedBalance)
{
    const auto v = stationary_distribution(MobilityLayer(mat2(-0.1, 0.1, 0.3, -0.3)));
    EXPECT_NEAR(v(0), 0.75, 1e-15);
    EXPECT_NEAR(v(1), 0.25, 1e-15);
}

TEST(StationaryDistribution, DirectedRingMatchesKernelOracle)
{
    const std::vector<Edge> e{{0, 1, 0.7}, {1, 2, 0.7}, {2, 0, 0.7}};
    const auto layer = MobilityLayer::from_edges(3, e);
    const Vector v   = stationary_distribution(layer);
    const Vector o   = kernel_oracle(layer.generator());
    EXPECT_LE((v - o).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_LE((v.array() - 1.0 / 3.0).abs().maxCoeff(), 1e-14);
}

TEST(StationaryDistribution, NonConnectedLayerIsRejected)
{
    EXPECT_THROW(stationary_distribution(MobilityLayer(mat2(-0.2, 0.2, 0.0, 0.0))), AssumptionViolation);
}

TEST(StationaryDistribution, RandomLayersResidualAndOracle)
{
    Gen g(11);
    for (int trial = 0; trial < 100; ++trial) {
        const Index n    = mlsis::testing::uniform_int(g, 2, 12);
        const auto layer = mlsis::testing::random_layer(g, n);
        const Vector v   = stationary_distribution(layer);
        const Matrix& q  = layer.generator();
        EXPECT_NEAR(v.sum(), 1.0, 1e-14);
        EXPECT_GT(v.minCoeff(), 0.0);
        EXPECT_LE((q.transpose() * v).cwiseAbs().maxCoeff(), 1e-12 * q.cwiseAbs().maxCoeff());
        EXPECT_LE((v - kernel_oracle(q)).cwiseAbs().maxCoeff(), 1e-10);
        EXPECT_LE((q * Vector::Ones(n)).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(StationaryDistribution, PermutationEquivariance)
{
    Gen g(12);
    for (int trial = 0; trial < 50; ++trial) {
        const Index n    = mlsis::testing::uniform_int(g, 2, 10);
        const auto layer = mlsis::testing::random_layer(g, n);
        std::vector<Index> perm(static_cast<size_t>(n));
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), g);
        const Vector v  = stationary_distribution(layer);
        const Vector vp = stationary_distribution(layer.permuted(perm));
        for (Index i = 0; i < n; ++i) {
            EXPECT_NEAR(vp(perm[static_cast<size_t>(i)]), v(i), 1e-12);
        }
    }
}

TEST(StationaryPopulations, StacksScaledLaws)
{
    std::vector<MobilityLayer> layers{MobilityLayer(mat2(-0.1, 0.1, 0.3, -0.3)),
                                      MobilityLayer(mat2(-0.2, 0.2, 0.2, -0.2))};
    Vector N(2);
    N << 100.0, 40.0;
    const auto s = stationary_populations(MultiLayerNetwork(layers, N));
    ASSERT_EQ(s.v.size(), 4);
    EXPECT_NEAR(s.v(0), 75.0, 1e-12);
    EXPECT_NEAR(s.v(1), 25.0, 1e-12);
    EXPECT_NEAR(s.v(2), 20.0, 1e-12);
    EXPECT_NEAR(s.v(3), 20.0, 1e-12);
}

TEST(MultiLayerNetwork, StructuralChecks)
{
    const MobilityLayer l2(mat2(-0.2, 0.2, 0.2, -0.2));
    const auto l3 = uniform_out_rates(complete_graph(3), 0.2);
    EXPECT_THROW(MultiLayerNetwork({}, Vector()), DomainError);
    EXPECT_THROW(MultiLayerNetwork({l2, l3}, Vector::Ones(2)), DomainError);
    EXPECT_THROW(MultiLayerNetwork({l2}, Vector::Ones(2)), DomainError);
    EXPECT_THROW(MultiLayerNetwork({l2}, Vector::Zero(1)), DomainError);

    const MultiLayerNetwork bad({l2, MobilityLayer(mat2(-0.2, 0.2, 0.0, 0.0))}, Vector::Ones(2));
    EXPECT_FALSE(bad.strongly_connected());
    try {
        bad.require_connected();
        FAIL();
    }
    catch (const AssumptionViolation& e) {
        EXPECT_NE(std::string(e.what()).find("layer 1"), std::string::npos);
    }
}

TEST(Presets, Shapes)
{
    EXPECT_EQ(complete_graph(5).edges.size(), 10u);
    EXPECT_EQ(line_graph(5).edges.size(), 4u);
    EXPECT_EQ(ring_graph(5).edges.size(), 5u);
    const auto star = star_graph(5);
    EXPECT_EQ(star.edges.size(), 4u);
    for (auto [i, j] : star.edges) {
        EXPECT_TRUE(i == 0 || j == 0);
    }
    EXPECT_THROW(graph_preset("torus", 4), DomainError);
    EXPECT_THROW(graph_preset("line", 0), DomainError);
}

TEST(UniformOutRates, LineEndpointsAndInterior)
{
    const auto layer = uniform_out_rates(line_graph(4), 0.2);
    EXPECT_DOUBLE_EQ(layer.rate(0, 1), 0.2);
    EXPECT_DOUBLE_EQ(layer.rate(1, 0), 0.1);
    EXPECT_DOUBLE_EQ(layer.rate(1, 2), 0.1);
    EXPECT_DOUBLE_EQ(layer.rate(3, 2), 0.2);
    for (Index i = 0; i < 4; ++i) {
        EXPECT_NEAR(layer.exit_rate(i), 0.2, 1e-15);
    }
}

TEST(MetropolisHastings, LineThreeUniform)
{
    const auto layer = metropolis_hastings_rates(line_graph(3), Vector::Constant(3, 1.0 / 3.0), 1.0);
    EXPECT_DOUBLE_EQ(layer.rate(0, 1), 0.5);
    EXPECT_DOUBLE_EQ(layer.rate(1, 0), 0.5);
    EXPECT_DOUBLE_EQ(layer.rate(1, 2), 0.5);
    EXPECT_DOUBLE_EQ(layer.rate(2, 1), 0.5);
    EXPECT_EQ(layer.rate(0, 2), 0.0);
    const Vector v = stationary_distribution(layer);
    EXPECT_LE((v.array() - 1.0 / 3.0).abs().maxCoeff(), 1e-12);
}

TEST(MetropolisHastings, CompleteUniformMatchesClosedForm)
{
    const Index n    = 6;
    const auto layer = metropolis_hastings_rates(complete_graph(n), Vector::Constant(n, 1.0 / n), 0.2);
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < n; ++j) {
            if (i != j) {
                EXPECT_DOUBLE_EQ(layer.rate(i, j), 0.2 / 5.0);
            }
        }
    }
}

TEST(MetropolisHastings, UniformTargetReproducesSymmetricRates)
{
    Gen g(21);
    for (int trial = 0; trial < 20; ++trial) {
        const Index n    = mlsis::testing::uniform_int(g, 2, 10);
        const auto graph = mlsis::testing::random_connected_graph(g, n);
        const Matrix sym = symmetric_rates(graph, 0.3).generator();
        EXPECT_LE((sym - sym.transpose()).cwiseAbs().maxCoeff(), 1e-16);
        const Vector pi = stationary_distribution(MobilityLayer(sym));
        const Matrix mh = metropolis_hastings_rates(graph, pi, 0.3).generator();
        EXPECT_LE((mh - sym).cwiseAbs().maxCoeff(), 1e-15);
    }
}

TEST(MetropolisHastings, StationaryLawEqualsRandomTarget)
{
    Gen g(22);
    for (int trial = 0; trial < 200; ++trial) {
        const Index n    = mlsis::testing::uniform_int(g, 2, 15);
        const auto graph = mlsis::testing::random_connected_graph(g, n, 0.25);
        const Vector pi  = mlsis::testing::random_probability(g, n);
        const auto layer = metropolis_hastings_rates(graph, pi, mlsis::testing::uniform(g, 0.05, 2.0));
        ASSERT_TRUE(validate_layer(layer).strongly_connected);
        EXPECT_LE((stationary_distribution(layer) - pi).cwiseAbs().maxCoeff(), 1e-10);
    }
}

TEST(MetropolisHastings, RejectsBadInputs)
{
    const auto line = line_graph(3);
    EXPECT_THROW(metropolis_hastings_rates(line, Vector::Constant(2, 0.5), 1.0), DomainError);
    EXPECT_THROW(metropolis_hastings_rates(line, Vector::Constant(3, 0.5), 1.0), DomainError);
    EXPECT_THROW(metropolis_hastings_rates(line, Vector::Constant(3, 1.0 / 3.0), 0.0), DomainError);
    const UndirectedGraph split{4, {{0, 1}, {2, 3}}};
    EXPECT_THROW(metropolis_hastings_rates(split, Vector::Constant(4, 0.25), 1.0), AssumptionViolation);
}

TEST(Linalg, StrongConnectivity)
{
    Matrix a = Matrix::Zero(3, 3);
    a(0, 1) = a(1, 2) = 1.0;
    EXPECT_FALSE(is_strongly_connected(a));
    a(2, 0) = 1.0;
    EXPECT_TRUE(is_strongly_connected(a));
    EXPECT_TRUE(is_strongly_connected(Matrix::Zero(1, 1)));
}
