#include "random_instances.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

using namespace mlsis;
using mlsis::testing::Gen;

namespace
{

ModelSpec scalar_spec(double beta, double delta)
{
    return ModelSpec(MultiLayerNetwork({MobilityLayer(Matrix::Zero(1, 1))}, Vector::Constant(1, 1000.0)),
                     Vector::Constant(1, beta), Vector::Constant(1, delta));
}

// beta = [0.3, 0.2], delta = [0.1, 0.25], symmetric nu = 0.2, N = 1000
ModelSpec two_node_spec()
{
    Matrix q(2, 2);
    q << -0.2, 0.2, 0.2, -0.2;
    Vector b(2), d(2);
    b << 0.3, 0.2;
    d << 0.1, 0.25;
    return ModelSpec(MultiLayerNetwork({MobilityLayer(q)}, Vector::Constant(1, 1000.0)), b, d);
}

// closed-form logistic SIS: p' = r p (1 - p/K), r = beta - delta, K = 1 - delta/beta
double logistic(double beta, double delta, double p0, double t)
{
    const double r = beta - delta;
    const double k = 1.0 - delta / beta;
    return k / (1.0 + (k / p0 - 1.0) * std::exp(-r * t));
}

Vector random_populations(Gen& g, const ModelSpec& spec)
{
    Vector x(spec.dim());
    for (Index k = 0; k < x.size(); ++k) {
        x(k) = mlsis::testing::uniform(g, 1.0, 500.0);
    }
    return x;
}

} // namespace

TEST(Assemble, SingleClassHasTrivialShares)
{
    Gen g(1);
    const auto spec = mlsis::testing::random_instance(g, {6, 1, true});
    const auto mats = assemble(spec, random_populations(g, spec));
    EXPECT_LE((mats.F - Matrix::Identity(spec.dim(), spec.dim())).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_LE(mats.M.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Assemble, EqualSplitGivesHalfShares)
{
    const auto layer = uniform_out_rates(complete_graph(3), 0.2);
    const ModelSpec spec(MultiLayerNetwork({layer, layer}, Vector::Constant(2, 300.0)), Vector::Constant(3, 0.2),
                         Vector::Constant(3, 0.1));
    Vector x(6);
    x << 100, 50, 150, 100, 70, 30;
    const auto mats = assemble(spec, x);
    EXPECT_DOUBLE_EQ(mats.F(0, 0), 0.5);
    EXPECT_DOUBLE_EQ(mats.F(0, 3), 0.5);
    EXPECT_DOUBLE_EQ(mats.F(3, 0), 0.5);
    EXPECT_NEAR(mats.F(1, 4), 70.0 / 120.0, 1e-15);
}

TEST(Assemble, TwoNodeStationaryLaplacian)
{
    const auto spec = two_node_spec();
    const auto mats = assemble(spec, Vector::Constant(2, 500.0));
    // l_ij = -q_ji x_j / x_i, evaluated by hand
    EXPECT_NEAR(mats.L(0, 0), 0.2, 1e-15);
    EXPECT_NEAR(mats.L(0, 1), -0.2, 1e-15);
    EXPECT_NEAR(mats.L(1, 0), -0.2, 1e-15);
    EXPECT_NEAR(mats.L(1, 1), 0.2, 1e-15);
}

TEST(Assemble, RejectsNonPositivePopulations)
{
    const auto spec = two_node_spec();
    Vector x(2);
    x << 10.0, 0.0;
    EXPECT_THROW(assemble(spec, x), DomainError);
    EXPECT_THROW(assemble(spec, Vector::Ones(3)), DomainError);
}

TEST(Assemble, RowSumIdentitiesOnRandomStates)
{
    Gen g(2);
    for (int trial = 0; trial < 100; ++trial) {
        const auto spec = mlsis::testing::random_instance(g);
        const Vector x  = random_populations(g, spec);
        const Vector p  = mlsis::testing::random_fractions(g, spec.dim());
        const auto mats = assemble(spec, x, p);
        const Vector one = Vector::Ones(spec.dim());
        EXPECT_LE((mats.F * one - one).cwiseAbs().maxCoeff(), 1e-13);
        EXPECT_LE((mats.M * one).cwiseAbs().maxCoeff(), 1e-13);
        EXPECT_LE((mats.L * one).cwiseAbs().maxCoeff(), 1e-13 * std::max(1.0, mats.L.cwiseAbs().maxCoeff()));
        for (Index r = 0; r < spec.dim(); ++r) {
            for (Index c = 0; c < spec.dim(); ++c) {
                if (r != c) {
                    EXPECT_LE(mats.L(r, c), 0.0);
                }
            }
        }
        ASSERT_TRUE(mats.pbar.has_value());
        EXPECT_GE(mats.pbar->minCoeff(), 0.0);
        EXPECT_LE(mats.pbar->maxCoeff(), 1.0);
    }
}

TEST(Assemble, StationaryDiagonalEqualsExitRate)
{
    Gen g(3);
    for (int trial = 0; trial < 100; ++trial) {
        const auto spec = mlsis::testing::random_instance(g);
        const auto mats = assemble(spec, stationary_populations(spec.network()).v);
        const Index n   = spec.num_nodes();
        for (Index a = 0; a < spec.num_layers(); ++a) {
            for (Index i = 0; i < n; ++i) {
                EXPECT_NEAR(mats.L(a * n + i, a * n + i), spec.network().layer(a).exit_rate(i), 1e-10);
            }
        }
    }
}

TEST(Rhs, ScalarLogistic)
{
    const auto spec = scalar_spec(0.3, 0.1);
    for (double p : {0.0, 0.01, 0.5, 2.0 / 3.0, 1.0}) {
        const auto d = rhs(spec, {0.0, Vector::Constant(1, p), Vector::Constant(1, 1000.0)});
        EXPECT_NEAR(d.dp(0), 0.3 * p * (1.0 - p) - 0.1 * p, 1e-16);
        EXPECT_EQ(d.dx(0), 0.0);
    }
}

TEST(Rhs, StationaryPopulationIsFixed)
{
    Gen g(4);
    for (int trial = 0; trial < 50; ++trial) {
        const auto spec = mlsis::testing::random_instance(g);
        const Vector v  = stationary_populations(spec.network()).v;
        const auto d    = rhs(spec, {0.0, mlsis::testing::random_fractions(g, spec.dim()), v});
        EXPECT_LE(d.dx.cwiseAbs().maxCoeff(), 1e-12 * v.maxCoeff());
    }
}

TEST(Rhs, MatrixFormAgreesWithComponentwise)
{
    Gen g(5);
    for (int trial = 0; trial < 200; ++trial) {
        const auto spec  = mlsis::testing::random_instance(g);
        const SystemState s{0.0, mlsis::testing::random_fractions(g, spec.dim()), random_populations(g, spec)};
        const auto a     = rhs(spec, s);
        const auto b     = rhs_matrix_form(spec, s);
        const double tol = 1e-14 * std::max(1.0, a.dp.cwiseAbs().maxCoeff());
        EXPECT_LE((a.dp - b.dp).cwiseAbs().maxCoeff(), tol);
        EXPECT_LE((a.dx - b.dx).cwiseAbs().maxCoeff(), 1e-14 * std::max(1.0, a.dx.cwiseAbs().maxCoeff()));
    }
}

TEST(Integrate, ScalarMatchesClosedForm)
{
    const auto spec = scalar_spec(0.3, 0.1);
    const auto traj = integrate(spec, {0.0, Vector::Constant(1, 0.01), Vector::Constant(1, 1000.0)}, 100.0);
    ASSERT_EQ(traj.samples.size(), 10001u);
    double err = 0.0;
    for (const auto& s : traj.samples) {
        err = std::max(err, std::abs(s.p(0) - logistic(0.3, 0.1, 0.01, s.t)));
    }
    EXPECT_LE(err, 1e-9);
    EXPECT_NEAR(traj.final_state().t, 100.0, 1e-12);
    EXPECT_NEAR(traj.final_state().p(0), 2.0 / 3.0, 1e-5);
}

TEST(Integrate, SamplingAndStepCount)
{
    const auto spec = scalar_spec(0.3, 0.1);
    IntegrationOptions o;
    o.dt           = 0.1;
    o.sample_every = 7;
    const auto traj = integrate(spec, {0.0, Vector::Constant(1, 0.5), Vector::Constant(1, 1.0)}, 2.0, o);
    // samples at steps 0, 7, 14 and the final step 20
    ASSERT_EQ(traj.samples.size(), 4u);
    EXPECT_NEAR(traj.samples[1].t, 0.7, 1e-15);
    EXPECT_NEAR(traj.samples.back().t, 2.0, 1e-15);
    EXPECT_EQ(step_count(1.0, 0.1), 10);
    EXPECT_EQ(step_count(1.05, 0.1), 11);
}

TEST(Integrate, DiseaseFreeInvariance)
{
    Gen g(6);
    for (int trial = 0; trial < 20; ++trial) {
        const auto spec = mlsis::testing::random_instance(g);
        const Vector x0 = random_populations(g, spec);
        // rescale onto the class totals so x converges to v
        const Index n = spec.num_nodes();
        Vector x      = x0;
        for (Index a = 0; a < spec.num_layers(); ++a) {
            x.segment(a * n, n) *= spec.network().class_populations()(a) / x0.segment(a * n, n).sum();
        }
        const auto traj = integrate(spec, {0.0, Vector::Zero(spec.dim()), x}, 300.0, {0.05, 100, 1e-9});
        for (const auto& s : traj.samples) {
            EXPECT_EQ(s.p.cwiseAbs().maxCoeff(), 0.0);
        }
        const Vector v = stationary_populations(spec.network()).v;
        EXPECT_LE((traj.final_state().x - v).cwiseAbs().maxCoeff(), 1e-6 * v.maxCoeff());
    }
}

TEST(Integrate, ForwardInvariancePositivityConservation)
{
    Gen g(7);
    for (int trial = 0; trial < 40; ++trial) {
        const auto spec = mlsis::testing::random_instance(g);
        Vector p0       = mlsis::testing::random_fractions(g, spec.dim());
        // zero out some entries, keep at least one positive
        for (Index k = 1; k < p0.size(); ++k) {
            if (mlsis::testing::uniform(g, 0.0, 1.0) < 0.4) {
                p0(k) = 0.0;
            }
        }
        p0(0) = std::max(p0(0), 0.05);
        if (mlsis::testing::uniform(g, 0.0, 1.0) < 0.3) {
            p0(0) = 1.0;
        }
        const Vector x0 = random_populations(g, spec);
        const auto traj = integrate(spec, {0.0, p0, x0}, 50.0, {0.01, 10, 1e-9});
        EXPECT_LE(traj.max_population_drift, 1e-9);
        EXPECT_LE(traj.max_clamp, 1e-9);
        for (size_t k = 0; k < traj.samples.size(); ++k) {
            const auto& s = traj.samples[k];
            EXPECT_GE(s.p.minCoeff(), 0.0);
            EXPECT_LE(s.p.maxCoeff(), 1.0);
            if (k > 0) {
                EXPECT_GT(s.p.minCoeff(), 0.0) << "trial " << trial << " t " << s.t;
            }
            const Index n = spec.num_nodes();
            for (Index a = 0; a < spec.num_layers(); ++a) {
                const double t0 = x0.segment(a * n, n).sum();
                EXPECT_LE(std::abs(s.x.segment(a * n, n).sum() - t0), 1e-9 * t0);
            }
        }
    }
}

TEST(Integrate, FourthOrderConvergence)
{
    // smooth 2-node, 2-class scenario starting away from v
    Matrix q1(2, 2), q2(2, 2);
    q1 << -0.2, 0.2, 0.2, -0.2;
    q2 << -0.5, 0.5, 0.1, -0.1;
    Vector b(2), d(2), N(2);
    b << 0.6, 0.4;
    d << 0.1, 0.25;
    N << 1000.0, 600.0;
    const ModelSpec spec(MultiLayerNetwork({MobilityLayer(q1), MobilityLayer(q2)}, N), b, d);
    Vector p0(4), x0(4);
    p0 << 0.3, 0.05, 0.0, 0.2;
    x0 << 900.0, 100.0, 100.0, 500.0;
    const double t_end = 10.0;
    const double dt    = 0.4;
    auto endpoint      = [&](double h) {
        return integrate(spec, {0.0, p0, x0}, t_end, {h, 1000000, 1e-9}).final_state();
    };
    const auto ref   = endpoint(dt / 8.0);
    auto err         = [&](const SystemState& s) {
        return std::max((s.p - ref.p).cwiseAbs().maxCoeff(), (s.x - ref.x).cwiseAbs().maxCoeff() / N.maxCoeff());
    };
    const double e1 = err(endpoint(dt));
    const double e2 = err(endpoint(dt / 2.0));
    const double ratio = e1 / e2;
    EXPECT_GE(ratio, 12.0) << e1 << " " << e2;
    EXPECT_LE(ratio, 20.0) << e1 << " " << e2;
}

TEST(Integrate, RejectsBadInputs)
{
    const auto spec = scalar_spec(0.3, 0.1);
    const Vector x  = Vector::Constant(1, 10.0);
    EXPECT_THROW(integrate(spec, {0.0, Vector::Constant(1, 0.1), x}, 1.0, {0.0, 1, 1e-9}), DomainError);
    EXPECT_THROW(integrate(spec, {0.0, Vector::Constant(1, 1.5), x}, 1.0), DomainError);
    EXPECT_THROW(integrate(spec, {0.0, Vector::Constant(1, 0.1), Vector::Zero(1)}, 1.0), DomainError);
    EXPECT_THROW(integrate(spec, {0.0, Vector::Constant(1, 0.1), x}, -1.0), DomainError);
}

TEST(Integrate, OvershootBeyondClampIsAnError)
{
    const auto spec = scalar_spec(0.3, 100.0);
    EXPECT_THROW(integrate(spec, {0.0, Vector::Constant(1, 0.5), Vector::Constant(1, 10.0)}, 5.0, {1.0, 1, 1e-9}),
                 IntegrationError);
}

TEST(TrajectoryCsv, HeaderAndRoundTrip)
{
    const auto spec = two_node_spec();
    const auto traj = integrate(spec, {0.0, Vector::Constant(2, 0.1), Vector::Constant(2, 500.0)}, 0.02);
    std::ostringstream os;
    write_trajectory_csv(os, traj, 2, 1);
    std::istringstream is(os.str());
    std::string header, row;
    std::getline(is, header);
    EXPECT_EQ(header, "t,p[0][0],p[0][1],x[0][0],x[0][1]");
    int rows = 0;
    while (std::getline(is, row)) {
        ++rows;
    }
    EXPECT_EQ(rows, 3);
    const double v = 0.1 + 1e-17;
    EXPECT_EQ(std::stod(io::format_double(v)), v);
}
