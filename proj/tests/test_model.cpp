#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "fplab/errors.hpp"
#include "fplab/model.hpp"
#include "support.hpp"

using namespace fplab;
using fplab::testing::grid1;
using fplab::testing::grid2;

TEST(Grid, NodesAndSpacing) {
  const auto g = grid1(-6, 6, 256);
  EXPECT_EQ(g->size(), 257);
  EXPECT_EQ(g->spacing(0), 12.0 / 256);
  EXPECT_EQ(g->point(0)[0], -6.0);
  EXPECT_EQ(g->point(256)[0], 6.0);
  EXPECT_EQ(grid2(-5, 5, 64)->size(), 65 * 65);
}

TEST(Grid, IndexArithmetic) {
  const auto g = grid2(-1, 1, 10);
  for (Index i = 0; i < g->size(); ++i) {
    const auto mi = g->multi_index(i);
    EXPECT_EQ(g->index(mi[0], mi[1]), i);
    EXPECT_EQ(g->point(i)[0], g->coordinate(0, mi[0]));
    EXPECT_EQ(g->point(i)[1], g->coordinate(1, mi[1]));
  }
  EXPECT_EQ(g->index(3, 2), 3 + 11 * 2);
}

TEST(Grid, Rejects) {
  EXPECT_THROW(grid1(1, 1, 16), InvalidArgument);
  EXPECT_THROW(grid1(2, 1, 16), InvalidArgument);
  EXPECT_THROW(grid1(0, 1, 7), InvalidArgument);
  EXPECT_THROW(grid1(0, std::nan(""), 16), InvalidArgument);
}

TEST(Grid, VolumesAreTrapezoidWeights) {
  const auto g = grid2(0, 2, 8);
  const double h = 0.25;
  EXPECT_DOUBLE_EQ(g->volume(g->index(0, 0)), h * h / 4);
  EXPECT_DOUBLE_EQ(g->volume(g->index(0, 3)), h * h / 2);
  EXPECT_DOUBLE_EQ(g->volume(g->index(4, 3)), h * h);
  EXPECT_NEAR(g->volumes().sum(), 4.0, 1e-14);
}

TEST(Field, RejectsWrongSizeAndNonFinite) {
  const auto g = grid1(0, 1, 8);
  EXPECT_THROW(Field(g, Eigen::VectorXd::Zero(8)), GridMismatch);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(9);
  v[3] = std::numeric_limits<double>::infinity();
  EXPECT_THROW(Field(g, v), NumericalError);
}

TEST(Discretize, DriftSampledAsCoordinate) {
  const auto g = grid1(-6, 6, 64);
  const auto mf = discretize_model(Model::with_drift(1, {"1"}, {"x1"}), g);
  for (Index i = 0; i < g->size(); ++i) EXPECT_EQ(mf.drift[i][0], g->point(i)[0]);
}

TEST(Discretize, NegativeDiffusionReportsCoordinates) {
  const auto g = grid1(-6, 6, 64);
  try {
    discretize_model(Model::with_drift(1, {"-1"}, {"x1"}), g);
    FAIL() << "expected ModelError";
  } catch (const ModelError& e) {
    EXPECT_NE(std::string(e.what()).find("x = (-6"), std::string::npos) << e.what();
  }
  EXPECT_THROW(discretize_model(Model::with_drift(2, {"1", "2", "1"}, {"0", "0"}), grid2(-1, 1, 8)),
               ModelError);
}

TEST(Discretize, GradientModeGivesDriftFromPotential) {
  const auto g = grid1(-6, 6, 64);
  const auto mf = discretize_model(Model::with_potential(1, {"1"}, "x1^2/2"), g);
  for (Index i = 0; i < g->size(); ++i) EXPECT_NEAR(mf.drift[i][0], g->point(i)[0], 1e-15);
  ASSERT_TRUE(mf.potential.has_value());
}

TEST(Discretize, EvalFaultPropagates) {
  EXPECT_THROW(discretize_model(Model::with_drift(1, {"1"}, {"ln(x1)"}), grid1(-1, 1, 8)), EvalFault);
}

TEST(Gibbs, ConstantPotentialIsUniformTrapezoid) {
  const auto g = grid1(0, 1, 10);
  const auto mu = gibbs_measure(Field::constant(g, 3.0));
  EXPECT_NEAR(mu.weights()[0], 0.05, 1e-15);
  EXPECT_NEAR(mu.weights()[5], 0.1, 1e-15);
  EXPECT_NEAR(mu.weights().sum(), 1.0, 1e-14);
}

TEST(Gibbs, GaussianMoments) {
  const auto g = grid1(-8, 8, 512);
  const auto V = Field::sample(g, [](auto x) { return x[0] * x[0] / 2; });
  const auto mu = gibbs_measure(V);
  EXPECT_NEAR(integrate(mu, V.map([](double v) { return 2 * v; })), 1.0, 1e-6);
  EXPECT_NEAR(integrate(mu, fplab::testing::x1_field(g)), 0.0, 1e-12);
  EXPECT_NEAR(integrate(mu, Field::constant(g, 1.0)), 1.0, 1e-14);
  const auto left = Field::sample(g, [](auto x) { return x[0] < 0 ? 1.0 : 0.0; });
  EXPECT_NEAR(integrate(mu, left), 0.5, g->spacing(0));
  // log Z against sqrt(2 pi).
  EXPECT_NEAR(mu.log_normalization(), 0.5 * std::log(2 * std::numbers::pi), 1e-6);
}

TEST(Gibbs, HugePotentialDoesNotOverflow) {
  const auto g = grid1(-1, 1, 16);
  const auto mu = gibbs_measure(Field::sample(g, [](auto x) { return 2000.0 + x[0]; }));
  EXPECT_NEAR(mu.weights().sum(), 1.0, 1e-14);
  EXPECT_GT(mu.weights().minCoeff(), 0.0);
}

TEST(Gibbs, ShiftInvariance) {
  const auto g = grid2(-3, 3, 16);
  const auto V = Field::sample(g, [](auto x) { return x[0] * x[0] + std::sin(x[1]); });
  const auto a = gibbs_measure(V);
  const auto b = gibbs_measure(V.map([](double v) { return v + 123.25; }));
  EXPECT_LE((a.weights() - b.weights()).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_NEAR(b.log_normalization() - a.log_normalization(), -123.25, 1e-9);
}

TEST(Integrate, GridMismatch) {
  const auto mu = gibbs_measure(Field::constant(grid1(0, 1, 8), 0.0));
  EXPECT_THROW(integrate(mu, Field::constant(grid1(0, 1, 9), 1.0)), GridMismatch);
}

TEST(Quadrature, ExactForAffine) {
  const auto g = grid2(-1, 2, 12);
  const Measure lebesgue(g, g->volumes());
  const double area = 9.0;
  const auto f = Field::sample(g, [](auto x) { return 3.0 * x[0] - 2.0 * x[1] + 0.5; });
  // Mean of an affine function over the box is its value at the centre.
  EXPECT_NEAR(integrate(lebesgue, f) * area, area * (3.0 * 0.5 - 2.0 * 0.5 + 0.5), 1e-13);
}

TEST(Quadrature, SecondOrderForQuadratics) {
  // Integral of x^2 over [0,1] is 1/3.
  double previous = 0.0, order = 0.0;
  for (int cells : {16, 32, 64, 128}) {
    const auto g = grid1(0, 1, cells);
    const Measure lebesgue(g, g->volumes());
    const double err = std::abs(integrate(lebesgue, Field::sample(g, [](auto x) { return x[0] * x[0]; })) - 1.0 / 3.0);
    if (previous > 0.0) order = std::log2(previous / err);
    previous = err;
  }
  EXPECT_GE(order, 1.9);
}

TEST(DivergenceFree, RotationIsExact) {
  const auto g = grid2(-4, 4, 32);
  const auto r = check_divergence_free(
      Model::with_potential(2, {"1", "0", "1"}, "(x1^2+x2^2)/2", {"-x2", "x1"}), g);
  EXPECT_LE(std::max(-r.min(), r.max()), 1e-15);
}

TEST(DivergenceFree, RadialPerturbationLeavesResidual) {
  const auto g = grid2(-4, 4, 32);
  const auto r = check_divergence_free(
      Model::with_potential(2, {"1", "0", "1"}, "(x1^2+x2^2)/2", {"x1", "0"}), g);
  for (Index i = 0; i < g->size(); ++i) {
    const auto x = g->point(i);
    const double expected = std::exp(-(x[0] * x[0] + x[1] * x[1]) / 2) * (1 - x[0] * x[0]);
    EXPECT_NEAR(r[i], expected, 1e-14);
  }
}

TEST(DivergenceFree, ZeroPerturbation) {
  const auto g = grid2(-2, 2, 8);
  const auto r = check_divergence_free(
      Model::with_potential(2, {"1", "0", "1"}, "(x1^2+x2^2)/2", {"0", "0"}), g);
  EXPECT_EQ(r.max(), 0.0);
  EXPECT_EQ(r.min(), 0.0);
  EXPECT_THROW(check_divergence_free(Model::with_potential(2, {"1", "0", "1"}, "x1^2"), g), ModelError);
}
