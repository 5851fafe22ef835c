#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include <cmath>

#include "fplab/errors.hpp"
#include "fplab/operators.hpp"
#include "support.hpp"

using namespace fplab;
using fplab::testing::grid1;
using fplab::testing::grid2;
using fplab::testing::max_abs_diff;

namespace {

Field sample(const GridPtr& g, double (*f)(double)) {
  return Field::sample(g, [f](auto x) { return f(x[0]); });
}

ModelFields ou_fields(int cells) {
  return discretize_model(fplab::testing::ou1(), grid1(-6, 6, cells));
}

}  // namespace

TEST(Generator, OuOnLinear) {
  const auto mf = ou_fields(256);
  const auto& g = mf.grid;
  const auto lf = apply_generator(mf, fplab::testing::x1_field(g));
  for (Index i = 0; i < g->size(); ++i) EXPECT_NEAR(lf[i], -g->point(i)[0], 1e-12);
}

TEST(Generator, Constant) {
  const auto mf = ou_fields(64);
  const auto lf = apply_generator(mf, Field::constant(mf.grid, 3.0));
  EXPECT_EQ(lf.max(), 0.0);
  EXPECT_EQ(lf.min(), 0.0);
}

TEST(Generator, OuOnQuadraticSecondOrder) {
  double previous = 0.0, order = 0.0;
  for (int cells : {64, 128, 256}) {
    const auto mf = ou_fields(cells);
    const auto& g = mf.grid;
    const auto lf = apply_generator(mf, sample(g, [](double x) { return x * x + std::sin(x); }));
    const auto exact = sample(g, [](double x) { return 2 - 2 * x * x - std::sin(x) - x * std::cos(x); });
    const double err = max_abs_diff(lf, exact, [&](Index i) { return g->is_interior(i, 1); });
    if (previous > 0.0) order = std::log2(previous / err);
    previous = err;
  }
  EXPECT_GE(order, 1.9);
  const auto mf = ou_fields(256);
  const auto lf = apply_generator(mf, sample(mf.grid, [](double x) { return x * x; }));
  const auto exact = sample(mf.grid, [](double x) { return 2 - 2 * x * x; });
  EXPECT_LT(max_abs_diff(lf, exact, [](Index) { return true; }), 1e-10);
}

TEST(Generator, VariableDiffusionUsesDivergence) {
  // a = 0: L f = (D f')' with D = 1 + x^2.
  const auto g = grid1(-1, 1, 256);
  const auto mf = discretize_model(Model::with_drift(1, {"1 + x1^2"}, {"0"}), g);
  const auto lf = apply_generator(mf, sample(g, [](double x) { return std::sin(x); }));
  const auto exact = sample(g, [](double x) { return 2 * x * std::cos(x) - (1 + x * x) * std::sin(x); });
  EXPECT_LT(max_abs_diff(lf, exact, [&](Index i) { return g->is_interior(i, 1); }), 1e-4);
}

TEST(Gamma, LinearAndOrthogonal) {
  const auto mf = ou_fields(64);
  const auto x = fplab::testing::x1_field(mf.grid);
  const auto gx = gamma(mf, x);
  for (Index i = 0; i < gx.size(); ++i) EXPECT_NEAR(gx[i], 1.0, 1e-12);

  const auto g2 = grid2(-1, 1, 16);
  const auto mf2 = discretize_model(Model::with_drift(2, {"2", "0", "3"}, {"0", "0"}), g2);
  const auto f1 = Field::sample(g2, [](auto p) { return p[0]; });
  const auto f2 = Field::sample(g2, [](auto p) { return p[1]; });
  const auto cross = gamma(mf2, f1, f2);
  EXPECT_EQ(cross.max(), 0.0);
  EXPECT_EQ(cross.min(), 0.0);
  EXPECT_NEAR(gamma(mf2, f2).max(), 3.0, 1e-12);
}

TEST(Gamma, SquareField) {
  const auto mf = ou_fields(256);
  const auto& g = mf.grid;
  const auto gs = gamma(mf, sample(g, [](double x) { return x * x; }));
  const auto exact = sample(g, [](double x) { return 4 * x * x; });
  EXPECT_LT(max_abs_diff(gs, exact, [&](Index i) { return g->is_interior(i, 1); }), 1e-10);
}

TEST(Gamma, SymmetryAndScaling) {
  const auto g = grid2(-2, 2, 20);
  const auto mf = discretize_model(Model::with_drift(2, {"1 + x1^2", "0", "2"}, {"x1", "x2"}), g);
  const auto f = Field::sample(g, [](auto x) { return std::sin(x[0]) * x[1]; });
  const auto h = Field::sample(g, [](auto x) { return std::exp(0.3 * x[0] - x[1]); });
  const auto a = gamma(mf, f, h), b = gamma(mf, h, f);
  for (Index i = 0; i < g->size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-14 * (1 + std::abs(a[i])));
  const auto scaled = gamma(mf, f.map([](double v) { return 2.5 * v; }), h);
  for (Index i = 0; i < g->size(); ++i) EXPECT_NEAR(scaled[i], 2.5 * a[i], 1e-13 * (1 + std::abs(a[i])));
}

TEST(Gamma, ProductRuleDefinitionSecondOrder) {
  // 1/2 (L(fg) - f Lg - g Lf) against <grad f, D grad g>.
  double previous = 0.0, order = 0.0;
  for (int cells : {64, 128, 256}) {
    const auto g = grid1(-2, 2, cells);
    const auto mf = discretize_model(Model::with_drift(1, {"1 + x1^2/4"}, {"x1"}), g);
    const auto f = sample(g, [](double x) { return std::sin(x); });
    const auto h = sample(g, [](double x) { return std::exp(x / 2); });
    const auto fh = Field(g, f.values().cwiseProduct(h.values()));
    const auto lfh = apply_generator(mf, fh), lf = apply_generator(mf, f), lh = apply_generator(mf, h);
    Eigen::VectorXd def = 0.5 * (lfh.values() - f.values().cwiseProduct(lh.values()) -
                                 h.values().cwiseProduct(lf.values()));
    const auto exact = Field::sample(g, [](auto x) {
      return (1 + x[0] * x[0] / 4) * std::cos(x[0]) * 0.5 * std::exp(x[0] / 2);
    });
    const double err = max_abs_diff(Field(g, def), exact, [&](Index i) { return std::abs(g->point(i)[0]) <= 1.0; });
    if (previous > 0.0) order = std::log2(previous / err);
    previous = err;
  }
  EXPECT_GE(order, 1.9);
}

TEST(Gamma, ChainRule) {
  const auto g = grid1(-2, 2, 256);
  const auto mf = discretize_model(Model::with_drift(1, {"1"}, {"x1"}), g);
  const auto f = sample(g, [](double x) { return std::sin(x) + 2; });
  const auto phi_f = f.map([](double v) { return std::log(v); });
  const auto lhs = gamma(mf, phi_f);
  const auto gf = gamma(mf, f);
  Eigen::VectorXd rhs(g->size());
  for (Index i = 0; i < g->size(); ++i) rhs[i] = gf[i] / (f[i] * f[i]);
  EXPECT_LT(max_abs_diff(lhs, Field(g, rhs), [&](Index i) { return g->is_interior(i, 1); }), 1e-4);
}

TEST(Gamma2, OuExamples) {
  const auto mf = discretize_model(fplab::testing::ou1(), grid1(-8, 8, 512));
  const auto& g = mf.grid;
  const auto g2x = gamma2(mf, fplab::testing::x1_field(g));
  for (Index i = 0; i < g->size(); ++i) {
    if (g->is_interior(i, 2)) EXPECT_NEAR(g2x[i], 1.0, 1e-10);
  }
  const auto g2sq = gamma2(mf, sample(g, [](double x) { return x * x; }));
  const Index at_one = g->index(288);  // x = 1
  ASSERT_NEAR(g->point(at_one)[0], 1.0, 1e-12);
  EXPECT_NEAR(g2sq[at_one], 8.0, 1e-6);
  for (Index i = 0; i < g->size(); ++i) {
    const double x = g->point(i)[0];
    if (g->is_interior(i, 2)) EXPECT_NEAR(g2sq[i], 4 + 4 * x * x, 1e-6 * (1 + x * x));
  }
  const auto g2c = gamma2(mf, Field::constant(g, 1.0));
  EXPECT_EQ(g2c.max(), 0.0);
}

TEST(CdConstant, Examples) {
  const auto g1 = grid1(-4, 4, 16);
  EXPECT_NEAR(cd_rho_constant_D(Model::with_drift(1, {"1"}, {"x1"}), g1).rho, 1.0, 1e-12);
  const auto g2 = grid2(-4, 4, 16);
  const auto shear = cd_rho_constant_D(Model::with_drift(2, {"1", "0", "1"}, {"x1 + 4*x2", "x2"}), g2);
  EXPECT_NEAR(shear.rho, -1.0, 1e-12);
  EXPECT_EQ(shear.method, CdMethod::constant_diffusion_eigenvalue);
  EXPECT_NEAR(cd_rho_constant_D(Model::with_drift(2, {"1", "0", "1"}, {"x1 - x2", "x1 + x2"}), g2).rho,
              1.0, 1e-12);
}

TEST(CdConstant, GeneralizedEigenOracle) {
  // a = M x, so J_b = D M; oracle is Eigen's dense generalized solver.
  Eigen::Matrix2d D, M;
  D << 2, 0.5, 0.5, 1;
  M << 1.5, -0.7, 0.3, 0.9;
  const Eigen::Matrix2d Jb = D * M;
  const Eigen::Matrix2d S = 0.5 * (Jb * D + (Jb * D).transpose());
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::Matrix2d> es(S, D);
  const double oracle = es.eigenvalues().minCoeff();
  const auto g = grid2(-2, 2, 8);
  const Model m = Model::with_drift(2, {"2", "0.5", "1"}, {"1.5*x1 - 0.7*x2", "0.3*x1 + 0.9*x2"});
  EXPECT_NEAR(cd_rho_constant_D(m, g).rho, oracle, 1e-12);
}

TEST(CdConstant, RefusesVariableDiffusion) {
  EXPECT_THROW(cd_rho_constant_D(Model::with_drift(1, {"1 + x1^2"}, {"x1"}), grid1(-1, 1, 8)), ModelError);
}

TEST(CdConstant, NonIncreasingUnderRefinement) {
  // Nonlinear drift a = x + x^3/10 - sin(x): rho depends on x.
  const Model m = Model::with_drift(1, {"1"}, {"x1 + x1^3/10 - 0.5*sin(3*x1)"});
  double previous = std::numeric_limits<double>::infinity();
  for (int cells : {8, 16, 32, 64}) {
    const double rho = cd_rho_constant_D(m, grid1(-2, 2, cells)).rho;
    EXPECT_LE(rho, previous);
    previous = rho;
  }
}

TEST(CdSampled, OuWithSmallBattery) {
  const auto g = grid1(-6, 6, 512);
  std::vector<Field> fields{fplab::testing::x1_field(g), sample(g, [](double x) { return x * x; }),
                            sample(g, [](double x) { return std::exp(x / 2); })};
  const auto est = cd_rho_sampled(fplab::testing::ou1(), g, fields, true);
  EXPECT_NEAR(est.rho, 1.0, 0.02);
  EXPECT_TRUE(est.upper_bound_only);
  EXPECT_THROW(cd_rho_sampled(fplab::testing::ou1(), g, fields), InvalidArgument);
}

TEST(CdSampled, PureDiffusion) {
  const auto g = grid1(-3, 3, 512);
  const auto est = cd_rho_sampled(Model::with_drift(1, {"1"}, {"0"}), g, default_cd_test_fields(g));
  EXPECT_NEAR(est.rho, 0.0, 0.02);
}

TEST(CdSampled, ConstantFieldInconclusive) {
  const auto g = grid1(-3, 3, 64);
  EXPECT_THROW(cd_rho_sampled(fplab::testing::ou1(), g, {Field::constant(g, 1.0)}, true), Inconclusive);
}

TEST(CdSampled, ConsistentWithEigenvalue) {
  const auto g = grid2(-3, 3, 64);
  for (const auto& drift : {std::vector<std::string>{"x1 + 4*x2", "x2"},
                            std::vector<std::string>{"x1 - x2", "x1 + x2"},
                            std::vector<std::string>{"2*x1", "x2/2"}}) {
    const Model m = Model::with_drift(2, {"1", "0", "1"}, drift);
    const double exact = cd_rho_constant_D(m, g).rho;
    const double sampled = cd_rho_sampled(m, g, default_cd_test_fields(g)).rho;
    EXPECT_GE(sampled, exact - 0.05) << drift[0];
  }
}

TEST(IntegralCriterion, Examples) {
  const auto g = grid1(-6, 6, 512);
  const auto mf = discretize_model(fplab::testing::ou1(), g);
  const auto mu = gibbs_measure(*mf.potential);
  const auto bump = sample(g, [](double x) { return 2 + std::exp(-x * x); });
  const double m1 = integral_criterion_check(mf, mu, bump, 1.5, 1.0);
  EXPECT_GE(m1, 0.0);
  EXPECT_GT(integral_criterion_check(mf, mu, bump, 1.5, -10.0), m1);
  EXPECT_EQ(integral_criterion_check(mf, mu, Field::constant(g, 2.0), 1.5, 1.0), 0.0);
  EXPECT_THROW(integral_criterion_check(mf, mu, bump.map([](double v) { return v - 3; }), 1.5, 1.0),
               InvalidArgument);
  EXPECT_THROW(integral_criterion_check(mf, mu, bump, 2.0, 1.0), InvalidArgument);
}
