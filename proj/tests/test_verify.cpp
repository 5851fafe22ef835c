#include <gtest/gtest.h>

#include <cmath>

#include "fplab/errors.hpp"
#include "fplab/verify.hpp"
#include "support.hpp"

using namespace fplab;
using fplab::testing::grid1;

namespace {

const Lab& ou_lab() {
  static const Lab lab = Lab::build(fplab::testing::ou1(), grid1(-6, 6, 1024));
  return lab;
}

const Lab& heat_lab() {
  static const Lab lab = Lab::build(Model::with_drift(1, {"1"}, {"0"}), grid1(0, 1, 256));
  return lab;
}

CheckContext ou_context() {
  CheckContext ctx;
  ctx.lab = &ou_lab();
  ctx.rho = 1.0;
  return ctx;
}

Field smoothed_step(const GridPtr& g) {
  return Field::sample(g, [](auto x) { return 1 + 0.5 * (1 + std::tanh(x[0])) / 2; });
}

double context_number(const CheckResult& r, const std::string& key) {
  for (const auto& [k, v] : r.context) {
    if (k == key) return std::get<double>(v);
  }
  ADD_FAILURE() << "missing context key " << key;
  return 0.0;
}

}  // namespace

TEST(Names, RoundTrip) {
  for (CheckId id : kAllChecks) {
    EXPECT_EQ(check_from_string(to_string(id)), id);
    EXPECT_FALSE(anchor(id).empty());
  }
  EXPECT_EQ(to_string(CheckId::global_phi), "GLOBAL_PHI");
  EXPECT_FALSE(check_from_string("global_phi").has_value());
}

TEST(Lab, StationaryIsGibbs) {
  const Lab& lab = ou_lab();
  const auto mu = gibbs_measure(*lab.fields.potential);
  EXPECT_LE((lab.mu.weights() - mu.weights()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(GlobalPhi, SharpPoincare) {
  auto ctx = ou_context();
  ctx.phi = make_phi(PhiKind::variance);
  ctx.f = fplab::testing::x1_field(ou_lab().grid);
  const auto r = run_check(CheckId::global_phi, ctx);
  EXPECT_NEAR(r.lhs, 1.0, 1e-6);
  EXPECT_NEAR(r.rhs, 1.0, 1e-6);
  EXPECT_LE(std::abs(r.margin), 2e-2);
  EXPECT_TRUE(r.pass);
  EXPECT_EQ(r.pass, r.margin >= -r.tolerance);
}

TEST(RefinedGlobal, SmoothBump) {
  auto ctx = ou_context();
  ctx.p = 1.5;
  ctx.f = Field::sample(ou_lab().grid, [](auto x) { return 1 + 0.3 * std::exp(-x[0] * x[0]); });
  const auto r = run_check(CheckId::refined_global, ctx);
  EXPECT_GE(r.margin, 0.0);
  EXPECT_TRUE(r.pass);
}

TEST(Duality, Ou) {
  auto ctx = ou_context();
  ctx.u0 = Field::sample(ou_lab().grid, [](auto x) { return std::exp(-(x[0] - 1) * (x[0] - 1)); });
  ctx.t = 1.0;
  const auto r = run_check(CheckId::duality, ctx);
  EXPECT_LE(r.lhs, 1e-10);
  EXPECT_TRUE(r.pass);
}

TEST(Duality, RequiresReversibleModel) {
  const Lab lab = Lab::build(Model::with_drift(1, {"1"}, {"x1"}), grid1(-6, 6, 64));
  CheckContext ctx;
  ctx.lab = &lab;
  ctx.u0 = Field::constant(lab.grid, 1.0);
  ctx.t = 0.1;
  EXPECT_THROW(run_check(CheckId::duality, ctx), InvalidArgument);
}

TEST(Decay, FokkerPlanckShiftedGaussianRate) {
  const Lab lab = Lab::build(fplab::testing::ou1(), grid1(-8, 8, 512));
  const auto u0 = Field::sample(lab.grid, [](auto x) { return std::exp(-0.5 * (x[0] - 1) * (x[0] - 1)); });
  const auto rep = decay_report_fokker_planck(lab, make_phi(PhiKind::boltzmann), u0, 2.0, 1e-3, 0.5);
  ASSERT_TRUE(rep.fitted_rate.has_value());
  EXPECT_NEAR(*rep.fitted_rate, 2.0, 0.1);
  EXPECT_EQ(rep.theoretical_rate, 2.0);
  // Ent = m_t^2 / 2 with m_t = e^{-t}.
  EXPECT_NEAR(rep.entropy.front(), 0.5, 1e-3);
}

TEST(Decay, SemigroupVarianceOfIdentity) {
  const Lab& lab = ou_lab();
  const auto rep = decay_report_semigroup(lab, make_phi(PhiKind::variance), fplab::testing::x1_field(lab.grid),
                                          2.0, 1e-3, 0.5, Scheme::crank_nicolson);
  for (std::size_t k = 0; k < rep.times.size(); ++k) {
    EXPECT_NEAR(rep.entropy[k] / rep.entropy.front(), std::exp(-2 * rep.times[k]), 0.02 * std::exp(-2 * rep.times[k]));
  }
  EXPECT_EQ(rep.dissipation.size(), rep.times.size());
  EXPECT_NEAR(rep.dissipation.front(), -2.0, 1e-3);
}

TEST(Decay, EquilibriumIsDegenerate) {
  const Lab& lab = ou_lab();
  const auto rep = decay_report_fokker_planck(lab, make_phi(PhiKind::boltzmann), lab.stationary, 1.0, 1e-2, 0.5);
  EXPECT_TRUE(rep.degenerate);
  EXPECT_FALSE(rep.violation);
  auto ctx = ou_context();
  ctx.phi = make_phi(PhiKind::boltzmann);
  ctx.u0 = lab.stationary;
  ctx.t_end = 1.0;
  ctx.dt = 1e-2;
  const auto r = run_check(CheckId::fp_decay, ctx);
  EXPECT_TRUE(r.pass);
  ASSERT_TRUE(r.decay.has_value());
  EXPECT_TRUE(r.decay->degenerate);
}

TEST(Decay, WrongRhoIsCaught) {
  auto ctx = ou_context();
  ctx.rho = 5.0;
  ctx.phi = make_phi(PhiKind::variance);
  ctx.f = Field::sample(ou_lab().grid, [](auto x) { return x[0] * x[0]; });
  ctx.t_end = 1.0;
  const auto r = run_check(CheckId::exp_decay, ctx);
  EXPECT_FALSE(r.pass);
  EXPECT_TRUE(r.decay->violation);
  ctx.rho = 1.0;
  EXPECT_TRUE(run_check(CheckId::exp_decay, ctx).pass);
}

TEST(Decay, NoFitWithoutConstant) {
  const Lab& lab = heat_lab();
  const auto f = Field::sample(lab.grid, [](auto x) { return 1 + 0.5 * std::cos(M_PI * x[0]); });
  const auto rep = decay_report_semigroup(lab, make_phi(PhiKind::power, 1.5), f, 0.2, 1e-3, std::nullopt);
  EXPECT_FALSE(rep.fitted_rate.has_value());
  EXPECT_EQ(rep.theoretical_rate, 0.0);
}

TEST(Local, RefinedAtTenthOfUnitTime) {
  auto ctx = ou_context();
  ctx.p = 1.5;
  ctx.f = smoothed_step(ou_lab().grid);
  ctx.t = 0.1;
  ctx.scheme = Scheme::crank_nicolson;
  const auto r = run_check(CheckId::refined_local, ctx);
  EXPECT_GE(r.margin, -1e-6);
  const auto rr = run_check(CheckId::refined_reverse, ctx);
  EXPECT_GE(rr.margin, -1e-6);
}

TEST(Local, SidesVanishAsTimeShrinks) {
  auto ctx = ou_context();
  ctx.p = 1.5;
  ctx.f = smoothed_step(ou_lab().grid);
  ctx.scheme = Scheme::crank_nicolson;
  for (CheckId id : {CheckId::refined_local, CheckId::refined_reverse}) {
    const auto scan = local_inequality_scan(id, ctx, {0.2, 0.1, 0.05, 0.01});
    for (std::size_t k = 1; k < scan.size(); ++k) {
      EXPECT_LT(context_number(scan[k], "max_abs_rhs"), context_number(scan[k - 1], "max_abs_rhs"));
      EXPECT_LT(std::abs(scan[k].margin), std::abs(scan[k - 1].margin) + 1e-6);
    }
  }
}

TEST(Local, SandwichOnBattery) {
  auto ctx = ou_context();
  ctx.p = 1.3;
  ctx.scheme = Scheme::crank_nicolson;
  for (const auto& tf : test_battery(ou_lab().grid, 17, 8, BatteryRange::positive)) {
    ctx.f = tf.values;
    for (double t : {0.05, 0.2}) {
      ctx.t = t;
      const auto upper = run_check(CheckId::refined_local, ctx);
      const auto lower = run_check(CheckId::refined_reverse, ctx);
      EXPECT_TRUE(upper.pass) << tf.label << " t=" << t << " margin " << upper.margin;
      EXPECT_TRUE(lower.pass) << tf.label << " t=" << t << " margin " << lower.margin;
    }
  }
}

TEST(Local, HeatUsesTwoT) {
  CheckContext ctx;
  ctx.lab = &heat_lab();
  ctx.rho = 0.0;
  ctx.p = 1.5;
  ctx.scheme = Scheme::crank_nicolson;
  ctx.f = Field::sample(ctx.lab->grid, [](auto x) { return 1.5 + std::tanh(8 * (x[0] - 0.45)); });
  for (CheckId id : {CheckId::refined_local, CheckId::refined_reverse}) {
    for (const auto& r : local_inequality_scan(id, ctx, {0.01, 0.02, 0.05})) {
      EXPECT_GE(r.margin, -1e-6) << to_string(id);
    }
  }
}

TEST(Local, IsoperimetricPair) {
  auto ctx = ou_context();
  ctx.phi = make_phi(PhiKind::gauss_isoperimetry);
  ctx.scheme = Scheme::crank_nicolson;
  ctx.f = Field::sample(ou_lab().grid, [](auto x) { return 0.5 + 0.4 * std::tanh(x[0]); });
  ctx.t = 0.1;
  EXPECT_GE(run_check(CheckId::iso_local, ctx).margin, -1e-6);
  EXPECT_GE(run_check(CheckId::iso_reverse, ctx).margin, -1e-6);
  ctx.phi = make_phi(PhiKind::boltzmann);
  EXPECT_THROW(run_check(CheckId::iso_local, ctx), InvalidArgument);
}

TEST(Monotone, WeakerRhoWidensMargins) {
  const auto g = ou_lab().grid;
  const auto pos = Field::sample(g, [](auto x) { return 1.2 + 0.4 * std::sin(x[0]); });
  const auto unit = Field::sample(g, [](auto x) { return 0.5 + 0.3 * std::tanh(x[0] - 0.2); });
  struct Case {
    CheckId id;
    bool gauss;
  };
  for (const Case c : {Case{CheckId::global_phi, false}, Case{CheckId::beckner, false},
                       Case{CheckId::refined_global, false}, Case{CheckId::integral_criterion, false},
                       Case{CheckId::refined_local, false}, Case{CheckId::refined_reverse, false},
                       Case{CheckId::iso_global, true}, Case{CheckId::iso_local, true},
                       Case{CheckId::iso_reverse, true}}) {
    auto ctx = ou_context();
    ctx.p = 1.5;
    ctx.t = 0.1;
    ctx.scheme = Scheme::crank_nicolson;
    ctx.phi = c.gauss ? make_phi(PhiKind::gauss_isoperimetry) : make_phi(PhiKind::boltzmann);
    ctx.f = c.gauss ? unit : pos;
    const double base = run_check(c.id, ctx).margin;
    ctx.rho = 0.9;
    EXPECT_GT(run_check(c.id, ctx).margin, base) << to_string(c.id);
  }
}

TEST(Production, MatchesDissipation) {
  auto ctx = ou_context();
  ctx.t = 0.5;
  ctx.dt = 1e-3;
  ctx.scheme = Scheme::crank_nicolson;
  for (const auto& phi : {make_phi(PhiKind::boltzmann), make_phi(PhiKind::variance), make_phi(PhiKind::power, 1.5)}) {
    ctx.phi = phi;
    ctx.f = Field::sample(ou_lab().grid, [](auto x) { return 1.5 + std::sin(x[0]) * std::exp(-x[0] * x[0] / 8); });
    const auto r = run_check(CheckId::entropy_production, ctx);
    const double rate = context_number(r, "dissipation");
    EXPECT_LE(r.lhs, 1e-3 * std::abs(rate)) << phi.label();
    EXPECT_LT(rate, 0.0);
  }
}

TEST(Production, FokkerPlanckDissipation) {
  auto ctx = ou_context();
  ctx.t = 0.5;
  ctx.scheme = Scheme::crank_nicolson;
  ctx.phi = make_phi(PhiKind::boltzmann);
  ctx.u0 = Field::sample(ou_lab().grid, [](auto x) { return std::exp(-(x[0] - 1) * (x[0] - 1)); });
  EXPECT_TRUE(run_check(CheckId::fp_dissipation, ctx).pass);
}

TEST(RhoZero, AlgebraicRateOnHeat) {
  CheckContext ctx;
  ctx.lab = &heat_lab();
  ctx.p = 1.5;
  ctx.t_end = 1.0;
  for (const auto& tf : test_battery(heat_lab().grid, 3, 6, BatteryRange::positive)) {
    ctx.f = tf.values;
    const auto r = run_check(CheckId::rho_zero_rate, ctx);
    EXPECT_TRUE(r.pass) << tf.label << " " << r.margin;
  }
}

TEST(Context, MissingIngredients) {
  CheckContext empty;
  EXPECT_THROW(run_check(CheckId::global_phi, empty), InvalidArgument);
  auto ctx = ou_context();
  EXPECT_THROW(run_check(CheckId::global_phi, ctx), InvalidArgument);
  ctx.phi = make_phi(PhiKind::boltzmann);
  EXPECT_THROW(run_check(CheckId::global_phi, ctx), InvalidArgument);
  ctx.f = Field::sample(ou_lab().grid, [](auto x) { return x[0]; });
  EXPECT_THROW(run_check(CheckId::global_phi, ctx), InvalidArgument);  // negative values
  ctx.rho = 0.0;
  ctx.f = Field::constant(ou_lab().grid, 1.0);
  EXPECT_THROW(run_check(CheckId::global_phi, ctx), InvalidArgument);  // needs rho > 0
  EXPECT_THROW(local_inequality_scan(CheckId::beckner, ou_context(), {0.1}), InvalidArgument);
}

TEST(Battery, DeterministicAndInRange) {
  const auto g = ou_lab().grid;
  const auto a = test_battery(g, 42, 20, BatteryRange::positive);
  const auto b = test_battery(g, 42, 20, BatteryRange::positive);
  ASSERT_EQ(a.size(), 20u);
  for (std::size_t k = 0; k < a.size(); ++k) {
    EXPECT_EQ(a[k].label, b[k].label);
    EXPECT_TRUE((a[k].values.values().array() == b[k].values.values().array()).all());
    EXPECT_GT(a[k].values.min(), 0.0);
    EXPECT_LE(a[k].values.max(), 3.5 + 1e-12);
  }
  for (const auto& tf : test_battery(g, 42, 20, BatteryRange::unit_interval)) {
    EXPECT_GE(tf.values.min(), 0.05 - 1e-12);
    EXPECT_LE(tf.values.max(), 0.95 + 1e-12);
  }
  const auto c = test_battery(g, 43, 20, BatteryRange::positive);
  EXPECT_FALSE((a[1].values.values().array() == c[1].values.values().array()).all());
}
