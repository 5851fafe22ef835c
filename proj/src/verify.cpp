#include "fplab/verify.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "fplab/errors.hpp"

namespace fplab {

namespace {

struct CheckInfo {
  CheckId id;
  const char* name;
  const char* formula;
};

constexpr std::array<CheckInfo, 17> kCheckInfo{{
    {CheckId::global_phi, "GLOBAL_PHI",
     "global Phi-entropy inequality: Ent_mu(f) <= (1/(2 rho)) mu(Phi''(f) Gamma(f))"},
    {CheckId::beckner, "BECKNER",
     "Beckner inequality: (mu(g^2) - mu(g^(2/p))^p)/(p-1) <= (2/(p rho)) mu(Gamma(g))"},
    {CheckId::entropy_production, "ENTROPY_PRODUCTION",
     "entropy production: d/dt Ent_mu(P_t f) = -mu(Phi''(P_t f) Gamma(P_t f))"},
    {CheckId::exp_decay, "EXP_DECAY",
     "exponential decay: Ent_mu(P_t f) <= exp(-t/C) Ent_mu(f)"},
    {CheckId::refined_local, "REFINED_LOCAL",
     "refined local Phi_p inequality: (P_t(f^p) - P_t(f)^p (P_t(f^p)/P_t(f)^p)^(2/p-1))/(p-1)^2 "
     "<= ((1-exp(-2 rho t))/rho) P_t(f^(p-2) Gamma(f))"},
    {CheckId::refined_reverse, "REFINED_REVERSE",
     "reverse refined local Phi_p inequality: (P_t(f^p) - P_t(f)^p (P_t(f^p)/P_t(f)^p)^(2/p-1))/(p-1)^2 "
     ">= ((exp(2 rho t)-1)/rho) ((P_t f)^p/P_t(f^p))^(2/p-1) (P_t f)^(p-2) Gamma(P_t f)"},
    {CheckId::refined_global, "REFINED_GLOBAL",
     "refined Phi_p inequality: (p^2/(p-1)^2) [mu(g^2) - mu(g^(2/p))^p (mu(g^2)/mu(g^(2/p))^p)^(2/p-1)] "
     "<= (4/rho) mu(Gamma(g))"},
    {CheckId::beckner_vs_refined, "BECKNER_VS_REFINED",
     "Beckner functional <= (p/(2(p-1)^2)) [mu(g^2) - mu(g^(2/p))^p (mu(g^2)/mu(g^(2/p))^p)^(2/p-1)]"},
    {CheckId::integral_criterion, "INTEGRAL_CRITERION",
     "integral curvature criterion: mu(g^((2-p)/(p-1)) Gamma_2(g)) >= rho mu(g^((2-p)/(p-1)) Gamma(g))"},
    {CheckId::iso_local, "ISO_LOCAL",
     "local isoperimetric Phi-entropy inequality (Phi = -U): Ent_{P_t}(f) <= "
     "(1/Phi''(P_t f)) log(1 + ((1-exp(-2 rho t))/(2 rho)) Phi''(P_t f) P_t(Phi''(f) Gamma(f)))"},
    {CheckId::iso_reverse, "ISO_REVERSE",
     "reverse local isoperimetric Phi-entropy inequality (Phi = -U): Ent_{P_t}(f) >= "
     "(1/Phi''(P_t f)) log(1 + ((exp(2 rho t)-1)/(2 rho)) Phi''(P_t f)^2 Gamma(P_t f))"},
    {CheckId::iso_global, "ISO_GLOBAL",
     "global isoperimetric Phi-entropy inequality (Phi = -U): Ent_mu(f) <= "
     "(1/Phi''(mu f)) log(1 + (Phi''(mu f)/(2 rho)) mu(Phi''(f) Gamma(f)))"},
    {CheckId::iso_sharper, "ISO_SHARPER",
     "log(1+x) <= x: isoperimetric bound <= (1/(2 rho)) mu(Phi''(f) Gamma(f))"},
    {CheckId::rho_zero_rate, "RHO_ZERO_RATE",
     "algebraic rate at rho = 0: |H'(t)| <= |H'(0)|/(1 + alpha t), alpha = ((2-p)/p) |H'(0)|/H(0), "
     "H(t) = Ent_mu^{Phi_p}(P_t f)"},
    {CheckId::fp_decay, "FP_DECAY",
     "Fokker-Planck decay: Ent_mu(u_t/u_inf) <= exp(-t/C) Ent_mu(u_0/u_inf)"},
    {CheckId::fp_dissipation, "FP_DISSIPATION",
     "Fokker-Planck dissipation: d/dt Ent_mu(u_t/u_inf) = -mu(Phi''(u_t/u_inf) Gamma(u_t/u_inf))"},
    {CheckId::duality, "DUALITY",
     "backward/forward duality: u_t = exp(-V) P_t(exp(V) u_0)"},
}};

constexpr double kInequalityTolerance = 1e-6;
constexpr double kProductionRelativeTolerance = 1e-3;
constexpr double kDecayRelativeTolerance = 1e-9;
constexpr double kDualityTolerance = 1e-10;
constexpr double kDegenerateEntropy = 1e-13;
constexpr double kRateSampleInterval = 1e-2;

template <typename T>
const T& need(const std::optional<T>& value, CheckId id, const char* what) {
  if (!value) {
    throw InvalidArgument(fmt::format("{} needs {} in its context", to_string(id), what));
  }
  return *value;
}

const Lab& need_lab(const CheckContext& ctx, CheckId id) {
  if (ctx.lab == nullptr) {
    throw InvalidArgument(fmt::format("{} needs a discretized model", to_string(id)));
  }
  return *ctx.lab;
}

double positive_rho(const CheckContext& ctx, CheckId id) {
  const double rho = need(ctx.rho, id, "rho");
  if (!(rho > 0.0)) {
    throw InvalidArgument(fmt::format("{} needs rho > 0, got {}", to_string(id), rho));
  }
  return rho;
}

double entropy_constant(const CheckContext& ctx, CheckId id) {
  if (ctx.entropy_constant) return *ctx.entropy_constant;
  return 1.0 / (2.0 * positive_rho(ctx, id));
}

// (1 - e^{-2 rho t}) / rho, and 2t at rho = 0.
double forward_factor(double rho, double t) {
  return rho == 0.0 ? 2.0 * t : -std::expm1(-2.0 * rho * t) / rho;
}

// (e^{2 rho t} - 1) / rho, and 2t at rho = 0.
double reverse_factor(double rho, double t) {
  return rho == 0.0 ? 2.0 * t : std::expm1(2.0 * rho * t) / rho;
}

void require_in_interval(const PhiFunction& phi, const Field& f) {
  for (Index i = 0; i < f.size(); ++i) {
    if (!phi.interval().admits_value(f[i])) {
      throw InvalidArgument(fmt::format("test field value {} outside the interval of {}",
                                        f[i], phi.label()));
    }
  }
}

// mu(Phi''(v) Gamma(v)).
double fisher_term(const Lab& lab, const PhiFunction& phi, const Field& v) {
  const Field g = gamma(lab.fields, v);
  const auto& w = lab.mu.weights();
  double s = 0.0;
  for (Index i = 0; i < v.size(); ++i) s += w[i] * phi.second(v[i]) * g[i];
  return s;
}

CheckResult make_result(CheckId id, double lhs, double rhs, double tolerance) {
  CheckResult r;
  r.id = id;
  r.anchor = anchor(id);
  r.lhs = lhs;
  r.rhs = rhs;
  r.margin = rhs - lhs;
  r.tolerance = tolerance;
  r.pass = r.margin >= -tolerance;
  return r;
}

void add_common_context(CheckResult& r, const CheckContext& ctx) {
  if (!ctx.f_label.empty()) r.context.emplace_back("function", ctx.f_label);
  if (ctx.phi) r.context.emplace_back("phi", ctx.phi->label());
  if (ctx.p) r.context.emplace_back("p", *ctx.p);
  if (ctx.t) r.context.emplace_back("t", *ctx.t);
  if (ctx.t_end) r.context.emplace_back("t_end", *ctx.t_end);
  if (ctx.rho) r.context.emplace_back("rho", *ctx.rho);
  if (ctx.lab) {
    const Grid& g = *ctx.lab->grid;
    r.context.emplace_back("grid", g.dim() == 1
                                       ? fmt::format("[{}, {}] x {}", g.lower(0), g.upper(0), g.cells(0))
                                       : fmt::format("[{}, {}] x [{}, {}], {} x {}", g.lower(0),
                                                     g.upper(0), g.lower(1), g.upper(1),
                                                     g.cells(0), g.cells(1)));
  }
}

// Worst node of a pointwise inequality lhs_i <= rhs_i over the core.
CheckResult worst_over_core(CheckId id, const Grid& grid, double core,
                            const Eigen::VectorXd& lhs, const Eigen::VectorXd& rhs,
                            double tolerance) {
  Index worst = -1;
  double worst_margin = std::numeric_limits<double>::infinity();
  double largest_lhs = 0.0, largest_rhs = 0.0;
  for (Index i = 0; i < lhs.size(); ++i) {
    if (!grid.in_core(i, core)) continue;
    largest_lhs = std::max(largest_lhs, std::abs(lhs[i]));
    largest_rhs = std::max(largest_rhs, std::abs(rhs[i]));
    const double m = rhs[i] - lhs[i];
    if (m < worst_margin) {
      worst_margin = m;
      worst = i;
    }
  }
  if (worst < 0) throw InvalidArgument("core sub-box contains no grid node");
  CheckResult r = make_result(id, lhs[worst], rhs[worst], tolerance);
  const auto x = grid.point(worst);
  r.context.emplace_back("worst_x1", x[0]);
  if (grid.dim() == 2) r.context.emplace_back("worst_x2", x[1]);
  r.context.emplace_back("max_abs_lhs", largest_lhs);
  r.context.emplace_back("max_abs_rhs", largest_rhs);
  return r;
}

CheckResult check_local(CheckId id, const CheckContext& ctx) {
  const Lab& lab = need_lab(ctx, id);
  const Field& f = need(ctx.f, id, "a test function f");
  const double t = need(ctx.t, id, "a time t");
  const double rho = need(ctx.rho, id, "rho");
  const double tol = ctx.tolerance.value_or(kInequalityTolerance);
  const Grid& grid = *lab.grid;
  const Propagator& prop = lab.propagator;
  // At least 100 steps, so Crank-Nicolson stays accurate on short horizons.
  const double dt = std::min(ctx.dt, t / 100.0);
  auto P = [&](const Field& g) { return semigroup_apply(prop, g, t, dt, ctx.scheme); };
  const Index n = f.size();
  Eigen::VectorXd lhs(n), rhs(n);

  if (id == CheckId::refined_local || id == CheckId::refined_reverse) {
    const double p = need(ctx.p, id, "p");
    if (!(p > 1.0 && p < 2.0)) {
      throw InvalidArgument(fmt::format("{} needs p in ]1,2[, got {}", to_string(id), p));
    }
    if (!(f.min() > 0.0)) throw InvalidArgument("refined local checks need a positive f");
    const Field pf = P(f);
    const Field pfp = P(f.map([p](double v) { return std::pow(v, p); }));
    if (!(pf.min() > 0.0)) throw NumericalError("semigroup lost positivity");
    const double e = 2.0 / p - 1.0;
    Eigen::VectorXd bracket(n);
    for (Index i = 0; i < n; ++i) {
      const double a = pfp[i];
      const double b = std::pow(pf[i], p);
      bracket[i] = (a - b * std::pow(a / b, e)) / ((p - 1.0) * (p - 1.0));
    }
    if (id == CheckId::refined_local) {
      const Field gf = gamma(lab.fields, f);
      Eigen::VectorXd weight(n);
      for (Index i = 0; i < n; ++i) weight[i] = std::pow(f[i], p - 2.0) * gf[i];
      const Field pw = P(Field(lab.grid, weight));
      const double c = forward_factor(rho, t);
      lhs = bracket;
      rhs = c * pw.values();
    } else {
      const Field gpf = gamma(lab.fields, pf);
      const double c = reverse_factor(rho, t);
      for (Index i = 0; i < n; ++i) {
        const double a = pfp[i];
        const double b = std::pow(pf[i], p);
        lhs[i] = c * std::pow(b / a, e) * std::pow(pf[i], p - 2.0) * gpf[i];
      }
      rhs = bracket;
    }
  } else {
    const PhiFunction& phi = need(ctx.phi, id, "Phi");
    if (phi.kind() != PhiKind::gauss_isoperimetry) {
      throw InvalidArgument(fmt::format("{} is stated for Phi = -U only", to_string(id)));
    }
    require_in_interval(phi, f);
    const Field pf = P(f);
    const Field pphi = P(f.map([&](double v) { return phi.value(v); }));
    Eigen::VectorXd ent(n), phi2(n);
    for (Index i = 0; i < n; ++i) {
      ent[i] = pphi[i] - phi.value(pf[i]);
      phi2[i] = phi.second(pf[i]);
    }
    if (id == CheckId::iso_local) {
      const Field gf = gamma(lab.fields, f);
      Eigen::VectorXd weight(n);
      for (Index i = 0; i < n; ++i) weight[i] = phi.second(f[i]) * gf[i];
      const Field pw = P(Field(lab.grid, weight));
      const double k = 0.5 * forward_factor(rho, t);
      for (Index i = 0; i < n; ++i) {
        rhs[i] = std::log1p(k * phi2[i] * pw[i]) / phi2[i];
      }
      lhs = ent;
    } else {
      const Field gpf = gamma(lab.fields, pf);
      const double k = 0.5 * reverse_factor(rho, t);
      for (Index i = 0; i < n; ++i) {
        lhs[i] = std::log1p(k * phi2[i] * phi2[i] * gpf[i]) / phi2[i];
      }
      rhs = ent;
    }
  }
  CheckResult r = worst_over_core(id, grid, ctx.core_fraction, lhs, rhs, tol);
  r.context.emplace_back("scheme", to_string(ctx.scheme));
  r.context.emplace_back("step", dt);
  if (rho == 0.0) r.context.emplace_back("note", "rho = 0: curvature factors replaced by 2t");
  return r;
}

// Shared by the two derivative identities: centered difference of H around t
// against the dissipation at t, evolving `state` with `stepper`.
template <typename Entropy, typename Dissipation>
CheckResult check_derivative(CheckId id, const CheckContext& ctx, Eigen::VectorXd state,
                             const SparseMatrix& op, Entropy entropy,
                             Dissipation dissipation) {
  const double t = need(ctx.t, id, "a time t");
  if (!(t > 0.0)) throw InvalidArgument("derivative checks need t > 0");
  const int n = std::max(2, static_cast<int>(std::lround(t / ctx.dt)));
  const double step = t / n;
  const TimeStepper stepper(op, step, ctx.scheme);
  for (int k = 0; k < n - 1; ++k) stepper.step(state);
  const double before = entropy(state);
  stepper.step(state);
  const double rate = dissipation(state);
  stepper.step(state);
  const double after = entropy(state);
  const double centered = (after - before) / (2.0 * step);
  const double tol = ctx.tolerance.value_or(kProductionRelativeTolerance) * std::abs(rate);
  CheckResult r = make_result(id, std::abs(centered - rate), 0.0, tol);
  r.context.emplace_back("centered_difference", centered);
  r.context.emplace_back("dissipation", rate);
  r.context.emplace_back("step", step);
  r.context.emplace_back("scheme", to_string(ctx.scheme));
  return r;
}

double least_squares_rate(const std::vector<double>& times, const std::vector<double>& h) {
  double st = 0, sy = 0, stt = 0, sty = 0;
  int m = 0;
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (!(h[k] > kDegenerateEntropy)) continue;
    const double y = std::log(h[k]);
    st += times[k];
    sy += y;
    stt += times[k] * times[k];
    sty += times[k] * y;
    ++m;
  }
  if (m < 2) return std::numeric_limits<double>::quiet_NaN();
  const double denom = m * stt - st * st;
  return -(m * sty - st * sy) / denom;
}

void finish_decay(DecayReport& rep, std::optional<double> entropy_constant) {
  rep.entropy_constant = entropy_constant;
  rep.theoretical_rate = entropy_constant && *entropy_constant > 0.0 ? 1.0 / *entropy_constant : 0.0;
  const double h0 = rep.entropy.front();
  rep.degenerate = !(h0 > kDegenerateEntropy);
  rep.bound.resize(rep.times.size());
  for (std::size_t k = 0; k < rep.times.size(); ++k) {
    rep.bound[k] = h0 * std::exp(-rep.theoretical_rate * rep.times[k]);
  }
  if (rep.degenerate) return;
  if (rep.theoretical_rate > 0.0) {
    const double rate = least_squares_rate(rep.times, rep.entropy);
    if (std::isfinite(rate)) rep.fitted_rate = rate;
  }
  for (std::size_t k = 0; k < rep.times.size(); ++k) {
    if (rep.entropy[k] > rep.bound[k] * (1.0 + kDecayRelativeTolerance)) rep.violation = true;
  }
}

CheckResult decay_check(CheckId id, DecayReport rep) {
  if (rep.degenerate) {
    CheckResult r = make_result(id, 0.0, 0.0, 0.0);
    r.context.emplace_back("note", "degenerate: initial entropy is zero");
    r.decay = std::move(rep);
    return r;
  }
  std::size_t worst = 0;
  double worst_rel = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < rep.times.size(); ++k) {
    const double rel = (rep.bound[k] - rep.entropy[k]) / rep.bound[k];
    if (rel < worst_rel) {
      worst_rel = rel;
      worst = k;
    }
  }
  CheckResult r = make_result(id, rep.entropy[worst], rep.bound[worst],
                              kDecayRelativeTolerance * rep.bound[worst]);
  r.context.emplace_back("worst_t", rep.times[worst]);
  if (rep.fitted_rate) r.context.emplace_back("fitted_rate", *rep.fitted_rate);
  r.context.emplace_back("theoretical_rate", rep.theoretical_rate);
  r.decay = std::move(rep);
  return r;
}

CheckResult check_rho_zero_rate(const CheckContext& ctx) {
  const CheckId id = CheckId::rho_zero_rate;
  const Lab& lab = need_lab(ctx, id);
  const Field& f = need(ctx.f, id, "a test function f");
  const double p = need(ctx.p, id, "p");
  const double t_end = ctx.t_end.value_or(1.0);
  const PhiFunction phi = make_phi(PhiKind::power, p);
  require_in_interval(phi, f);
  const auto& w = lab.mu.weights();
  const SparseMatrix& l = lab.propagator.backward();

  // H'(t) = mu(Phi'(v) L_h v) exactly along the semi-discrete flow.
  auto derivative_of_entropy = [&](const Eigen::VectorXd& v) {
    const Eigen::VectorXd lv = l * v;
    double s = 0.0;
    for (Index i = 0; i < v.size(); ++i) s += w[i] * phi.first(v[i]) * lv[i];
    return s;
  };

  const auto [intervals, interval] = step_plan(t_end, kRateSampleInterval);
  const auto [sub, step] = step_plan(interval, std::min(ctx.dt, interval));
  const TimeStepper stepper(l, step, ctx.scheme);
  Eigen::VectorXd v = f.values();
  const double h0 = phi_entropy(lab.mu, phi, f);
  const double d0 = std::abs(derivative_of_entropy(v));
  if (!(h0 > kDegenerateEntropy)) throw InvalidArgument("RHO_ZERO_RATE needs a non-constant f");
  const double alpha = (2.0 - p) / p * d0 / h0;

  double worst_margin = std::numeric_limits<double>::infinity();
  double worst_lhs = 0, worst_rhs = 0, worst_t = 0;
  for (int k = 0; k <= intervals; ++k) {
    if (k > 0) {
      for (int s = 0; s < sub; ++s) stepper.step(v);
    }
    const double t = k * interval;
    const double lhs = std::abs(derivative_of_entropy(v));
    const double rhs = d0 / (1.0 + alpha * t);
    if (rhs - lhs < worst_margin) {
      worst_margin = rhs - lhs;
      worst_lhs = lhs;
      worst_rhs = rhs;
      worst_t = t;
    }
  }
  CheckResult r = make_result(id, worst_lhs, worst_rhs, ctx.tolerance.value_or(kInequalityTolerance));
  r.context.emplace_back("worst_t", worst_t);
  r.context.emplace_back("alpha", alpha);
  r.context.emplace_back("note", "rho = 0: no exponential rate is fitted");
  return r;
}

CheckResult check_duality(const CheckContext& ctx) {
  const CheckId id = CheckId::duality;
  const Lab& lab = need_lab(ctx, id);
  const Field& u0 = need(ctx.u0, id, "an initial density u0");
  const double t = need(ctx.t, id, "a time t");
  const Propagator& prop = lab.propagator;
  if (!prop.reversible()) {
    throw InvalidArgument("DUALITY needs gradient mode without perturbation");
  }
  const Trajectory traj = solve_fokker_planck(prop, u0, t, ctx.dt, ctx.scheme);
  const Eigen::VectorXd& ut = traj.snapshots.back().values();
  const Eigen::VectorXd& v = prop.potential()->values();
  const double v_min = v.minCoeff();
  const double mass = prop.volumes().dot(u0.values());
  Eigen::VectorXd lifted(v.size());
  for (Index i = 0; i < v.size(); ++i) lifted[i] = std::exp(v[i] - v_min) * u0[i] / mass;
  const Field pt = semigroup_apply(prop, Field(lab.grid, lifted), t, ctx.dt, ctx.scheme);

  const Grid& grid = *lab.grid;
  double residual = 0.0;
  double scale = 0.0;
  for (Index i = 0; i < v.size(); ++i) {
    if (!grid.is_interior(i, 1)) continue;
    const double dual = std::exp(-(v[i] - v_min)) * pt[i];
    residual = std::max(residual, std::abs(ut[i] - dual));
    scale = std::max(scale, std::abs(ut[i]));
  }
  const double rel = residual / scale;
  CheckResult r = make_result(id, rel, 0.0, ctx.tolerance.value_or(kDualityTolerance));
  r.context.emplace_back("absolute_residual", residual);
  return r;
}

}  // namespace

std::string to_string(CheckId id) {
  for (const auto& info : kCheckInfo) {
    if (info.id == id) return info.name;
  }
  return "UNKNOWN";
}

std::optional<CheckId> check_from_string(const std::string& name) {
  for (const auto& info : kCheckInfo) {
    if (name == info.name) return info.id;
  }
  return std::nullopt;
}

std::string anchor(CheckId id) {
  for (const auto& info : kCheckInfo) {
    if (info.id == id) return info.formula;
  }
  return {};
}

Lab Lab::build(const Model& model, const GridPtr& grid) {
  ModelFields fields = discretize_model(model, grid);
  Propagator prop = assemble(model, grid);
  Field stationary = steady_state(prop);
  Measure mu(grid, stationary.values().cwiseProduct(prop.volumes()));
  return Lab{model, grid, std::move(fields), std::move(prop), std::move(stationary), std::move(mu)};
}

DecayReport decay_report_semigroup(const Lab& lab, const PhiFunction& phi,
                                   const Field& f, double t_end, double dt,
                                   std::optional<double> entropy_constant,
                                   Scheme scheme, int samples) {
  require_in_interval(phi, f);
  DecayReport rep;
  rep.label = fmt::format("semigroup Ent_mu(P_t f), {}", phi.label());
  const auto [steps, step] = step_plan(t_end, dt);
  const int every = std::max(1, steps / std::max(1, samples));
  Eigen::VectorXd v = f.values();
  auto sample = [&](int n) {
    const Field field(lab.grid, v);
    rep.times.push_back(n * step);
    rep.entropy.push_back(phi_entropy(lab.mu, phi, field));
    rep.dissipation.push_back(-fisher_term(lab, phi, field));
  };
  sample(0);
  if (steps > 0) {
    const TimeStepper stepper(lab.propagator.backward(), step, scheme);
    for (int n = 1; n <= steps; ++n) {
      stepper.step(v);
      if (n % every == 0 || n == steps) sample(n);
    }
  }
  finish_decay(rep, entropy_constant);
  return rep;
}

DecayReport decay_report_fokker_planck(const Lab& lab, const PhiFunction& phi,
                                       const Field& u0, double t_end, double dt,
                                       std::optional<double> entropy_constant,
                                       Scheme scheme, int samples) {
  require_same_grid(*lab.grid, u0.grid());
  if (u0.min() < 0.0) throw InvalidArgument("initial density has negative values");
  DecayReport rep;
  rep.label = fmt::format("Fokker-Planck Ent_mu(u_t/u_inf), {}", phi.label());
  const Eigen::VectorXd& uinf = lab.stationary.values();
  const auto [steps, step] = step_plan(t_end, dt);
  const int every = std::max(1, steps / std::max(1, samples));
  Eigen::VectorXd u = u0.values() / lab.propagator.volumes().dot(u0.values());
  auto sample = [&](int n) {
    const Field ratio(lab.grid, u.cwiseQuotient(uinf));
    require_in_interval(phi, ratio);
    rep.times.push_back(n * step);
    rep.entropy.push_back(phi_entropy(lab.mu, phi, ratio));
    rep.dissipation.push_back(-fisher_term(lab, phi, ratio));
  };
  sample(0);
  if (steps > 0) {
    const TimeStepper stepper(lab.propagator.forward(), step, scheme);
    for (int n = 1; n <= steps; ++n) {
      stepper.step(u);
      if (n % every == 0 || n == steps) sample(n);
    }
  }
  finish_decay(rep, entropy_constant);
  return rep;
}

CheckResult run_check(CheckId id, const CheckContext& ctx) {
  CheckResult r;
  switch (id) {
    case CheckId::global_phi: {
      const Lab& lab = need_lab(ctx, id);
      const PhiFunction& phi = need(ctx.phi, id, "Phi");
      const Field& f = need(ctx.f, id, "a test function f");
      const double rho = positive_rho(ctx, id);
      r = make_result(id, phi_entropy(lab.mu, phi, f),
                      fisher_term(lab, phi, f) / (2.0 * rho),
                      ctx.tolerance.value_or(kInequalityTolerance));
      break;
    }
    case CheckId::beckner:
    case CheckId::refined_global:
    case CheckId::beckner_vs_refined: {
      const Lab& lab = need_lab(ctx, id);
      const Field& g = need(ctx.f, id, "a test function g");
      const double p = need(ctx.p, id, "p");
      const double tol = ctx.tolerance.value_or(kInequalityTolerance);
      if (id == CheckId::beckner_vs_refined) {
        r = make_result(id, beckner_functional(lab.mu, g, p), refined_functional(lab.mu, g, p), tol);
      } else {
        const double rho = positive_rho(ctx, id);
        const double dirichlet = integrate(lab.mu, gamma(lab.fields, g));
        if (id == CheckId::beckner) {
          r = make_result(id, beckner_functional(lab.mu, g, p), 2.0 / (p * rho) * dirichlet, tol);
        } else {
          r = make_result(id, 2.0 * p * refined_functional(lab.mu, g, p), 4.0 / rho * dirichlet, tol);
        }
      }
      if (p == 2.0 && id != CheckId::beckner) {
        r.context.emplace_back("note", "p = 2 lies outside the open range ]1,2[ of the local theorem");
      }
      break;
    }
    case CheckId::entropy_production: {
      const Lab& lab = need_lab(ctx, id);
      const PhiFunction& phi = need(ctx.phi, id, "Phi");
      const Field& f = need(ctx.f, id, "a test function f");
      require_in_interval(phi, f);
      r = check_derivative(
          id, ctx, f.values(), lab.propagator.backward(),
          [&](const Eigen::VectorXd& v) { return phi_entropy(lab.mu, phi, Field(lab.grid, v)); },
          [&](const Eigen::VectorXd& v) { return -fisher_term(lab, phi, Field(lab.grid, v)); });
      break;
    }
    case CheckId::fp_dissipation: {
      const Lab& lab = need_lab(ctx, id);
      const PhiFunction& phi = need(ctx.phi, id, "Phi");
      const Field& u0 = need(ctx.u0, id, "an initial density u0");
      const Eigen::VectorXd& uinf = lab.stationary.values();
      auto ratio = [&](const Eigen::VectorXd& u) { return Field(lab.grid, u.cwiseQuotient(uinf)); };
      r = check_derivative(
          id, ctx, u0.values() / lab.propagator.volumes().dot(u0.values()),
          lab.propagator.forward(),
          [&](const Eigen::VectorXd& u) { return phi_entropy(lab.mu, phi, ratio(u)); },
          [&](const Eigen::VectorXd& u) { return -fisher_term(lab, phi, ratio(u)); });
      break;
    }
    case CheckId::exp_decay: {
      const Lab& lab = need_lab(ctx, id);
      const PhiFunction& phi = need(ctx.phi, id, "Phi");
      const Field& f = need(ctx.f, id, "a test function f");
      const double c = entropy_constant(ctx, id);
      r = decay_check(id, decay_report_semigroup(lab, phi, f, ctx.t_end.value_or(2.0), ctx.dt, c,
                                                 ctx.scheme));
      break;
    }
    case CheckId::fp_decay: {
      const Lab& lab = need_lab(ctx, id);
      const PhiFunction& phi = need(ctx.phi, id, "Phi");
      const Field& u0 = need(ctx.u0, id, "an initial density u0");
      const double c = entropy_constant(ctx, id);
      r = decay_check(id, decay_report_fokker_planck(lab, phi, u0, ctx.t_end.value_or(2.0), ctx.dt,
                                                     c, ctx.scheme));
      break;
    }
    case CheckId::refined_local:
    case CheckId::refined_reverse:
    case CheckId::iso_local:
    case CheckId::iso_reverse:
      r = check_local(id, ctx);
      break;
    case CheckId::integral_criterion: {
      const Lab& lab = need_lab(ctx, id);
      const Field& g = need(ctx.f, id, "a test function g");
      const double p = need(ctx.p, id, "p");
      const double rho = need(ctx.rho, id, "rho");
      const double margin = integral_criterion_check(lab.fields, lab.mu, g, p, rho);
      const double with_gamma = integral_criterion_check(lab.fields, lab.mu, g, p, 0.0) - margin;
      // margin = mu(g^k Gamma_2) - rho mu(g^k Gamma); lhs = rho mu(g^k Gamma).
      r = make_result(id, with_gamma, with_gamma + margin,
                      ctx.tolerance.value_or(kInequalityTolerance));
      break;
    }
    case CheckId::iso_global:
    case CheckId::iso_sharper: {
      const Lab& lab = need_lab(ctx, id);
      const PhiFunction& phi = need(ctx.phi, id, "Phi");
      const Field& f = need(ctx.f, id, "a test function f");
      const double rho = positive_rho(ctx, id);
      if (phi.kind() != PhiKind::gauss_isoperimetry) {
        throw InvalidArgument(fmt::format("{} is stated for Phi = -U only", to_string(id)));
      }
      const double m = integrate(lab.mu, f);
      const double phi2 = phi.second(m);
      const double fisher = fisher_term(lab, phi, f);
      const double iso = std::log1p(phi2 / (2.0 * rho) * fisher) / phi2;
      const double tol = ctx.tolerance.value_or(kInequalityTolerance);
      if (id == CheckId::iso_global) {
        r = make_result(id, phi_entropy(lab.mu, phi, f), iso, tol);
      } else {
        r = make_result(id, iso, fisher / (2.0 * rho), tol);
      }
      break;
    }
    case CheckId::rho_zero_rate:
      r = check_rho_zero_rate(ctx);
      break;
    case CheckId::duality:
      r = check_duality(ctx);
      break;
  }
  add_common_context(r, ctx);
  return r;
}

std::vector<CheckResult> local_inequality_scan(CheckId id, CheckContext base,
                                               const std::vector<double>& times) {
  if (id != CheckId::refined_local && id != CheckId::refined_reverse &&
      id != CheckId::iso_local && id != CheckId::iso_reverse) {
    throw InvalidArgument(fmt::format("{} is not a local inequality", to_string(id)));
  }
  std::vector<CheckResult> out;
  out.reserve(times.size());
  for (double t : times) {
    base.t = t;
    out.push_back(run_check(id, base));
  }
  return out;
}

std::vector<TestFunction> test_battery(const GridPtr& grid, std::uint64_t seed,
                                       int count, BatteryRange range) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int dim = grid->dim();
  std::array<double, 2> center{}, length{};
  for (int k = 0; k < dim; ++k) {
    center[k] = 0.5 * (grid->lower(k) + grid->upper(k));
    length[k] = grid->upper(k) - grid->lower(k);
  }
  static constexpr const char* kShapes[] = {"affine", "quadratic", "smoothed-step", "bump"};

  std::vector<TestFunction> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int n = 0; n < count; ++n) {
    const int shape = n % 4;
    // Direction, centre and width relative to the box.
    const double angle = 2.0 * std::numbers::pi * unit(rng);
    const std::array<double, 2> dir =
        dim == 1 ? std::array<double, 2>{unit(rng) < 0.5 ? -1.0 : 1.0, 0.0}
                 : std::array<double, 2>{std::cos(angle), std::sin(angle)};
    std::array<double, 2> c{};
    for (int k = 0; k < dim; ++k) c[k] = center[k] + (unit(rng) - 0.5) * 0.3 * length[k];
    const double width = (0.1 + 0.2 * unit(rng)) * length[0];
    const double sign = unit(rng) < 0.5 ? -1.0 : 1.0;
    double lo = 0.0, hi = 0.0;
    if (range == BatteryRange::positive) {
      lo = 0.3 + 0.7 * unit(rng);
      hi = lo + 0.5 + 2.0 * unit(rng);
    } else {
      lo = 0.05 + 0.25 * unit(rng);
      hi = 0.95 - 0.25 * unit(rng);
    }

    const Field raw = Field::sample(grid, [&](std::span<const double> x) {
      double along = 0.0, r2 = 0.0;
      for (int k = 0; k < dim; ++k) {
        along += dir[k] * (x[k] - c[k]);
        r2 += (x[k] - c[k]) * (x[k] - c[k]);
      }
      switch (shape) {
        case 0:
          return along;
        case 1:
          return sign * (along * along + 0.25 * (r2 - along * along));
        case 2:
          return std::tanh(along / width);
        default:
          return sign * std::exp(-r2 / (2.0 * width * width));
      }
    });
    const double rmin = raw.min();
    const double rmax = raw.max();
    Field scaled = raw.map([&](double v) { return lo + (hi - lo) * (v - rmin) / (rmax - rmin); });
    out.push_back({fmt::format("{}#{}", kShapes[shape], n), std::move(scaled)});
  }
  return out;
}

}  // namespace fplab
