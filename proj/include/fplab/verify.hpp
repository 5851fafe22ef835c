#pragma once

// Numerical evaluation of Phi-entropy inequalities, decay estimates and the
// backward/forward duality on a concrete discretized model.
//
// Every check reports lhs and rhs of an inequality "lhs <= rhs" (identities
// are reported as lhs = |difference|, rhs = 0), the margin rhs - lhs, and
// passes when margin >= -tolerance. Pointwise (local) checks are reduced to
// the worst node of the central sub-box.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "fplab/model.hpp"
#include "fplab/operators.hpp"
#include "fplab/pde.hpp"
#include "fplab/phi.hpp"

namespace fplab {

enum class CheckId {
  global_phi,
  beckner,
  entropy_production,
  exp_decay,
  refined_local,
  refined_reverse,
  refined_global,
  beckner_vs_refined,
  integral_criterion,
  iso_local,
  iso_reverse,
  iso_global,
  iso_sharper,
  rho_zero_rate,
  fp_decay,
  fp_dissipation,
  duality,
};

inline constexpr std::array<CheckId, 17> kAllChecks{
    CheckId::global_phi,         CheckId::beckner,
    CheckId::entropy_production, CheckId::exp_decay,
    CheckId::refined_local,      CheckId::refined_reverse,
    CheckId::refined_global,     CheckId::beckner_vs_refined,
    CheckId::integral_criterion, CheckId::iso_local,
    CheckId::iso_reverse,        CheckId::iso_global,
    CheckId::iso_sharper,        CheckId::rho_zero_rate,
    CheckId::fp_decay,           CheckId::fp_dissipation,
    CheckId::duality};

/// Upper-case name, e.g. "GLOBAL_PHI".
std::string to_string(CheckId id);
std::optional<CheckId> check_from_string(const std::string& name);

/// The inequality a check evaluates, written out as a formula.
std::string anchor(CheckId id);

/// Everything shared by the checks on one model: the discretization, the
/// propagator and the invariant measure of L_h.
struct Lab {
  Model model;
  GridPtr grid;
  ModelFields fields;
  Propagator propagator;
  Field stationary;  // u_inf, unit mass
  Measure mu;        // weights vol_i u_inf,i

  static Lab build(const Model& model, const GridPtr& grid);
};

struct CheckContext {
  const Lab* lab = nullptr;
  std::optional<PhiFunction> phi;
  std::optional<double> p;
  /// Test function f (or g) for semigroup and functional checks.
  std::optional<Field> f;
  std::string f_label;
  /// Initial density for Fokker-Planck checks.
  std::optional<Field> u0;
  /// Evaluation time of local, production and duality checks.
  std::optional<double> t;
  /// Horizon of decay checks.
  std::optional<double> t_end;
  std::optional<double> rho;
  /// Phi-entropy constant C; defaults to 1/(2 rho).
  std::optional<double> entropy_constant;
  double dt = 1e-3;
  Scheme scheme = Scheme::implicit_euler;
  double core_fraction = 0.5;
  /// Overrides the check's default tolerance.
  std::optional<double> tolerance;
};

using ContextValue = std::variant<double, std::string>;

/// Time series H(t) of a Phi-entropy along the semigroup or a Fokker-Planck
/// solution, the bound H(0) e^{-t/C} and the dissipation -mu(Phi''(h) Gamma(h)).
struct DecayReport {
  std::string label;
  std::vector<double> times;
  std::vector<double> entropy;
  std::vector<double> bound;
  std::vector<double> dissipation;
  /// 1/C, or 0 when no positive constant is known.
  double theoretical_rate = 0.0;
  std::optional<double> entropy_constant;
  /// Least-squares slope of -log H over samples with H > 1e-13.
  std::optional<double> fitted_rate;
  bool degenerate = false;
  bool violation = false;
};

struct CheckResult {
  CheckId id = CheckId::global_phi;
  std::string anchor;
  double lhs = 0.0;
  double rhs = 0.0;
  double margin = 0.0;
  double tolerance = 0.0;
  bool pass = false;
  std::vector<std::pair<std::string, ContextValue>> context;
  std::optional<DecayReport> decay;
};

/// Throws InvalidArgument when the context lacks an ingredient the check
/// needs or a field leaves the interval of Phi.
CheckResult run_check(CheckId id, const CheckContext& ctx);

/// Semigroup decay of Ent_mu(P_t f), sampled `samples` times on [0, t_end].
DecayReport decay_report_semigroup(const Lab& lab, const PhiFunction& phi,
                                   const Field& f, double t_end, double dt,
                                   std::optional<double> entropy_constant,
                                   Scheme scheme = Scheme::implicit_euler,
                                   int samples = 100);

/// Decay of Ent_mu(u_t / u_inf) along the Fokker-Planck flow from u0.
DecayReport decay_report_fokker_planck(const Lab& lab, const PhiFunction& phi,
                                       const Field& u0, double t_end, double dt,
                                       std::optional<double> entropy_constant,
                                       Scheme scheme = Scheme::implicit_euler,
                                       int samples = 100);

/// Runs one of the local checks (REFINED_LOCAL, REFINED_REVERSE, ISO_LOCAL,
/// ISO_REVERSE) at every time in `times`; `base` supplies the rest.
std::vector<CheckResult> local_inequality_scan(CheckId id, CheckContext base,
                                               const std::vector<double>& times);

enum class BatteryRange { positive, unit_interval };

struct TestFunction {
  std::string label;
  Field values;
};

/// Seeded family cycling through affine, quadratic, smoothed-step and bump
/// shapes, each rescaled to a random sub-range of ]0, 3.5] (positive) or
/// [0.05, 0.95] (unit_interval).
std::vector<TestFunction> test_battery(const GridPtr& grid, std::uint64_t seed,
                                       int count, BatteryRange range);

}  // namespace fplab
