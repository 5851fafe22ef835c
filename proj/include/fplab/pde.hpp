#pragma once

// Vertex-centred finite-volume discretization of
//
//   du/dt = div[ D (grad u + u a) ]          (forward, densities)
//
// with exponential-fitting (Scharfetter-Gummel) face fluxes and no-flux
// boundary faces. The backward operator acting on functions is the
// volume-weighted transpose L_h = W^{-1} A_h^T W, so that
// <A_h u, f>_W = <u, L_h f>_W holds exactly.
//
// In gradient mode the fitting uses the potential jump across each face, so
// e^{-V} is an exact discrete steady state; a divergence-free perturbation F
// is transported by an upwind flux in the variable u e^{V}, with face
// integrals of e^{-V} D F computed by Gauss-Legendre quadrature.
//
// Only diagonal D is supported by the assembly.

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fplab/model.hpp"

namespace fplab {

using SparseMatrix = Eigen::SparseMatrix<double>;

enum class Scheme { implicit_euler, crank_nicolson };

std::string to_string(Scheme scheme);
Scheme scheme_from_string(const std::string& name);

/// B(x) = x / (e^x - 1), evaluated without overflow or cancellation.
double bernoulli(double x);

class Propagator {
 public:
  Propagator(GridPtr grid, SparseMatrix forward, SparseMatrix backward,
             std::optional<Field> potential, bool reversible);

  const Grid& grid() const { return *grid_; }
  const GridPtr& grid_ptr() const { return grid_; }
  /// A_h, acting on node densities.
  const SparseMatrix& forward() const { return forward_; }
  /// L_h, acting on functions.
  const SparseMatrix& backward() const { return backward_; }
  const Eigen::VectorXd& volumes() const { return volumes_; }
  /// Node values of V in gradient mode.
  const std::optional<Field>& potential() const { return potential_; }
  /// Gradient mode without perturbation.
  bool reversible() const { return reversible_; }

 private:
  GridPtr grid_;
  SparseMatrix forward_;
  SparseMatrix backward_;
  Eigen::VectorXd volumes_;
  std::optional<Field> potential_;
  bool reversible_;
};

/// Throws ModelError for non-diagonal or non-positive D.
Propagator assemble(const Model& model, const GridPtr& grid);

/// One-step map v <- (I - theta dt M)^{-1} (I + (1-theta) dt M) v with the
/// factorization computed once.
class TimeStepper {
 public:
  TimeStepper(const SparseMatrix& op, double dt, Scheme scheme);

  double dt() const { return dt_; }
  Scheme scheme() const { return scheme_; }
  void step(Eigen::VectorXd& v) const;

 private:
  double dt_;
  Scheme scheme_;
  SparseMatrix explicit_part_;
  Eigen::SparseLU<SparseMatrix> solver_;
};

/// Number of steps and the adjusted step that land exactly on `t`.
std::pair<int, double> step_plan(double t, double dt);

struct Trajectory {
  std::vector<double> times;
  std::vector<Field> snapshots;
  /// Per step (including t = 0): sum_i vol_i u_i and min_i u_i.
  std::vector<double> step_times;
  std::vector<double> masses;
  std::vector<double> minima;

  double max_relative_mass_drift() const;
  double min_value() const;
};

/// Evolves the density u0 (normalized to unit mass) to t_end. Snapshots are
/// taken at t = 0, every entry of `snapshot_times` (rounded to the step
/// grid) and t_end. Throws NumericalError when Crank-Nicolson produces values
/// below -1e-12.
Trajectory solve_fokker_planck(const Propagator& prop, const Field& u0,
                               double t_end, double dt,
                               Scheme scheme = Scheme::implicit_euler,
                               const std::vector<double>& snapshot_times = {});

/// Normalized (unit mass) nonnegative kernel vector of A_h by shifted inverse
/// iteration. Throws NumericalError when the kernel is not one-dimensional.
Field steady_state(const Propagator& prop);

/// Invariant measure of L_h: weights vol_i u_inf,i.
Measure invariant_measure(const Propagator& prop);

/// Number of closed communicating classes of the chain generated by A_h,
/// which equals the dimension of its kernel.
int kernel_dimension(const Propagator& prop);

/// P_t f by backward evolution dv/dt = L_h v.
Field semigroup_apply(const Propagator& prop, const Field& f, double t,
                      double dt, Scheme scheme = Scheme::implicit_euler);

}  // namespace fplab
