#pragma once

// Finite-difference generator, carre du champ and Gamma_2 on node fields, and
// estimators of the curvature constant rho in CD(rho, infinity).
//
// Derivatives use second-order central differences at interior nodes and
// second-order one-sided stencils at boundary nodes. Gamma_2 is the
// composition of the discrete L and Gamma, so it is only meaningful two nodes
// away from the boundary.

#include <array>
#include <string>
#include <vector>

#include "fplab/model.hpp"

namespace fplab {

/// d f / d x_axis at every node.
Field derivative(const Field& f, int axis);

/// d^2 f / (d x_i d x_j) at every node.
Field second_derivative(const Field& f, int i, int j);

/// L f = sum_ij D_ij d_ij f - sum_i b_i d_i f.
Field apply_generator(const ModelFields& model, const Field& f);

/// Gamma(f, g) = <grad f, D grad g>.
Field gamma(const ModelFields& model, const Field& f, const Field& g);
inline Field gamma(const ModelFields& model, const Field& f) {
  return gamma(model, f, f);
}

/// Gamma_2(f) = (L Gamma(f) - 2 Gamma(f, L f)) / 2.
Field gamma2(const ModelFields& model, const Field& f);

enum class CdMethod { constant_diffusion_eigenvalue, sampled_gamma2 };

std::string to_string(CdMethod method);

struct CdEstimate {
  double rho = 0.0;
  CdMethod method = CdMethod::constant_diffusion_eigenvalue;
  std::array<double, 2> argmin{};
  Index nodes_examined = 0;
  int test_fields = 0;
  /// Sampled estimates only bound the true constant from above.
  bool upper_bound_only = false;
};

/// Smallest generalized eigenvalue of sym(J_b D) v = lambda D v over all grid
/// nodes. Throws ModelError when D varies across nodes (use cd_rho_sampled).
CdEstimate cd_rho_constant_D(const Model& model, const GridPtr& grid);

/// min over test fields and interior nodes (two-node margin) with
/// Gamma(f) > 1e-10 of Gamma_2(f) / Gamma(f). Needs at least 10 fields unless
/// `allow_small_battery` is set. Throws Inconclusive when no node qualifies.
CdEstimate cd_rho_sampled(const Model& model, const GridPtr& grid,
                          const std::vector<Field>& test_fields,
                          bool allow_small_battery = false);

/// Analytic polynomial and exponential fields used by cd_rho_sampled when the
/// caller has none.
std::vector<Field> default_cd_test_fields(const GridPtr& grid);

/// mu(g^k Gamma_2(g)) - rho mu(g^k Gamma(g)) with k = (2-p)/(p-1), integrated
/// over interior nodes. Throws InvalidArgument for g <= 0 or p outside ]1,2[.
double integral_criterion_check(const ModelFields& model, const Measure& mu,
                                const Field& g, double p, double rho);

}  // namespace fplab
