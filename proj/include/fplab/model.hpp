#pragma once

// Diffusion model, computational grid, node fields and discrete measures.
//
// The model's drift `a` enters the forward (density) equation in flux form,
//
//   du/dt = div[ D (grad u + u a) ],
//
// whose Lebesgue dual is the backward generator
//
//   L f = div(D grad f) - <D a, grad f>
//       = sum_ij D_ij d_ij f - sum_i b_i d_i f,   b = D a - div D.
//
// In gradient mode a = grad V - F, where F is the divergence-free perturbation
// (div(e^{-V} D F) = 0 keeps e^{-V} stationary).

#include <Eigen/Dense>

#include <array>
#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fplab/expr.hpp"

namespace fplab {

using Index = std::ptrdiff_t;

/// Uniform tensor grid of nodes on a box in dimension 1 or 2.
///
/// Nodes are numbered with x1 varying fastest:
///   index = i1 + nodes(0) * i2.
/// Node i on axis k sits at lower[k] + i * spacing(k). Each node owns the dual
/// cell of width h_k (h_k / 2 on the box boundary), which is also the
/// trapezoidal quadrature weight.
class Grid {
 public:
  Grid(int dim, std::array<double, 2> lower, std::array<double, 2> upper,
       std::array<int, 2> cells);

  int dim() const { return dim_; }
  double lower(int axis) const { return lower_[axis]; }
  double upper(int axis) const { return upper_[axis]; }
  int cells(int axis) const { return cells_[axis]; }
  int nodes(int axis) const { return cells_[axis] + 1; }
  double spacing(int axis) const { return spacing_[axis]; }
  Index size() const { return size_; }

  Index index(int i1, int i2 = 0) const { return i1 + nodes(0) * Index{i2}; }
  std::array<int, 2> multi_index(Index node) const;
  double coordinate(int axis, int i) const {
    return lower_[axis] + i * spacing_[axis];
  }
  std::array<double, 2> point(Index node) const;

  /// Dual-cell volume (trapezoidal weight) of a node.
  double volume(Index node) const;
  Eigen::VectorXd volumes() const;

  /// At least `margin` nodes away from every boundary.
  bool is_interior(Index node, int margin) const;

  /// Inside the central sub-box covering `fraction` of each axis.
  bool in_core(Index node, double fraction = 0.5) const;

  friend bool operator==(const Grid& a, const Grid& b);

 private:
  int dim_;
  std::array<double, 2> lower_;
  std::array<double, 2> upper_;
  std::array<int, 2> cells_;
  std::array<double, 2> spacing_;
  Index size_;
};

using GridPtr = std::shared_ptr<const Grid>;

/// Throws InvalidArgument on a degenerate box or fewer than 8 cells per axis.
GridPtr build_grid(std::span<const std::array<double, 2>> bounds,
                   std::span<const int> cells);

/// One finite real per grid node.
class Field {
 public:
  Field(GridPtr grid, Eigen::VectorXd values);

  static Field constant(GridPtr grid, double value);
  static Field sample(GridPtr grid,
                      const std::function<double(std::span<const double>)>& f);

  const Grid& grid() const { return *grid_; }
  const GridPtr& grid_ptr() const { return grid_; }
  const Eigen::VectorXd& values() const { return values_; }
  Index size() const { return values_.size(); }
  double operator[](Index i) const { return values_[i]; }

  double min() const { return values_.minCoeff(); }
  double max() const { return values_.maxCoeff(); }

  /// Elementwise image under `f`.
  template <typename F>
  Field map(F&& f) const {
    Eigen::VectorXd out(values_.size());
    for (Index i = 0; i < values_.size(); ++i) out[i] = f(values_[i]);
    return Field(grid_, std::move(out));
  }

 private:
  GridPtr grid_;
  Eigen::VectorXd values_;
};

/// Throws GridMismatch unless both live on equal grids.
void require_same_grid(const Grid& a, const Grid& b);

/// Discrete probability measure: nonnegative node weights summing to one.
class Measure {
 public:
  /// `weights` are normalized here; `log_normalization` is log Z of the
  /// underlying density (0 when not meaningful).
  Measure(GridPtr grid, Eigen::VectorXd weights,
          double log_normalization = 0.0);

  const Grid& grid() const { return *grid_; }
  const GridPtr& grid_ptr() const { return grid_; }
  const Eigen::VectorXd& weights() const { return weights_; }
  double normalization() const;
  double log_normalization() const { return log_z_; }

  /// Density with respect to Lebesgue measure at the nodes, w_i / vol_i.
  Eigen::VectorXd density() const;

 private:
  GridPtr grid_;
  Eigen::VectorXd weights_;
  double log_z_;
};

/// Gibbs measure e^{-V} / Z with trapezoidal weights.
Measure gibbs_measure(const Field& potential);

/// Sum_i w_i f_i.
double integrate(const Measure& mu, const Field& f);

enum class DriftMode { explicit_drift, gradient };

/// Diffusion matrix D(x) (upper triangle of expressions) plus drift.
class Model {
 public:
  /// `diffusion` holds the upper triangle row by row: {D11} or
  /// {D11, D12, D22}; `drift` holds a_1..a_n.
  static Model with_drift(int dim, std::vector<std::string> diffusion,
                          std::vector<std::string> drift);

  /// a = grad V - F; `perturbation` (F) may be empty.
  static Model with_potential(int dim, std::vector<std::string> diffusion,
                              std::string potential,
                              std::vector<std::string> perturbation = {});

  int dim() const { return dim_; }
  DriftMode mode() const { return mode_; }
  bool has_perturbation() const { return !perturbation_.empty(); }

  const expr::Expression& diffusion(int i, int j) const;
  const expr::Expression& potential() const;
  const std::vector<expr::Expression>& perturbation() const {
    return perturbation_;
  }

  /// True when every D entry is a constant expression.
  bool constant_diffusion() const;

  /// True when every off-diagonal D entry is the literal zero or absent.
  bool diagonal_diffusion() const;

  Eigen::MatrixXd diffusion_at(std::span<const double> x) const;
  /// (div D)_j = sum_i d_i D_ij.
  Eigen::VectorXd diffusion_divergence_at(std::span<const double> x) const;
  Eigen::VectorXd drift_at(std::span<const double> x) const;
  /// Jacobian J_ij = d a_i / d x_j.
  Eigen::MatrixXd drift_jacobian_at(std::span<const double> x) const;
  /// Drift of the non-divergence form of L: b = D a - div D.
  Eigen::VectorXd generator_drift_at(std::span<const double> x) const;
  /// Jacobian of b (exact only for constant D, where J_b = D J_a).
  Eigen::MatrixXd generator_drift_jacobian_at(std::span<const double> x) const;
  /// D F at x (zero vector without perturbation).
  Eigen::VectorXd transport_at(std::span<const double> x) const;

 private:
  Model() = default;

  int dim_ = 1;
  DriftMode mode_ = DriftMode::explicit_drift;
  std::vector<expr::Expression> diffusion_;  // upper triangle
  std::vector<expr::Expression> drift_;
  std::optional<expr::Expression> potential_;
  std::vector<expr::Expression> perturbation_;
};

/// Model coefficients sampled at every node of a grid.
struct ModelFields {
  GridPtr grid;
  std::vector<Eigen::Matrix2d> diffusion;
  std::vector<Eigen::Vector2d> drift;
  std::vector<Eigen::Vector2d> generator_drift;
  std::optional<Field> potential;
};

/// Samples D, a, b (and V in gradient mode). Throws EvalFault on evaluation
/// faults and ModelError when D is not positive definite at some node.
ModelFields discretize_model(const Model& model, const GridPtr& grid);

/// Node-wise e^{-V} (div(DF) - <DF, grad V>), the pointwise form of
/// div(e^{-V} D F). Throws ModelError outside gradient mode or without F.
Field check_divergence_free(const Model& model, const GridPtr& grid);

}  // namespace fplab
