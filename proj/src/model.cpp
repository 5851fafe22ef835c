#include "fplab/model.hpp"

#include <fmt/format.h>

#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>

#include "fplab/errors.hpp"

namespace fplab {

// ---------------------------------------------------------------------------
// Grid

Grid::Grid(int dim, std::array<double, 2> lower, std::array<double, 2> upper,
           std::array<int, 2> cells)
    : dim_(dim), lower_(lower), upper_(upper), cells_(cells), size_(1) {
  if (dim < 1 || dim > 2) {
    throw InvalidArgument(fmt::format("unsupported dimension {}", dim));
  }
  for (int k = 0; k < 2; ++k) {
    if (k >= dim) {
      lower_[k] = 0.0;
      upper_[k] = 0.0;
      cells_[k] = 0;
      spacing_[k] = 0.0;
      continue;
    }
    if (!std::isfinite(lower[k]) || !std::isfinite(upper[k]) ||
        !(lower[k] < upper[k])) {
      throw InvalidArgument(fmt::format(
          "degenerate box on axis {}: [{}, {}]", k + 1, lower[k], upper[k]));
    }
    if (cells[k] < 8) {
      throw InvalidArgument(fmt::format(
          "axis {} needs at least 8 cells, got {}", k + 1, cells[k]));
    }
    spacing_[k] = (upper[k] - lower[k]) / cells[k];
    size_ *= cells[k] + 1;
  }
}

std::array<int, 2> Grid::multi_index(Index node) const {
  const int n0 = nodes(0);
  return {static_cast<int>(node % n0), static_cast<int>(node / n0)};
}

std::array<double, 2> Grid::point(Index node) const {
  const auto [i1, i2] = multi_index(node);
  std::array<double, 2> x{coordinate(0, i1), 0.0};
  if (dim_ == 2) x[1] = coordinate(1, i2);
  return x;
}

double Grid::volume(Index node) const {
  const auto idx = multi_index(node);
  double v = 1.0;
  for (int k = 0; k < dim_; ++k) {
    const bool boundary = idx[k] == 0 || idx[k] == cells_[k];
    v *= boundary ? 0.5 * spacing_[k] : spacing_[k];
  }
  return v;
}

Eigen::VectorXd Grid::volumes() const {
  Eigen::VectorXd out(size_);
  for (Index i = 0; i < size_; ++i) out[i] = volume(i);
  return out;
}

bool Grid::is_interior(Index node, int margin) const {
  const auto idx = multi_index(node);
  for (int k = 0; k < dim_; ++k) {
    if (idx[k] < margin || idx[k] > cells_[k] - margin) return false;
  }
  return true;
}

bool Grid::in_core(Index node, double fraction) const {
  const auto x = point(node);
  for (int k = 0; k < dim_; ++k) {
    const double center = 0.5 * (lower_[k] + upper_[k]);
    const double half = 0.5 * fraction * (upper_[k] - lower_[k]);
    if (std::abs(x[k] - center) > half * (1.0 + 1e-12)) return false;
  }
  return true;
}

bool operator==(const Grid& a, const Grid& b) {
  return a.dim_ == b.dim_ && a.lower_ == b.lower_ && a.upper_ == b.upper_ &&
         a.cells_ == b.cells_;
}

GridPtr build_grid(std::span<const std::array<double, 2>> bounds,
                   std::span<const int> cells) {
  if (bounds.size() != cells.size() || bounds.empty() || bounds.size() > 2) {
    throw InvalidArgument("grid needs matching bounds and cell counts for 1 or 2 axes");
  }
  std::array<double, 2> lo{}, hi{};
  std::array<int, 2> n{};
  for (std::size_t k = 0; k < bounds.size(); ++k) {
    lo[k] = bounds[k][0];
    hi[k] = bounds[k][1];
    n[k] = cells[k];
  }
  return std::make_shared<const Grid>(static_cast<int>(bounds.size()), lo, hi,
                                      n);
}

// ---------------------------------------------------------------------------
// Field / Measure

Field::Field(GridPtr grid, Eigen::VectorXd values)
    : grid_(std::move(grid)), values_(std::move(values)) {
  if (!grid_) throw InvalidArgument("field without grid");
  if (values_.size() != grid_->size()) {
    throw GridMismatch(fmt::format("field has {} values, grid has {} nodes",
                                   values_.size(), grid_->size()));
  }
  if (!values_.allFinite()) throw NumericalError("field has non-finite entries");
}

Field Field::constant(GridPtr grid, double value) {
  const Index n = grid->size();
  return Field(std::move(grid), Eigen::VectorXd::Constant(n, value));
}

Field Field::sample(GridPtr grid,
                    const std::function<double(std::span<const double>)>& f) {
  Eigen::VectorXd v(grid->size());
  for (Index i = 0; i < grid->size(); ++i) {
    const auto x = grid->point(i);
    v[i] = f(std::span<const double>(x.data(), grid->dim()));
  }
  return Field(std::move(grid), std::move(v));
}

void require_same_grid(const Grid& a, const Grid& b) {
  if (&a != &b && !(a == b)) throw GridMismatch("objects live on different grids");
}

Measure::Measure(GridPtr grid, Eigen::VectorXd weights,
                 double log_normalization)
    : grid_(std::move(grid)),
      weights_(std::move(weights)),
      log_z_(log_normalization) {
  if (weights_.size() != grid_->size()) {
    throw GridMismatch("measure weights do not match grid");
  }
  if (!weights_.allFinite() || weights_.minCoeff() < 0.0) {
    throw InvalidArgument("measure weights must be finite and nonnegative");
  }
  const double total = weights_.sum();
  if (!(total > 0.0)) throw InvalidArgument("measure has zero total weight");
  weights_ /= total;
}

double Measure::normalization() const { return std::exp(log_z_); }

Eigen::VectorXd Measure::density() const {
  return weights_.cwiseQuotient(grid_->volumes());
}

Measure gibbs_measure(const Field& potential) {
  const auto& v = potential.values();
  const double v_min = v.minCoeff();
  const Eigen::VectorXd vol = potential.grid().volumes();
  Eigen::VectorXd w(v.size());
  for (Index i = 0; i < v.size(); ++i) w[i] = std::exp(-(v[i] - v_min)) * vol[i];
  const double log_z = std::log(w.sum()) - v_min;
  return Measure(potential.grid_ptr(), std::move(w), log_z);
}

double integrate(const Measure& mu, const Field& f) {
  require_same_grid(mu.grid(), f.grid());
  // Plain left-to-right sum so that every functional built on it reduces in
  // the same order.
  const auto& w = mu.weights();
  double s = 0.0;
  for (Index i = 0; i < w.size(); ++i) s += w[i] * f[i];
  return s;
}

// ---------------------------------------------------------------------------
// Model

namespace {

std::vector<expr::Expression> parse_all(const std::vector<std::string>& texts,
                                        int dim, const char* what) {
  std::vector<expr::Expression> out;
  out.reserve(texts.size());
  for (std::size_t i = 0; i < texts.size(); ++i) {
    try {
      out.push_back(expr::Expression::parse(texts[i], dim));
    } catch (const ParseError& e) {
      throw ParseError(fmt::format("{} #{}: {}", what, i + 1, e.what()),
                       e.position());
    }
  }
  return out;
}

std::size_t upper_index(int i, int j, int dim) {
  if (i > j) std::swap(i, j);
  // Row-major upper triangle: (0,0) (0,1) (1,1).
  return dim == 1 ? 0 : static_cast<std::size_t>(i == 0 ? j : 2);
}

bool is_literal_zero(const expr::Expression& e) {
  return e.is_constant() && e.eval(std::array<double, 2>{0.0, 0.0}) == 0.0;
}

}  // namespace

Model Model::with_drift(int dim, std::vector<std::string> diffusion,
                        std::vector<std::string> drift) {
  if (dim < 1 || dim > 2) throw InvalidArgument("dimension must be 1 or 2");
  const std::size_t n_diff = dim == 1 ? 1 : 3;
  if (diffusion.size() != n_diff) {
    throw InvalidArgument(fmt::format(
        "diffusion needs {} upper-triangle entries, got {}", n_diff,
        diffusion.size()));
  }
  if (drift.size() != static_cast<std::size_t>(dim)) {
    throw InvalidArgument(fmt::format("drift needs {} components, got {}", dim,
                                      drift.size()));
  }
  Model m;
  m.dim_ = dim;
  m.mode_ = DriftMode::explicit_drift;
  m.diffusion_ = parse_all(diffusion, dim, "diffusion entry");
  m.drift_ = parse_all(drift, dim, "drift component");
  return m;
}

Model Model::with_potential(int dim, std::vector<std::string> diffusion,
                            std::string potential,
                            std::vector<std::string> perturbation) {
  if (dim < 1 || dim > 2) throw InvalidArgument("dimension must be 1 or 2");
  const std::size_t n_diff = dim == 1 ? 1 : 3;
  if (diffusion.size() != n_diff) {
    throw InvalidArgument(fmt::format(
        "diffusion needs {} upper-triangle entries, got {}", n_diff,
        diffusion.size()));
  }
  if (!perturbation.empty() &&
      perturbation.size() != static_cast<std::size_t>(dim)) {
    throw InvalidArgument(fmt::format(
        "perturbation needs {} components, got {}", dim, perturbation.size()));
  }
  Model m;
  m.dim_ = dim;
  m.mode_ = DriftMode::gradient;
  m.diffusion_ = parse_all(diffusion, dim, "diffusion entry");
  m.potential_ = parse_all({potential}, dim, "potential").front();
  m.perturbation_ = parse_all(perturbation, dim, "perturbation component");
  return m;
}

const expr::Expression& Model::diffusion(int i, int j) const {
  return diffusion_[upper_index(i, j, dim_)];
}

const expr::Expression& Model::potential() const {
  if (!potential_) throw ModelError("model has no potential (explicit drift mode)");
  return *potential_;
}

bool Model::constant_diffusion() const {
  for (const auto& d : diffusion_) {
    if (!d.is_constant()) return false;
  }
  return true;
}

bool Model::diagonal_diffusion() const {
  return dim_ == 1 || is_literal_zero(diffusion(0, 1));
}

Eigen::MatrixXd Model::diffusion_at(std::span<const double> x) const {
  Eigen::MatrixXd d(dim_, dim_);
  for (int i = 0; i < dim_; ++i) {
    for (int j = i; j < dim_; ++j) {
      d(i, j) = diffusion(i, j).eval(x);
      d(j, i) = d(i, j);
    }
  }
  return d;
}

Eigen::VectorXd Model::diffusion_divergence_at(std::span<const double> x) const {
  Eigen::VectorXd div = Eigen::VectorXd::Zero(dim_);
  for (int i = 0; i < dim_; ++i) {
    for (int j = 0; j < dim_; ++j) {
      const auto& e = diffusion(i, j);
      if (e.is_constant()) continue;
      div[j] += e.eval_jet(x).gradient[i];
    }
  }
  return div;
}

Eigen::VectorXd Model::drift_at(std::span<const double> x) const {
  Eigen::VectorXd a(dim_);
  if (mode_ == DriftMode::explicit_drift) {
    for (int i = 0; i < dim_; ++i) a[i] = drift_[i].eval(x);
    return a;
  }
  const auto jet = potential_->eval_jet(x);
  for (int i = 0; i < dim_; ++i) a[i] = jet.gradient[i];
  for (std::size_t i = 0; i < perturbation_.size(); ++i) {
    a[static_cast<Index>(i)] -= perturbation_[i].eval(x);
  }
  return a;
}

Eigen::MatrixXd Model::drift_jacobian_at(std::span<const double> x) const {
  Eigen::MatrixXd ja(dim_, dim_);
  if (mode_ == DriftMode::explicit_drift) {
    for (int i = 0; i < dim_; ++i) {
      const auto jet = drift_[i].eval_jet(x);
      for (int j = 0; j < dim_; ++j) ja(i, j) = jet.gradient[j];
    }
    return ja;
  }
  const auto jet = potential_->eval_jet(x);
  for (int i = 0; i < dim_; ++i) {
    for (int j = 0; j < dim_; ++j) ja(i, j) = jet.hessian[i][j];
  }
  for (std::size_t i = 0; i < perturbation_.size(); ++i) {
    const auto fj = perturbation_[i].eval_jet(x);
    for (int j = 0; j < dim_; ++j) ja(static_cast<Index>(i), j) -= fj.gradient[j];
  }
  return ja;
}

Eigen::VectorXd Model::generator_drift_at(std::span<const double> x) const {
  return diffusion_at(x) * drift_at(x) - diffusion_divergence_at(x);
}

Eigen::MatrixXd Model::generator_drift_jacobian_at(
    std::span<const double> x) const {
  return diffusion_at(x) * drift_jacobian_at(x);
}

Eigen::VectorXd Model::transport_at(std::span<const double> x) const {
  Eigen::VectorXd f = Eigen::VectorXd::Zero(dim_);
  for (std::size_t i = 0; i < perturbation_.size(); ++i) {
    f[static_cast<Index>(i)] = perturbation_[i].eval(x);
  }
  return diffusion_at(x) * f;
}

// ---------------------------------------------------------------------------

ModelFields discretize_model(const Model& model, const GridPtr& grid) {
  if (model.dim() != grid->dim()) {
    throw GridMismatch(fmt::format("model dimension {} vs grid dimension {}",
                                   model.dim(), grid->dim()));
  }
  const int n = model.dim();
  ModelFields out;
  out.grid = grid;
  out.diffusion.resize(static_cast<std::size_t>(grid->size()));
  out.drift.resize(out.diffusion.size());
  out.generator_drift.resize(out.diffusion.size());
  Eigen::VectorXd v(grid->size());

  for (Index node = 0; node < grid->size(); ++node) {
    const auto p = grid->point(node);
    const std::span<const double> x(p.data(), static_cast<std::size_t>(n));
    const auto k = static_cast<std::size_t>(node);

    const Eigen::MatrixXd d = model.diffusion_at(x);
    const double lambda_min =
        n == 1 ? d(0, 0)
               : Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(
                     d, Eigen::EigenvaluesOnly)
                     .eigenvalues()
                     .minCoeff();
    if (!(lambda_min > 0.0)) {
      throw ModelError(fmt::format(
          "diffusion matrix not positive definite at x = ({}{}): smallest "
          "eigenvalue {}",
          p[0], n == 2 ? fmt::format(", {}", p[1]) : "", lambda_min));
    }
    out.diffusion[k].setZero();
    out.diffusion[k].topLeftCorner(n, n) = d;

    const Eigen::VectorXd a = model.drift_at(x);
    const Eigen::VectorXd b = d * a - model.diffusion_divergence_at(x);
    out.drift[k].setZero();
    out.generator_drift[k].setZero();
    out.drift[k].head(n) = a;
    out.generator_drift[k].head(n) = b;

    if (model.mode() == DriftMode::gradient) v[node] = model.potential().eval(x);
  }
  if (model.mode() == DriftMode::gradient) out.potential.emplace(grid, std::move(v));
  return out;
}

Field check_divergence_free(const Model& model, const GridPtr& grid) {
  if (model.mode() != DriftMode::gradient || !model.has_perturbation()) {
    throw ModelError("divergence check needs gradient mode with a perturbation F");
  }
  const int n = model.dim();
  return Field::sample(grid, [&](std::span<const double> x) {
    const auto v = model.potential().eval_jet(x);
    double div = 0.0;
    double dot = 0.0;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        const auto& d = model.diffusion(i, j);
        const auto dj = d.eval_jet(x);
        const auto fj = model.perturbation()[static_cast<std::size_t>(j)].eval_jet(x);
        // d_i (D_ij F_j)
        div += dj.gradient[i] * fj.value + dj.value * fj.gradient[i];
        dot += dj.value * fj.value * v.gradient[i];
      }
    }
    return std::exp(-v.value) * (div - dot);
  });
}

}  // namespace fplab
