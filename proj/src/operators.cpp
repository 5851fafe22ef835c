#include "fplab/operators.hpp"

#include <fmt/format.h>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>

#include "fplab/errors.hpp"

namespace fplab {

namespace {

constexpr double kGammaFloor = 1e-10;
constexpr int kInteriorMargin = 2;

// Node offset of one step along `axis`.
Index stride(const Grid& grid, int axis) { return axis == 0 ? 1 : grid.nodes(0); }

void require_fields_on(const ModelFields& model, const Field& f) {
  require_same_grid(*model.grid, f.grid());
}

}  // namespace

Field derivative(const Field& f, int axis) {
  const Grid& grid = f.grid();
  const auto& v = f.values();
  const Index s = stride(grid, axis);
  const int n = grid.cells(axis);
  const double inv2h = 0.5 / grid.spacing(axis);
  Eigen::VectorXd out(v.size());
  for (Index node = 0; node < v.size(); ++node) {
    const int i = grid.multi_index(node)[static_cast<std::size_t>(axis)];
    if (i == 0) {
      out[node] = (-3.0 * v[node] + 4.0 * v[node + s] - v[node + 2 * s]) * inv2h;
    } else if (i == n) {
      out[node] = (3.0 * v[node] - 4.0 * v[node - s] + v[node - 2 * s]) * inv2h;
    } else {
      out[node] = (v[node + s] - v[node - s]) * inv2h;
    }
  }
  return Field(f.grid_ptr(), std::move(out));
}

Field second_derivative(const Field& f, int i, int j) {
  if (i != j) return derivative(derivative(f, i), j);
  const Grid& grid = f.grid();
  const auto& v = f.values();
  const Index s = stride(grid, i);
  const int n = grid.cells(i);
  const double h = grid.spacing(i);
  const double inv_h2 = 1.0 / (h * h);
  Eigen::VectorXd out(v.size());
  for (Index node = 0; node < v.size(); ++node) {
    const int k = grid.multi_index(node)[static_cast<std::size_t>(i)];
    if (k == 0) {
      out[node] = (2.0 * v[node] - 5.0 * v[node + s] + 4.0 * v[node + 2 * s] -
                   v[node + 3 * s]) *
                  inv_h2;
    } else if (k == n) {
      out[node] = (2.0 * v[node] - 5.0 * v[node - s] + 4.0 * v[node - 2 * s] -
                   v[node - 3 * s]) *
                  inv_h2;
    } else {
      out[node] = (v[node + s] - 2.0 * v[node] + v[node - s]) * inv_h2;
    }
  }
  return Field(f.grid_ptr(), std::move(out));
}

Field apply_generator(const ModelFields& model, const Field& f) {
  require_fields_on(model, f);
  const int n = f.grid().dim();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(f.size());
  for (int i = 0; i < n; ++i) {
    const Field di = derivative(f, i);
    for (int j = 0; j < n; ++j) {
      const Field dij = second_derivative(f, i, j);
      for (Index node = 0; node < f.size(); ++node) {
        out[node] += model.diffusion[static_cast<std::size_t>(node)](i, j) * dij[node];
      }
    }
    for (Index node = 0; node < f.size(); ++node) {
      out[node] -= model.generator_drift[static_cast<std::size_t>(node)][i] * di[node];
    }
  }
  return Field(f.grid_ptr(), std::move(out));
}

Field gamma(const ModelFields& model, const Field& f, const Field& g) {
  require_fields_on(model, f);
  require_same_grid(f.grid(), g.grid());
  const int n = f.grid().dim();
  std::array<Eigen::VectorXd, 2> df, dg;
  for (int i = 0; i < n; ++i) {
    df[i] = derivative(f, i).values();
    dg[i] = &f == &g ? df[i] : derivative(g, i).values();
  }
  Eigen::VectorXd out(f.size());
  for (Index node = 0; node < f.size(); ++node) {
    const auto& d = model.diffusion[static_cast<std::size_t>(node)];
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) s += df[i][node] * d(i, j) * dg[j][node];
    }
    out[node] = s;
  }
  return Field(f.grid_ptr(), std::move(out));
}

Field gamma2(const ModelFields& model, const Field& f) {
  const Field g = gamma(model, f);
  const Field lg = apply_generator(model, g);
  const Field lf = apply_generator(model, f);
  const Field cross = gamma(model, f, lf);
  return Field(f.grid_ptr(), 0.5 * (lg.values() - 2.0 * cross.values()));
}

std::string to_string(CdMethod method) {
  switch (method) {
    case CdMethod::constant_diffusion_eigenvalue:
      return "constant-D eigenvalue";
    case CdMethod::sampled_gamma2:
      return "sampled-Gamma2";
  }
  return "unknown";
}

CdEstimate cd_rho_constant_D(const Model& model, const GridPtr& grid) {
  if (model.dim() != grid->dim()) throw GridMismatch("model and grid dimensions differ");
  const int n = model.dim();
  const auto origin = grid->point(0);
  const Eigen::MatrixXd d0 =
      model.diffusion_at(std::span<const double>(origin.data(), static_cast<std::size_t>(n)));

  CdEstimate est;
  est.method = CdMethod::constant_diffusion_eigenvalue;
  est.rho = std::numeric_limits<double>::infinity();
  for (Index node = 0; node < grid->size(); ++node) {
    const auto p = grid->point(node);
    const std::span<const double> x(p.data(), static_cast<std::size_t>(n));
    const Eigen::MatrixXd d = model.diffusion_at(x);
    if ((d - d0).cwiseAbs().maxCoeff() > 1e-12) {
      throw ModelError(
          "diffusion matrix varies across the grid; use the sampled Gamma_2 "
          "estimator instead");
    }
    Eigen::LLT<Eigen::MatrixXd> chol(d);
    if (chol.info() != Eigen::Success) {
      throw ModelError(fmt::format("diffusion matrix not positive definite at x = ({}, {})",
                                   p[0], p[1]));
    }
    const Eigen::MatrixXd jd = model.generator_drift_jacobian_at(x) * d;
    const Eigen::MatrixXd sym = 0.5 * (jd + jd.transpose());
    // D = L L^T: sym v = lambda D v  <=>  (L^-1 sym L^-T) w = lambda w.
    const Eigen::MatrixXd left = chol.matrixL().solve(sym);
    const Eigen::MatrixXd reduced =
        chol.matrixL().solve(left.transpose()).transpose();
    const double lambda =
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(
            0.5 * (reduced + reduced.transpose()), Eigen::EigenvaluesOnly)
            .eigenvalues()
            .minCoeff();
    if (lambda < est.rho) {
      est.rho = lambda;
      est.argmin = p;
    }
    ++est.nodes_examined;
  }
  return est;
}

CdEstimate cd_rho_sampled(const Model& model, const GridPtr& grid,
                          const std::vector<Field>& test_fields,
                          bool allow_small_battery) {
  if (!allow_small_battery && test_fields.size() < 10) {
    throw InvalidArgument(fmt::format(
        "sampled curvature estimate needs at least 10 test fields, got {}",
        test_fields.size()));
  }
  const ModelFields fields = discretize_model(model, grid);
  CdEstimate est;
  est.method = CdMethod::sampled_gamma2;
  est.upper_bound_only = true;
  est.test_fields = static_cast<int>(test_fields.size());
  est.rho = std::numeric_limits<double>::infinity();
  for (const Field& f : test_fields) {
    require_same_grid(*grid, f.grid());
    const Field g = gamma(fields, f);
    const Field g2 = gamma2(fields, f);
    for (Index node = 0; node < grid->size(); ++node) {
      if (!grid->is_interior(node, kInteriorMargin) || !(g[node] > kGammaFloor)) continue;
      ++est.nodes_examined;
      const double ratio = g2[node] / g[node];
      if (ratio < est.rho) {
        est.rho = ratio;
        est.argmin = grid->point(node);
      }
    }
  }
  if (est.nodes_examined == 0) {
    throw Inconclusive("every test field has Gamma below 1e-10 on the interior");
  }
  return est;
}

std::vector<Field> default_cd_test_fields(const GridPtr& grid) {
  using Fn = double (*)(std::span<const double>);
  std::vector<Fn> fns;
  if (grid->dim() == 1) {
    fns = {
        [](std::span<const double> x) { return x[0]; },
        [](std::span<const double> x) { return x[0] * x[0]; },
        [](std::span<const double> x) { return x[0] * x[0] * x[0]; },
        [](std::span<const double> x) { return x[0] + 0.5 * x[0] * x[0]; },
        [](std::span<const double> x) { return x[0] - 0.25 * x[0] * x[0]; },
        [](std::span<const double> x) { return std::exp(0.5 * x[0]); },
        [](std::span<const double> x) { return std::exp(-0.5 * x[0]); },
        [](std::span<const double> x) { return std::exp(0.25 * x[0]); },
        [](std::span<const double> x) { return std::exp(-0.25 * x[0]); },
        [](std::span<const double> x) { return std::exp(0.1 * x[0]) + x[0]; },
    };
  } else {
    fns = {
        [](std::span<const double> x) { return x[0]; },
        [](std::span<const double> x) { return x[1]; },
        [](std::span<const double> x) { return x[0] + x[1]; },
        [](std::span<const double> x) { return x[0] - x[1]; },
        [](std::span<const double> x) { return x[0] + 2.0 * x[1]; },
        [](std::span<const double> x) { return 2.0 * x[0] - x[1]; },
        [](std::span<const double> x) { return x[0] * x[0]; },
        [](std::span<const double> x) { return x[1] * x[1]; },
        [](std::span<const double> x) { return x[0] * x[1]; },
        [](std::span<const double> x) { return (x[0] + x[1]) * (x[0] + x[1]); },
        [](std::span<const double> x) { return std::exp(0.5 * x[0]); },
        [](std::span<const double> x) { return std::exp(0.5 * x[1]); },
        [](std::span<const double> x) { return std::exp(0.25 * (x[0] - x[1])); },
    };
  }
  std::vector<Field> out;
  out.reserve(fns.size());
  for (Fn fn : fns) out.push_back(Field::sample(grid, fn));
  return out;
}

double integral_criterion_check(const ModelFields& model, const Measure& mu,
                                const Field& g, double p, double rho) {
  if (!(p > 1.0 && p < 2.0)) {
    throw InvalidArgument(fmt::format("integral criterion needs p in ]1,2[, got {}", p));
  }
  if (!(g.min() > 0.0)) throw InvalidArgument("integral criterion needs a positive g");
  require_same_grid(mu.grid(), g.grid());
  const Grid& grid = g.grid();
  const double k = (2.0 - p) / (p - 1.0);
  const Field gm = gamma(model, g);
  const Field g2 = gamma2(model, g);
  double with_gamma2 = 0.0;
  double with_gamma = 0.0;
  for (Index node = 0; node < g.size(); ++node) {
    if (!grid.is_interior(node, kInteriorMargin)) continue;
    const double w = mu.weights()[node] * std::pow(g[node], k);
    with_gamma2 += w * g2[node];
    with_gamma += w * gm[node];
  }
  return with_gamma2 - rho * with_gamma;
}

}  // namespace fplab
