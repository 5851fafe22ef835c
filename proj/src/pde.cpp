#include "fplab/pde.hpp"

#include <boost/graph/adjacency_list.hpp>
#include <boost/graph/strong_components.hpp>
#include <boost/math/quadrature/gauss.hpp>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>

#include "fplab/errors.hpp"

namespace fplab {

std::string to_string(Scheme scheme) {
  return scheme == Scheme::implicit_euler ? "implicit-euler" : "crank-nicolson";
}

Scheme scheme_from_string(const std::string& name) {
  if (name == "implicit-euler") return Scheme::implicit_euler;
  if (name == "crank-nicolson") return Scheme::crank_nicolson;
  throw InvalidArgument(fmt::format(
      "unknown scheme '{}' (expected implicit-euler or crank-nicolson)", name));
}

double bernoulli(double x) {
  if (std::abs(x) < 1e-12) return 1.0 - 0.5 * x;
  // expm1 saturates to inf (B -> 0) and -1 (B -> -x) without NaNs.
  return x / std::expm1(x);
}

Propagator::Propagator(GridPtr grid, SparseMatrix forward, SparseMatrix backward,
                       std::optional<Field> potential, bool reversible)
    : grid_(std::move(grid)),
      forward_(std::move(forward)),
      backward_(std::move(backward)),
      volumes_(grid_->volumes()),
      potential_(std::move(potential)),
      reversible_(reversible) {}

namespace {

using Triplet = Eigen::Triplet<double>;

struct FaceGeometry {
  std::array<double, 2> midpoint{};
  int across = -1;  // axis along the face (2D only)
  double from = 0.0;
  double to = 0.0;
  double length = 1.0;
};

FaceGeometry face_between(const Grid& grid, Index p, int axis) {
  FaceGeometry face;
  const auto x = grid.point(p);
  face.midpoint = x;
  face.midpoint[axis] += 0.5 * grid.spacing(axis);
  if (grid.dim() == 2) {
    const int m = 1 - axis;
    const double h = grid.spacing(m);
    face.across = m;
    face.from = std::max(grid.lower(m), x[m] - 0.5 * h);
    face.to = std::min(grid.upper(m), x[m] + 0.5 * h);
    const int i = grid.multi_index(p)[m];
    face.length = (i == 0 || i == grid.cells(m)) ? 0.5 * h : h;
  }
  return face;
}

// e^{V_p} * integral over the face of e^{-V} (D F)_axis.
double scaled_transport_flux(const Model& model, const FaceGeometry& face,
                             int axis, double v_ref, int dim) {
  auto integrand = [&](double s) {
    std::array<double, 2> y = face.midpoint;
    if (face.across >= 0) y[face.across] = s;
    const std::span<const double> pt(y.data(), static_cast<std::size_t>(dim));
    const double weight = std::exp(-(model.potential().eval(pt) - v_ref));
    return weight * model.transport_at(pt)[axis];
  };
  if (face.across < 0) return integrand(0.0);
  return boost::math::quadrature::gauss<double, 10>::integrate(integrand, face.from,
                                                               face.to);
}

}  // namespace

Propagator assemble(const Model& model, const GridPtr& grid) {
  if (!model.diagonal_diffusion()) {
    throw ModelError(
        "finite-volume assembly supports diagonal diffusion matrices only");
  }
  const ModelFields fields = discretize_model(model, grid);
  const Grid& g = *grid;
  const int dim = g.dim();
  const bool gradient = model.mode() == DriftMode::gradient;
  const bool perturbed = gradient && model.has_perturbation();
  const Eigen::VectorXd vol = g.volumes();

  std::vector<Triplet> entries;
  entries.reserve(static_cast<std::size_t>(g.size()) * (2 * dim + 1) * 2);
  Eigen::VectorXd diagonal = Eigen::VectorXd::Zero(g.size());

  // Mass moving from node `from` into node `to` at rate coeff * u_from.
  auto couple = [&](Index from, Index to, double coeff) {
    if (coeff == 0.0) return;
    entries.emplace_back(to, from, coeff / vol[to]);
    diagonal[from] -= coeff / vol[from];
  };

  for (Index p = 0; p < g.size(); ++p) {
    const auto idx = g.multi_index(p);
    for (int k = 0; k < dim; ++k) {
      if (idx[k] == g.cells(k)) continue;
      const Index q = p + (k == 0 ? 1 : g.nodes(0));
      const auto sp = static_cast<std::size_t>(p);
      const auto sq = static_cast<std::size_t>(q);
      const FaceGeometry face = face_between(g, p, k);
      const double h = g.spacing(k);

      const double d_face = 0.5 * (fields.diffusion[sp](k, k) + fields.diffusion[sq](k, k));
      const double psi = gradient
                             ? (*fields.potential)[q] - (*fields.potential)[p]
                             : 0.5 * h * (fields.drift[sp][k] + fields.drift[sq][k]);
      // J = T [B(-psi) u_q - B(psi) u_p] through the face, oriented p -> q.
      const double t = d_face * face.length / h;
      couple(p, q, t * bernoulli(psi));
      couple(q, p, t * bernoulli(-psi));

      if (perturbed) {
        const double v_p = (*fields.potential)[p];
        const double v_q = (*fields.potential)[q];
        const double flux = scaled_transport_flux(model, face, k, v_p, dim);
        if (flux > 0.0) {
          couple(p, q, flux);
        } else if (flux < 0.0) {
          couple(q, p, -flux * std::exp(v_q - v_p));
        }
      }
    }
  }
  for (Index p = 0; p < g.size(); ++p) entries.emplace_back(p, p, diagonal[p]);

  SparseMatrix forward(g.size(), g.size());
  forward.setFromTriplets(entries.begin(), entries.end());
  forward.makeCompressed();

  std::vector<Triplet> transposed;
  transposed.reserve(static_cast<std::size_t>(forward.nonZeros()));
  for (int col = 0; col < forward.outerSize(); ++col) {
    for (SparseMatrix::InnerIterator it(forward, col); it; ++it) {
      // L_{col,row} = A_{row,col} vol_row / vol_col
      transposed.emplace_back(col, it.row(), it.value() * vol[it.row()] / vol[col]);
    }
  }
  SparseMatrix backward(g.size(), g.size());
  backward.setFromTriplets(transposed.begin(), transposed.end());
  backward.makeCompressed();

  return Propagator(grid, std::move(forward), std::move(backward),
                    fields.potential, gradient && !perturbed);
}

// ---------------------------------------------------------------------------

TimeStepper::TimeStepper(const SparseMatrix& op, double dt, Scheme scheme)
    : dt_(dt), scheme_(scheme) {
  if (!(dt > 0.0)) throw InvalidArgument(fmt::format("time step must be positive, got {}", dt));
  SparseMatrix identity(op.rows(), op.cols());
  identity.setIdentity();
  const double theta = scheme == Scheme::implicit_euler ? 1.0 : 0.5;
  SparseMatrix lhs = identity - (theta * dt) * op;
  lhs.makeCompressed();
  if (scheme == Scheme::crank_nicolson) {
    explicit_part_ = identity + ((1.0 - theta) * dt) * op;
  }
  solver_.analyzePattern(lhs);
  solver_.factorize(lhs);
  if (solver_.info() != Eigen::Success) {
    throw NumericalError("factorization of the time-step matrix failed");
  }
}

void TimeStepper::step(Eigen::VectorXd& v) const {
  Eigen::VectorXd next;
  if (scheme_ == Scheme::crank_nicolson) {
    const Eigen::VectorXd rhs = explicit_part_ * v;
    next = solver_.solve(rhs);
  } else {
    next = solver_.solve(v);
  }
  if (solver_.info() != Eigen::Success) throw NumericalError("linear solve failed");
  v = std::move(next);
}

std::pair<int, double> step_plan(double t, double dt) {
  if (!(dt > 0.0)) throw InvalidArgument("time step must be positive");
  if (!(t >= 0.0)) throw InvalidArgument("time must be nonnegative");
  if (t == 0.0) return {0, dt};
  const int n = std::max(1, static_cast<int>(std::ceil(t / dt - 1e-9)));
  return {n, t / n};
}

double Trajectory::max_relative_mass_drift() const {
  double worst = 0.0;
  for (double m : masses) worst = std::max(worst, std::abs(m - masses.front()) / masses.front());
  return worst;
}

double Trajectory::min_value() const { return *std::min_element(minima.begin(), minima.end()); }

Trajectory solve_fokker_planck(const Propagator& prop, const Field& u0,
                               double t_end, double dt, Scheme scheme,
                               const std::vector<double>& snapshot_times) {
  require_same_grid(prop.grid(), u0.grid());
  if (u0.min() < 0.0) throw InvalidArgument("initial density has negative values");
  const double mass0 = prop.volumes().dot(u0.values());
  if (!(mass0 > 0.0)) throw InvalidArgument("initial density has zero mass");

  const auto [steps, step] = step_plan(t_end, dt);
  std::vector<int> snap_steps{0};
  for (double ts : snapshot_times) {
    if (ts < 0.0 || ts > t_end * (1.0 + 1e-12)) {
      throw InvalidArgument(fmt::format("snapshot time {} outside [0, {}]", ts, t_end));
    }
    snap_steps.push_back(static_cast<int>(std::lround(ts / step)));
  }
  snap_steps.push_back(steps);
  std::sort(snap_steps.begin(), snap_steps.end());
  snap_steps.erase(std::unique(snap_steps.begin(), snap_steps.end()), snap_steps.end());

  Trajectory traj;
  Eigen::VectorXd u = u0.values() / mass0;
  auto record = [&](int n) {
    traj.step_times.push_back(n * step);
    traj.masses.push_back(prop.volumes().dot(u));
    traj.minima.push_back(u.minCoeff());
  };
  auto snapshot = [&](int n) {
    traj.times.push_back(n * step);
    traj.snapshots.emplace_back(prop.grid_ptr(), u);
  };
  record(0);
  std::size_t next_snap = 0;
  if (snap_steps[next_snap] == 0) snapshot(snap_steps[next_snap++]);
  if (steps > 0) {
    const TimeStepper stepper(prop.forward(), step, scheme);
    for (int n = 1; n <= steps; ++n) {
      stepper.step(u);
      record(n);
      if (scheme == Scheme::crank_nicolson && traj.minima.back() < -1e-12) {
        throw NumericalError(fmt::format(
            "Crank-Nicolson produced negative density {:.3e} at t = {}; use "
            "implicit-euler or a smaller step",
            traj.minima.back(), n * step));
      }
      if (next_snap < snap_steps.size() && snap_steps[next_snap] == n) {
        snapshot(n);
        ++next_snap;
      }
    }
  }
  return traj;
}

// ---------------------------------------------------------------------------

int kernel_dimension(const Propagator& prop) {
  using Graph = boost::adjacency_list<boost::vecS, boost::vecS, boost::directedS>;
  const SparseMatrix& a = prop.forward();
  Graph graph(static_cast<std::size_t>(a.rows()));
  for (int col = 0; col < a.outerSize(); ++col) {
    for (SparseMatrix::InnerIterator it(a, col); it; ++it) {
      // A_{row,col} > 0: mass flows from col into row.
      if (it.row() != col && it.value() > 0.0) {
        boost::add_edge(static_cast<std::size_t>(col),
                        static_cast<std::size_t>(it.row()), graph);
      }
    }
  }
  std::vector<int> component(boost::num_vertices(graph));
  const int count = boost::strong_components(
      graph, boost::make_iterator_property_map(component.begin(),
                                               boost::get(boost::vertex_index, graph)));
  std::vector<bool> leaks(static_cast<std::size_t>(count), false);
  for (auto [e, end] = boost::edges(graph); e != end; ++e) {
    const int from = component[boost::source(*e, graph)];
    const int to = component[boost::target(*e, graph)];
    if (from != to) leaks[static_cast<std::size_t>(from)] = true;
  }
  return static_cast<int>(std::count(leaks.begin(), leaks.end(), false));
}

Field steady_state(const Propagator& prop) {
  const int kernel = kernel_dimension(prop);
  if (kernel != 1) {
    throw NumericalError(fmt::format(
        "discrete generator has a {}-dimensional kernel (non-ergodic discretization)",
        kernel));
  }
  const SparseMatrix& a = prop.forward();
  const double scale = a.diagonal().cwiseAbs().maxCoeff();
  SparseMatrix identity(a.rows(), a.cols());
  identity.setIdentity();
  SparseMatrix shifted = a - (1e-9 * scale) * identity;
  shifted.makeCompressed();
  Eigen::SparseLU<SparseMatrix> solver;
  solver.compute(shifted);
  if (solver.info() != Eigen::Success) {
    throw NumericalError("factorization for the steady state failed");
  }
  const Eigen::VectorXd& vol = prop.volumes();
  Eigen::VectorXd u = Eigen::VectorXd::Ones(a.rows()) / vol.sum();
  for (int it = 0; it < 100; ++it) {
    Eigen::VectorXd next = solver.solve(u);
    if (solver.info() != Eigen::Success) throw NumericalError("steady-state solve failed");
    next /= vol.dot(next);
    const double change = (next - u).cwiseAbs().maxCoeff();
    u = std::move(next);
    if (change <= 1e-15 * u.cwiseAbs().maxCoeff()) break;
  }
  const double floor = -1e-13 * u.cwiseAbs().maxCoeff();
  if (u.minCoeff() < floor) {
    throw NumericalError("steady state has negative entries");
  }
  u = u.cwiseMax(0.0);
  u /= vol.dot(u);
  return Field(prop.grid_ptr(), std::move(u));
}

Measure invariant_measure(const Propagator& prop) {
  const Field u = steady_state(prop);
  return Measure(prop.grid_ptr(), u.values().cwiseProduct(prop.volumes()));
}

Field semigroup_apply(const Propagator& prop, const Field& f, double t,
                      double dt, Scheme scheme) {
  require_same_grid(prop.grid(), f.grid());
  const auto [steps, step] = step_plan(t, dt);
  Eigen::VectorXd v = f.values();
  if (steps > 0) {
    const TimeStepper stepper(prop.backward(), step, scheme);
    for (int n = 0; n < steps; ++n) stepper.step(v);
  }
  return Field(prop.grid_ptr(), std::move(v));
}

}  // namespace fplab
