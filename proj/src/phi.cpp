#include "fplab/phi.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "fplab/errors.hpp"

namespace fplab {

bool Interval::contains(double x) const {
  if (x < lower || x > upper) return false;
  if (x == lower) return lower_closed;
  if (x == upper) return upper_closed;
  return true;
}

bool Interval::admits_value(double x) const {
  if (x == lower && lower_value_defined) return true;
  return contains(x);
}

std::string to_string(PhiKind kind) {
  switch (kind) {
    case PhiKind::power:
      return "power";
    case PhiKind::variance:
      return "variance";
    case PhiKind::boltzmann:
      return "boltzmann";
    case PhiKind::gauss_isoperimetry:
      return "gauss-isoperimetry";
  }
  return "unknown";
}

PhiFunction make_phi(PhiKind kind, double p) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  PhiFunction phi;
  phi.kind_ = kind;
  switch (kind) {
    case PhiKind::power:
      if (!(p >= 1.0 && p <= 2.0)) {
        throw InvalidArgument(fmt::format("power entropy needs p in [1,2], got {}", p));
      }
      phi.p_ = p;
      phi.label_ = fmt::format("power p={}", p);
      phi.interval_ = {0.0, inf, false, false, true};
      break;
    case PhiKind::variance:
      phi.p_ = 2.0;
      phi.label_ = "variance";
      phi.interval_ = {-inf, inf, false, false, false};
      break;
    case PhiKind::boltzmann:
      phi.p_ = 1.0;
      phi.label_ = "boltzmann";
      phi.interval_ = {0.0, inf, false, false, true};
      break;
    case PhiKind::gauss_isoperimetry:
      phi.p_ = 0.0;
      phi.label_ = "gauss-isoperimetry";
      phi.interval_ = {0.0, 1.0, true, true, true};
      break;
  }
  return phi;
}

double PhiFunction::value(double x) const {
  switch (kind_) {
    case PhiKind::power:
      if (p_ == 1.0) return x == 0.0 ? 0.0 : x * std::log(x);
      return (std::pow(x, p_) - x) / (p_ * (p_ - 1.0));
    case PhiKind::variance:
      return x * x;
    case PhiKind::boltzmann:
      return x == 0.0 ? 0.0 : x * std::log(x);
    case PhiKind::gauss_isoperimetry:
      return -gauss_isoperimetry_U(x);
  }
  return 0.0;
}

double PhiFunction::first(double x) const {
  switch (kind_) {
    case PhiKind::power:
      if (p_ == 1.0) return std::log(x) + 1.0;
      return (p_ * std::pow(x, p_ - 1.0) - 1.0) / (p_ * (p_ - 1.0));
    case PhiKind::variance:
      return 2.0 * x;
    case PhiKind::boltzmann:
      return std::log(x) + 1.0;
    case PhiKind::gauss_isoperimetry:
      // U' = -F^{-1}, so Phi' = F^{-1}.
      if (x <= 0.0) return -std::numeric_limits<double>::infinity();
      if (x >= 1.0) return std::numeric_limits<double>::infinity();
      return inverse_normal_cdf(x);
  }
  return 0.0;
}

double PhiFunction::second(double x) const {
  switch (kind_) {
    case PhiKind::power:
      if (p_ == 1.0) return 1.0 / x;
      return p_ == 2.0 ? 1.0 : std::pow(x, p_ - 2.0);
    case PhiKind::variance:
      return 2.0;
    case PhiKind::boltzmann:
      return 1.0 / x;
    case PhiKind::gauss_isoperimetry:
      return 1.0 / gauss_isoperimetry_U(x);
  }
  return 0.0;
}

bool check_admissible(const PhiFunction& phi, int samples) {
  const Interval& I = phi.interval();
  const double lo = std::isfinite(I.lower) ? I.lower : -10.0;
  const double hi = std::isfinite(I.upper) ? I.upper : lo + 10.0;
  const double step = (hi - lo) / (samples + 1);
  auto inv = [&](double x) { return -1.0 / phi.second(x); };
  for (int k = 1; k <= samples; ++k) {
    const double x = lo + k * step;
    if (!(phi.second(x) > 0.0)) return false;
    if (phi.inverse_second_convex() && k > 1 && k < samples) {
      const double d2 = inv(x + step) - 2.0 * inv(x) + inv(x - step);
      const double scale = std::abs(inv(x + step)) + 2.0 * std::abs(inv(x)) +
                           std::abs(inv(x - step));
      if (d2 < -1e-12 * scale) return false;
    }
  }
  return true;
}

double inverse_normal_cdf(double q) {
  if (!(q > 0.0 && q < 1.0)) {
    if (q == 0.0) return -std::numeric_limits<double>::infinity();
    if (q == 1.0) return std::numeric_limits<double>::infinity();
    throw InvalidArgument(fmt::format("inverse normal CDF needs q in [0,1], got {}", q));
  }
  if (q > 0.5) return -inverse_normal_cdf(1.0 - q);

  // Rational minimax approximation (relative error below 1.2e-9).
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double q_low = 0.02425;

  double z = 0.0;
  if (q < q_low) {
    const double t = std::sqrt(-2.0 * std::log(q));
    z = (((((c[0] * t + c[1]) * t + c[2]) * t + c[3]) * t + c[4]) * t + c[5]) /
        ((((d[0] * t + d[1]) * t + d[2]) * t + d[3]) * t + 1.0);
  } else {
    const double t = q - 0.5;
    const double r = t * t;
    z = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * t /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  }

  // One Newton step on F(z) = q; F(z) = erfc(-z/sqrt2)/2 is accurate in the
  // lower tail.
  const double residual = 0.5 * std::erfc(-z / std::numbers::sqrt2) - q;
  const double density =
      std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
  z -= residual / density;
  return z;
}

double gauss_isoperimetry_U(double x) {
  if (!(x >= 0.0 && x <= 1.0)) {
    throw InvalidArgument(fmt::format("isoperimetric profile needs x in [0,1], got {}", x));
  }
  const double q = std::min(x, 1.0 - x);
  if (q == 0.0) return 0.0;
  const double z = inverse_normal_cdf(q);
  return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}

double phi_entropy(const Measure& mu, const PhiFunction& phi, const Field& f) {
  require_same_grid(mu.grid(), f.grid());
  const auto& w = mu.weights();
  double mean_phi = 0.0;
  for (Index i = 0; i < f.size(); ++i) {
    if (!phi.interval().admits_value(f[i])) {
      const auto x = f.grid().point(i);
      throw InvalidArgument(fmt::format(
          "field value {} at node ({}, {}) outside the interval of {}", f[i],
          x[0], x[1], phi.label()));
    }
    mean_phi += w[i] * phi.value(f[i]);
  }
  return mean_phi - phi.value(integrate(mu, f));
}

namespace {

void require_positive(const Field& g, const char* what) {
  if (!(g.min() > 0.0)) {
    throw InvalidArgument(fmt::format("{} needs a positive field (min {})", what, g.min()));
  }
}

bool is_constant(const Field& g) { return g.max() == g.min(); }

double mean_power(const Measure& mu, const Field& g, double exponent) {
  const auto& w = mu.weights();
  double s = 0.0;
  for (Index i = 0; i < g.size(); ++i) s += w[i] * std::pow(g[i], exponent);
  return s;
}

double mean_square(const Measure& mu, const Field& g) {
  const auto& w = mu.weights();
  double s = 0.0;
  for (Index i = 0; i < g.size(); ++i) s += w[i] * (g[i] * g[i]);
  return s;
}

}  // namespace

double beckner_functional(const Measure& mu, const Field& g, double p) {
  require_same_grid(mu.grid(), g.grid());
  require_positive(g, "Beckner functional");
  if (!(p > 0.0) || !std::isfinite(p)) {
    throw InvalidArgument(fmt::format("Beckner functional needs p > 0, got {}", p));
  }
  if (std::abs(p - 1.0) < 1e-3) {
    const Field g2 = g.map([](double v) { return v * v; });
    return phi_entropy(mu, make_phi(PhiKind::boltzmann), g2);
  }
  const double m2 = mean_square(mu, g);
  const double mp = std::pow(mean_power(mu, g, 2.0 / p), p);
  return (m2 - mp) / (p - 1.0);
}

double refined_functional(const Measure& mu, const Field& g, double p) {
  require_same_grid(mu.grid(), g.grid());
  require_positive(g, "refined functional");
  if (!(p > 1.0 && p <= 2.0)) {
    throw InvalidArgument(fmt::format("refined functional needs p in ]1,2], got {}", p));
  }
  if (is_constant(g)) return 0.0;
  const double m2 = mean_square(mu, g);
  const double mp = std::pow(mean_power(mu, g, 2.0 / p), p);
  const double bracket = m2 - mp * std::pow(m2 / mp, 2.0 / p - 1.0);
  return p / (2.0 * (p - 1.0) * (p - 1.0)) * bracket;
}

PSweep p_sweep(const Measure& mu, const Field& g, const std::vector<double>& ps) {
  PSweep out;
  out.variance = phi_entropy(mu, make_phi(PhiKind::variance), g);
  out.entropy_of_square = phi_entropy(mu, make_phi(PhiKind::boltzmann),
                                      g.map([](double v) { return v * v; }));
  for (std::size_t k = 0; k < ps.size(); ++k) {
    if (k > 0 && !(ps[k] > ps[k - 1])) {
      throw InvalidArgument("p grid must be strictly increasing");
    }
    out.rows.push_back({ps[k], beckner_functional(mu, g, ps[k]),
                        refined_functional(mu, g, ps[k])});
  }
  auto nonincreasing = [&](auto column) {
    for (std::size_t k = 1; k < out.rows.size(); ++k) {
      const double prev = column(out.rows[k - 1]);
      const double cur = column(out.rows[k]);
      if (cur > prev + 1e-10 * std::abs(prev)) return false;
    }
    return true;
  };
  out.beckner_nonincreasing = nonincreasing([](const PSweepRow& r) { return r.beckner; });
  out.refined_nonincreasing = nonincreasing([](const PSweepRow& r) { return r.refined; });
  return out;
}

}  // namespace fplab
