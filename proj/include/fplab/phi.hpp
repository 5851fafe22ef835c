#pragma once

// Convex entropy generators Phi, Phi-entropies and the Beckner / refined
// functionals of the power family.

#include <string>
#include <vector>

#include "fplab/model.hpp"

namespace fplab {

enum class PhiKind { power, variance, boltzmann, gauss_isoperimetry };

/// Interval I on which Phi is defined. `lower_value_defined` marks an open
/// lower endpoint where Phi extends continuously (x ln x and x^p at 0).
struct Interval {
  double lower;
  double upper;
  bool lower_closed;
  bool upper_closed;
  bool lower_value_defined = false;

  /// Strictly inside, or on an endpoint that is closed.
  bool contains(double x) const;
  /// As `contains`, plus endpoints where the value extends continuously.
  bool admits_value(double x) const;
};

class PhiFunction {
 public:
  PhiKind kind() const { return kind_; }
  const std::string& label() const { return label_; }
  const Interval& interval() const { return interval_; }
  /// Exponent of the power family (1 for Boltzmann, 2 for variance).
  double p() const { return p_; }
  bool strictly_convex() const { return strictly_convex_; }
  bool inverse_second_convex() const { return inverse_second_convex_; }

  double value(double x) const;
  double first(double x) const;
  double second(double x) const;

  friend PhiFunction make_phi(PhiKind kind, double p);

 private:
  PhiKind kind_ = PhiKind::variance;
  std::string label_;
  Interval interval_{};
  double p_ = 2.0;
  bool strictly_convex_ = true;
  bool inverse_second_convex_ = true;
};

/// power: p in [1,2], (x^p - x)/(p(p-1)) on ]0,inf[ (x ln x at p = 1);
/// variance: x^2 on R; boltzmann: x ln x; gauss_isoperimetry: -U on [0,1].
/// `p` is only read for the power family.
PhiFunction make_phi(PhiKind kind, double p = 2.0);

std::string to_string(PhiKind kind);

/// Sampled check on interior points: Phi'' > 0 and, when flagged, -1/Phi''
/// has nonnegative second differences (up to round-off).
bool check_admissible(const PhiFunction& phi, int samples = 400);

/// Inverse of the standard normal distribution function.
double inverse_normal_cdf(double q);

/// U(x) = F'(F^{-1}(x)), the Gaussian isoperimetric profile on [0,1].
double gauss_isoperimetry_U(double x);

/// mu(Phi(f)) - Phi(mu(f)). Throws InvalidArgument if f leaves I.
double phi_entropy(const Measure& mu, const PhiFunction& phi, const Field& f);

/// (mu(g^2) - mu(g^{2/p})^p) / (p - 1), and Ent_mu(g^2) for |p-1| < 1e-3.
double beckner_functional(const Measure& mu, const Field& g, double p);

/// p / (2(p-1)^2) [mu(g^2) - mu(g^{2/p})^p (mu(g^2)/mu(g^{2/p})^p)^{2/p-1}]
/// for p in ]1,2].
double refined_functional(const Measure& mu, const Field& g, double p);

struct PSweepRow {
  double p;
  double beckner;
  double refined;
};

struct PSweep {
  std::vector<PSweepRow> rows;
  bool beckner_nonincreasing = true;
  bool refined_nonincreasing = true;
  double variance = 0.0;
  double entropy_of_square = 0.0;
};

/// Tabulates both functionals over `ps` (sorted ascending, each in ]1,2])
/// and checks monotonicity with 1e-10 relative slack.
PSweep p_sweep(const Measure& mu, const Field& g, const std::vector<double>& ps);

}  // namespace fplab
