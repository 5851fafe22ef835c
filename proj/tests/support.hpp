#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "fplab/model.hpp"

namespace fplab::testing {

inline GridPtr grid1(double lo, double hi, int cells) {
  const std::array<double, 2> b[] = {{lo, hi}};
  const int c[] = {cells};
  return build_grid(b, c);
}

inline GridPtr grid2(double lo, double hi, int cells) {
  const std::array<double, 2> b[] = {{lo, hi}, {lo, hi}};
  const int c[] = {cells, cells};
  return build_grid(b, c);
}

inline Model ou1() { return Model::with_potential(1, {"1"}, "x1^2/2"); }

inline Field x1_field(const GridPtr& g) {
  return Field::sample(g, [](std::span<const double> x) { return x[0]; });
}

// Max-norm over nodes accepted by `keep`.
template <typename Keep>
double max_abs_diff(const Field& a, const Field& b, Keep keep) {
  double m = 0.0;
  for (Index i = 0; i < a.size(); ++i) {
    if (keep(i)) m = std::max(m, std::abs(a[i] - b[i]));
  }
  return m;
}

}  // namespace fplab::testing
