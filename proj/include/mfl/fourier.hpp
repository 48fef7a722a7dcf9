#pragma once

// Truncated cosine series on a torus: u(x) = sum_j a_j cos(omega k_j . x + phi_j).
// Used for external potentials and for initial perturbations.

#include <array>
#include <cmath>
#include <vector>

#include "mfl/grid.hpp"

namespace mfl {

struct FourierMode {
  std::array<int, 2> wavevector{0, 0};
  double amplitude = 0.0;
  double phase = 0.0;

  bool is_zero() const { return wavevector[0] == 0 && wavevector[1] == 0; }
};

struct FourierSeries {
  std::vector<FourierMode> modes;

  double operator()(const PeriodicGrid& g, double x, double y) const {
    const double w = g.angular_unit();
    double s = 0.0;
    for (const auto& m : modes) s += m.amplitude * std::cos(w * (m.wavevector[0] * x + m.wavevector[1] * y) + m.phase);
    return s;
  }

  ScalarField sample(const PeriodicGrid& g) const {
    return ScalarField::sample(g, [&](double x, double y) { return (*this)(g, x, y); });
  }

  // Upper bound on sup |grad u|.
  double gradient_bound(const PeriodicGrid& g) const {
    double s = 0.0;
    for (const auto& m : modes) s += std::abs(m.amplitude) * g.angular_unit() * std::hypot(m.wavevector[0], m.wavevector[1]);
    return s;
  }

  // Upper bound on sup ||Hess u||_op.
  double hessian_bound(const PeriodicGrid& g) const {
    double s = 0.0;
    const double w = g.angular_unit();
    for (const auto& m : modes) {
      double k2 = m.wavevector[0] * m.wavevector[0] + m.wavevector[1] * m.wavevector[1];
      s += std::abs(m.amplitude) * w * w * k2;
    }
    return s;
  }
};

}  // namespace mfl
