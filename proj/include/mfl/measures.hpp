#pragma once

// Probability densities on periodic grids and the divergences used as error
// metrics: chi^2, KL, entropy, and the 2-Wasserstein distance on the circle.

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <numeric>
#include <vector>

#include "mfl/fourier.hpp"
#include "mfl/grid.hpp"

namespace mfl {

// Strictly positive node values integrating to one under Lebesgue quadrature.
class DensityField {
 public:
  static constexpr double positivity_floor = 1e-300;
  static constexpr double mass_tolerance = 1e-10;

  DensityField() = default;

  // Validates an already-normalised field; use normalize() for raw input.
  static DensityField from_values(ScalarField f) {
    for (double v : f.values)
      if (!(v >= positivity_floor) || !std::isfinite(v))
        throw std::invalid_argument("DensityField: values must be finite and >= floor");
    double m = integrate(f);
    if (std::abs(m - 1.0) > mass_tolerance) throw std::invalid_argument("DensityField: mass != 1");
    DensityField d;
    d.field_ = std::move(f);
    return d;
  }

  const PeriodicGrid& grid() const { return field_.grid; }
  const std::vector<double>& values() const { return field_.values; }
  const ScalarField& field() const { return field_; }
  std::size_t size() const { return field_.size(); }
  double operator[](std::size_t i) const { return field_[i]; }
  double mass() const { return integrate(field_); }
  double min() const { return *std::min_element(field_.values.begin(), field_.values.end()); }

 private:
  ScalarField field_;
};

// Clamp at the positivity floor, then divide by the quadrature mass. The floor
// is reapplied after rescaling; it moves the mass by at most n * 1e-300.
inline DensityField normalize(ScalarField raw) {
  double total = 0.0;
  for (double& v : raw.values) {
    if (!std::isfinite(v)) throw std::invalid_argument("normalize: non-finite input");
    if (v > 0.0) total += v;
    v = std::max(v, DensityField::positivity_floor);
  }
  if (!(total > 0.0)) throw std::invalid_argument("normalize: input has no positive mass");
  double m = integrate(raw);
  for (double& v : raw.values) v = std::max(v / m, DensityField::positivity_floor);
  return DensityField::from_values(std::move(raw));
}

// Zero mode excluded so the perturbation has zero Lebesgue mean.
struct FourierPerturbation {
  std::vector<FourierMode> modes;

  FourierPerturbation() = default;
  explicit FourierPerturbation(std::vector<FourierMode> m) : modes(std::move(m)) {
    for (const auto& mode : modes)
      if (mode.is_zero()) throw std::invalid_argument("FourierPerturbation: zero wavevector");
  }

  ScalarField sample(const PeriodicGrid& g) const { return FourierSeries{modes}.sample(g); }
};

namespace detail {
inline void require_same_grid(const DensityField& a, const DensityField& b, const char* what) {
  require_same_grid(a.grid(), b.grid(), what);
}
}  // namespace detail

inline double chi_squared(const DensityField& mu, const DensityField& nu) {
  detail::require_same_grid(mu, nu, "chi_squared");
  double s = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    double r = mu[i] / nu[i] - 1.0;
    s += r * r * nu[i];
  }
  return s * mu.grid().cell_volume();
}

inline double kl(const DensityField& mu, const DensityField& nu) {
  detail::require_same_grid(mu, nu, "kl");
  double s = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) s += mu[i] * std::log(mu[i] / nu[i]);
  return s * mu.grid().cell_volume();
}

// Negative differential entropy, integral of mu log mu.
inline double entropy(const DensityField& mu) {
  double s = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) s += mu[i] * std::log(mu[i]);
  return s * mu.grid().cell_volume();
}

// mu = (1 + scale * (d - mean_nu d)) nu, renormalised. Requires scale * max|d| < 1
// for the direction as supplied.
inline DensityField perturb(const DensityField& nu, const ScalarField& direction, double scale) {
  detail::require_same_grid(nu.grid(), direction.grid, "perturb");
  double peak = 0.0;
  for (double v : direction.values) peak = std::max(peak, std::abs(v));
  if (std::abs(scale) * peak >= 1.0) throw std::invalid_argument("perturb: scale * max|f| >= 1");
  double mean = integrate(direction, nu.field());
  ScalarField raw(nu.grid());
  for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = (1.0 + scale * (direction[i] - mean)) * nu[i];
  return normalize(std::move(raw));
}

inline DensityField perturb(const DensityField& nu, const FourierPerturbation& p, double scale) {
  return perturb(nu, p.sample(nu.grid()), scale);
}

namespace detail {

// Atom masses m_i = mu_i h at nodes x_i = i h, renormalised to sum 1.
inline std::vector<double> atom_masses(const DensityField& mu) {
  std::vector<double> m(mu.values());
  double total = 0.0;
  for (double& v : m) total += v;
  for (double& v : m) v /= total;
  return m;
}

// integral_0^1 (Fa^{-1}(t) - Fb^{-1}(t + theta))^2 dt for quantile functions of
// atoms on the circle lifted periodically to the line.
inline double shifted_quantile_cost(const std::vector<double>& a, const std::vector<double>& b, double h,
                                    double period, double theta) {
  const std::size_t n = a.size();
  double lift_b = std::floor(theta);
  double r = theta - lift_b;  // in [0, 1)
  // Locate the b atom whose quantile interval contains r.
  std::size_t j = 0;
  double b_end = b[0];
  while (b_end <= r && j + 1 < n) {
    ++j;
    b_end += b[j];
  }
  // Interval ends expressed in the t variable (subtract the shift).
  double b_remaining = b_end - r;
  std::size_t i = 0;
  double a_remaining = a[0];
  double cost = 0.0;
  double t = 0.0;
  while (t < 1.0 - 1e-15) {
    double piece = std::min(a_remaining, b_remaining);
    piece = std::min(piece, 1.0 - t);
    double d = i * h - (j * h + lift_b * period);
    cost += piece * d * d;
    t += piece;
    a_remaining -= piece;
    b_remaining -= piece;
    if (a_remaining <= 0.0) {
      if (++i == n) break;
      a_remaining = a[i];
    }
    if (b_remaining <= 0.0) {
      if (++j == n) {
        j = 0;
        lift_b += 1.0;
      }
      b_remaining = b[j];
    }
  }
  return cost;
}

}  // namespace detail

// Exact 2-Wasserstein distance between the atomic measures sum_i mu_i h delta_{x_i}
// on the circle. The cost of the shifted quantile coupling is convex in the
// shift; its minimiser over the real line gives the circular optimum.
inline double w2_circle(const DensityField& mu, const DensityField& nu) {
  detail::require_same_grid(mu, nu, "w2_circle");
  if (mu.grid().dim() != 1) throw std::invalid_argument("w2_circle: dim must be 1");
  const auto a = detail::atom_masses(mu);
  const auto b = detail::atom_masses(nu);
  const double h = mu.grid().spacing(), period = mu.grid().period();
  auto cost = [&](double theta) { return detail::shifted_quantile_cost(a, b, h, period, theta); };

  // Golden-section search on [-1, 1]; cost is convex piecewise linear.
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double lo = -1.0, hi = 1.0;
  double x1 = hi - phi * (hi - lo), x2 = lo + phi * (hi - lo);
  double f1 = cost(x1), f2 = cost(x2);
  double best = std::min(f1, f2);
  for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
    if (f1 <= f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - phi * (hi - lo);
      f1 = cost(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + phi * (hi - lo);
      f2 = cost(x2);
    }
    best = std::min(best, std::min(f1, f2));
  }
  best = std::min(best, cost(0.5 * (lo + hi)));
  // The minimiser is a breakpoint theta = A_i - B_j - k of the prefix sums;
  // evaluating those near the bracket removes the round-off left by the search,
  // which the square root would otherwise amplify.
  std::vector<double> prefix_b(b.size() + 1, 0.0);
  std::partial_sum(b.begin(), b.end(), prefix_b.begin() + 1);
  constexpr double slack = 1e-9;
  double prefix_a = 0.0;
  for (std::size_t i = 0; i <= a.size(); ++i) {
    for (int k = -2; k <= 1; ++k) {
      // B_j in [A_i - k - hi - slack, A_i - k - lo + slack]
      auto first = std::lower_bound(prefix_b.begin(), prefix_b.end(), prefix_a - k - hi - slack);
      for (auto it = first; it != prefix_b.end() && *it <= prefix_a - k - lo + slack; ++it)
        best = std::min(best, cost(prefix_a - *it - k));
    }
    if (i < a.size()) prefix_a += a[i];
  }
  return std::sqrt(std::max(best, 0.0));
}

}  // namespace mfl
