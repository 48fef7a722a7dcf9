#pragma once

// Discrete calculus on flat tori T^d, d in {1, 2}.
//
// Node indexing is row-major with axis 0 fastest: node = i0 + n * i1.
// Two families of difference operators live here:
//   * node-centred:  gradient / weighted_divergence (second order, wide stencil)
//   * staggered:     face_gradient / face_divergence (compact stencil), where
//     component a of a face field at node i lives on the face i + e_a / 2.

#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mfl {

class PeriodicGrid {
 public:
  PeriodicGrid() = default;

  PeriodicGrid(int dim, int n, double period) : dim_(dim), n_(n), period_(period) {
    if (dim != 1 && dim != 2)
      throw std::invalid_argument("grid: dim must be 1 or 2, got " + std::to_string(dim));
    if (n < 8) throw std::invalid_argument("grid: need n >= 8, got " + std::to_string(n));
    if (!(period > 0.0) || !std::isfinite(period))
      throw std::invalid_argument("grid: period must be positive");
    spacing_ = period / n;
  }

  int dim() const { return dim_; }
  int n() const { return n_; }
  double period() const { return period_; }
  double spacing() const { return spacing_; }
  // h^dim, the quadrature weight of one node.
  double cell_volume() const { return dim_ == 1 ? spacing_ : spacing_ * spacing_; }
  // 2 pi / period: maps integer wavevectors to angular frequencies.
  double angular_unit() const { return 2.0 * std::numbers::pi / period_; }

  std::size_t size() const {
    return dim_ == 1 ? static_cast<std::size_t>(n_) : static_cast<std::size_t>(n_) * n_;
  }

  int index(std::size_t node, int axis) const {
    return axis == 0 ? static_cast<int>(node % n_) : static_cast<int>(node / n_);
  }

  double coordinate(std::size_t node, int axis) const { return index(node, axis) * spacing_; }

  std::array<double, 2> point(std::size_t node) const {
    return {coordinate(node, 0), dim_ == 2 ? coordinate(node, 1) : 0.0};
  }

  // Neighbour along `axis` shifted by `offset` (any sign), wrapping modulo n.
  std::size_t neighbor(std::size_t node, int axis, int offset) const {
    int i = index(node, axis);
    int j = ((i + offset) % n_ + n_) % n_;
    if (axis == 0) return node - i + j;
    return node + static_cast<std::size_t>(j - i) * n_;
  }

  friend bool operator==(const PeriodicGrid& a, const PeriodicGrid& b) {
    return a.dim_ == b.dim_ && a.n_ == b.n_ && a.period_ == b.period_;
  }

 private:
  int dim_ = 1;
  int n_ = 8;
  double period_ = 2.0 * std::numbers::pi;
  double spacing_ = 2.0 * std::numbers::pi / 8;
};

inline PeriodicGrid build_grid(int dim, int n, double period) { return PeriodicGrid(dim, n, period); }

struct ScalarField {
  PeriodicGrid grid;
  std::vector<double> values;

  ScalarField() = default;
  explicit ScalarField(const PeriodicGrid& g, double fill = 0.0) : grid(g), values(g.size(), fill) {}
  ScalarField(const PeriodicGrid& g, std::vector<double> v) : grid(g), values(std::move(v)) {
    if (values.size() != grid.size()) throw std::invalid_argument("ScalarField: length != n^dim");
  }

  std::size_t size() const { return values.size(); }
  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }

  template <class F>
  static ScalarField sample(const PeriodicGrid& g, F&& f) {
    ScalarField out(g);
    for (std::size_t i = 0; i < g.size(); ++i) {
      auto p = g.point(i);
      out.values[i] = f(p[0], p[1]);
    }
    return out;
  }
};

enum class Staggering { nodes, faces };

// dim components, each n^dim long, stored component-major.
struct VectorField {
  PeriodicGrid grid;
  Staggering staggering = Staggering::nodes;
  std::vector<double> values;

  VectorField() = default;
  explicit VectorField(const PeriodicGrid& g, Staggering s = Staggering::nodes)
      : grid(g), staggering(s), values(g.size() * g.dim(), 0.0) {}

  std::span<double> component(int axis) {
    return {values.data() + axis * grid.size(), grid.size()};
  }
  std::span<const double> component(int axis) const {
    return {values.data() + axis * grid.size(), grid.size()};
  }
  double& at(int axis, std::size_t node) { return values[axis * grid.size() + node]; }
  double at(int axis, std::size_t node) const { return values[axis * grid.size() + node]; }
};

namespace detail {
inline void require_same_grid(const PeriodicGrid& a, const PeriodicGrid& b, const char* what) {
  if (!(a == b)) throw std::invalid_argument(std::string(what) + ": grid mismatch");
}
}  // namespace detail

// Centred second-order difference per axis: (f_{i+1} - f_{i-1}) / 2h.
inline VectorField gradient(const ScalarField& f) {
  const auto& g = f.grid;
  if (f.size() != g.size()) throw std::invalid_argument("gradient: shape mismatch");
  VectorField out(g);
  const double inv = 1.0 / (2.0 * g.spacing());
  for (int a = 0; a < g.dim(); ++a)
    for (std::size_t i = 0; i < g.size(); ++i)
      out.at(a, i) = (f[g.neighbor(i, a, 1)] - f[g.neighbor(i, a, -1)]) * inv;
  return out;
}

// +(1/nu) * flux divergence of nu * phi, with face flux the average of the
// adjacent node fluxes. Minus this is the nu-adjoint of `gradient`.
// `density` is any strictly positive node field (typically a DensityField's values).
inline ScalarField weighted_divergence(const ScalarField& density, const VectorField& phi) {
  const auto& g = density.grid;
  detail::require_same_grid(g, phi.grid, "weighted_divergence");
  for (double v : density.values)
    if (!(v > 0.0)) throw std::invalid_argument("weighted_divergence: density must be > 0");
  ScalarField out(g);
  const double h = g.spacing();
  for (int a = 0; a < g.dim(); ++a) {
    auto c = phi.component(a);
    for (std::size_t i = 0; i < g.size(); ++i) {
      std::size_t ip = g.neighbor(i, a, 1), im = g.neighbor(i, a, -1);
      double right = 0.5 * (density[i] * c[i] + density[ip] * c[ip]);
      double left = 0.5 * (density[im] * c[im] + density[i] * c[i]);
      out[i] += (right - left) / h;
    }
  }
  for (std::size_t i = 0; i < g.size(); ++i) out[i] /= density[i];
  return out;
}

// Lebesgue quadrature: sum f_i h^dim.
inline double integrate(const ScalarField& f) {
  double s = 0.0;
  for (double v : f.values) s += v;
  return s * f.grid.cell_volume();
}

// Quadrature against a density: sum f_i nu_i h^dim.
inline double integrate(const ScalarField& f, const ScalarField& density) {
  detail::require_same_grid(f.grid, density.grid, "integrate");
  double s = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) s += f[i] * density[i];
  return s * f.grid.cell_volume();
}

// Forward difference onto faces: (f_{i+e_a} - f_i) / h.
inline VectorField face_gradient(const ScalarField& f) {
  const auto& g = f.grid;
  VectorField out(g, Staggering::faces);
  const double inv = 1.0 / g.spacing();
  for (int a = 0; a < g.dim(); ++a)
    for (std::size_t i = 0; i < g.size(); ++i) out.at(a, i) = (f[g.neighbor(i, a, 1)] - f[i]) * inv;
  return out;
}

// Logarithmic mean (a - b) / (log a - log b); the Scharfetter-Gummel face weight.
inline double logarithmic_mean(double a, double b) {
  double r = b / a - 1.0;
  if (std::abs(r) < 1e-4) return a * (1.0 + r / 2.0 - r * r / 12.0 + r * r * r / 24.0);
  return (a - b) / (std::log(a) - std::log(b));
}

// Density interpolated to faces with the logarithmic mean.
inline VectorField face_density(const ScalarField& density) {
  const auto& g = density.grid;
  VectorField out(g, Staggering::faces);
  for (int a = 0; a < g.dim(); ++a)
    for (std::size_t i = 0; i < g.size(); ++i)
      out.at(a, i) = logarithmic_mean(density[i], density[g.neighbor(i, a, 1)]);
  return out;
}

// (1/nu_i) * sum_a (nu_face phi)_{i+1/2} - (nu_face phi)_{i-1/2}) / h.
// Minus this is the adjoint of face_gradient between L^2_nu (nodes) and the
// face space weighted by nu_face.
inline ScalarField face_divergence(const ScalarField& density, const VectorField& face_weights,
                                   const VectorField& phi) {
  const auto& g = density.grid;
  ScalarField out(g);
  const double h = g.spacing();
  for (int a = 0; a < g.dim(); ++a)
    for (std::size_t i = 0; i < g.size(); ++i) {
      std::size_t im = g.neighbor(i, a, -1);
      out[i] += (face_weights.at(a, i) * phi.at(a, i) - face_weights.at(a, im) * phi.at(a, im)) / h;
    }
  for (std::size_t i = 0; i < g.size(); ++i) out[i] /= density[i];
  return out;
}

// <Phi, Psi>_nu for node fields: sum_a sum_i Phi_a Psi_a nu_i h^d.
inline double inner(const VectorField& x, const VectorField& y, const ScalarField& density) {
  const auto& g = density.grid;
  double s = 0.0;
  for (int a = 0; a < g.dim(); ++a)
    for (std::size_t i = 0; i < g.size(); ++i) s += x.at(a, i) * y.at(a, i) * density[i];
  return s * g.cell_volume();
}

inline double inner(const ScalarField& x, const ScalarField& y, const ScalarField& density) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i] * density[i];
  return s * density.grid.cell_volume();
}

}  // namespace mfl
