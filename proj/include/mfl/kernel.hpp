#pragma once

// Two-point interaction kernels k(x, y) = sum_j a_j cos(w_x p_j . x + w_y q_j . y + phi_j)
// between the nodes of two (possibly different) periodic grids.

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "mfl/grid.hpp"
#include "mfl/measures.hpp"

namespace mfl {

struct KernelMode {
  std::array<int, 2> p{0, 0};  // wavevector acting on x
  std::array<int, 2> q{0, 0};  // wavevector acting on y
  double amplitude = 0.0;
  double phase = 0.0;
};

class Kernel {
 public:
  static constexpr double symmetry_tolerance = 1e-12;

  Kernel() = default;
  Kernel(PeriodicGrid gx, PeriodicGrid gy, std::vector<KernelMode> modes)
      : gx_(gx), gy_(gy), modes_(std::move(modes)) {
    for (const auto& m : modes_) {
      if ((gx_.dim() == 1 && m.p[1] != 0) || (gy_.dim() == 1 && m.q[1] != 0))
        throw std::invalid_argument("Kernel: wavevector has a component beyond the grid dimension");
    }
    sample();
  }
  // Same grid on both sides.
  Kernel(PeriodicGrid g, std::vector<KernelMode> modes) : Kernel(g, g, std::move(modes)) {}

  const PeriodicGrid& x_grid() const { return gx_; }
  const PeriodicGrid& y_grid() const { return gy_; }
  const std::vector<KernelMode>& modes() const { return modes_; }
  // K_mat(i, j) = k(x_i, y_j).
  const Eigen::MatrixXd& matrix() const { return matrix_; }
  bool symmetric() const { return symmetric_; }
  bool is_zero() const { return matrix_.size() == 0 || matrix_.cwiseAbs().maxCoeff() == 0.0; }

  double operator()(std::array<double, 2> x, std::array<double, 2> y) const {
    const double wx = gx_.angular_unit(), wy = gy_.angular_unit();
    double s = 0.0;
    for (const auto& m : modes_)
      s += m.amplitude * std::cos(wx * (m.p[0] * x[0] + m.p[1] * x[1]) + wy * (m.q[0] * y[0] + m.q[1] * y[1]) + m.phase);
    return s;
  }

  // k^T(y, x) = k(x, y).
  Kernel transposed() const {
    std::vector<KernelMode> swapped;
    for (const auto& m : modes_) swapped.push_back({m.q, m.p, m.amplitude, m.phase});
    return Kernel(gy_, gx_, std::move(swapped));
  }

  Kernel negated() const { return scaled(-1.0); }

  Kernel scaled(double factor) const {
    auto m = modes_;
    for (auto& mode : m) mode.amplitude *= factor;
    return Kernel(gx_, gy_, std::move(m));
  }

  Kernel plus_constant(double c) const {
    auto m = modes_;
    m.push_back({{0, 0}, {0, 0}, c, 0.0});
    return Kernel(gx_, gy_, std::move(m));
  }

  // sup |grad_x k|.
  double gradient_x_bound() const {
    double s = 0.0;
    for (const auto& m : modes_) s += std::abs(m.amplitude) * gx_.angular_unit() * std::hypot(m.p[0], m.p[1]);
    return s;
  }

  // sup ||grad_x grad_y k||_op, mode by mode: |a| w_x w_y |p| |q|.
  double cross_hessian_bound() const {
    double s = 0.0;
    for (const auto& m : modes_)
      s += std::abs(m.amplitude) * gx_.angular_unit() * gy_.angular_unit() * std::hypot(m.p[0], m.p[1]) *
           std::hypot(m.q[0], m.q[1]);
    return s;
  }

  // sup ||grad_x grad_y^2 k||_op.
  double mixed_third_bound() const {
    double s = 0.0;
    const double wx = gx_.angular_unit(), wy = gy_.angular_unit();
    for (const auto& m : modes_)
      s += std::abs(m.amplitude) * wx * wy * wy * std::hypot(m.p[0], m.p[1]) * (m.q[0] * m.q[0] + m.q[1] * m.q[1]);
    return s;
  }

  // sup ||grad_x grad_x k||_op.
  double hessian_x_bound() const {
    double s = 0.0;
    const double w = gx_.angular_unit();
    for (const auto& m : modes_) s += std::abs(m.amplitude) * w * w * (m.p[0] * m.p[0] + m.p[1] * m.p[1]);
    return s;
  }

 private:
  void sample() {
    matrix_.resize(static_cast<Eigen::Index>(gx_.size()), static_cast<Eigen::Index>(gy_.size()));
    for (std::size_t i = 0; i < gx_.size(); ++i) {
      auto x = gx_.point(i);
      for (std::size_t j = 0; j < gy_.size(); ++j) matrix_(i, j) = (*this)(x, gy_.point(j));
    }
    symmetric_ = false;
    if (gx_ == gy_) {
      double scale = std::max(1.0, matrix_.cwiseAbs().maxCoeff());
      symmetric_ = (matrix_ - matrix_.transpose()).cwiseAbs().maxCoeff() <= symmetry_tolerance * scale;
    }
  }

  PeriodicGrid gx_, gy_;
  std::vector<KernelMode> modes_;
  Eigen::MatrixXd matrix_;
  bool symmetric_ = true;
};

// Lebesgue-weighted interaction potential (K~mu)(x_i) = sum_j k(x_i, y_j) mu_j h_y^d.
inline ScalarField interaction_potential(const Kernel& k, const DensityField& mu) {
  detail::require_same_grid(k.y_grid(), mu.grid(), "interaction_potential");
  Eigen::Map<const Eigen::VectorXd> m(mu.values().data(), static_cast<Eigen::Index>(mu.size()));
  Eigen::VectorXd out = k.matrix() * m * k.y_grid().cell_volume();
  return ScalarField(k.x_grid(), std::vector<double>(out.data(), out.data() + out.size()));
}

// Potential felt by the y-side: (K~^T mu)(y_j) = sum_i k(x_i, y_j) mu_i h_x^d.
inline ScalarField interaction_potential_transposed(const Kernel& k, const DensityField& mu) {
  detail::require_same_grid(k.x_grid(), mu.grid(), "interaction_potential_transposed");
  Eigen::Map<const Eigen::VectorXd> m(mu.values().data(), static_cast<Eigen::Index>(mu.size()));
  Eigen::VectorXd out = k.matrix().transpose() * m * k.x_grid().cell_volume();
  return ScalarField(k.y_grid(), std::vector<double>(out.data(), out.data() + out.size()));
}

}  // namespace mfl
