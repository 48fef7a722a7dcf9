#pragma once

// The generator L = -(1/nu) div(nu grad .), its eigendata, the H^{-1}_nu metric,
// and spectral diagnostics of interaction operators.
//
// L is assembled on the staggered stencil with logarithmic-mean face weights,
// which makes it the exact linearisation of the Scharfetter-Gummel dynamics
// at the discrete Gibbs state and gives it exactly the constants as kernel.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <stdexcept>
#include <string>

#include "mfl/grid.hpp"
#include "mfl/kernel.hpp"
#include "mfl/measures.hpp"

namespace mfl {

inline constexpr std::size_t dense_budget = 4096;

namespace detail {
inline Eigen::VectorXd node_weights(const DensityField& nu) {
  Eigen::VectorXd w(static_cast<Eigen::Index>(nu.size()));
  for (std::size_t i = 0; i < nu.size(); ++i) w(i) = nu[i] * nu.grid().cell_volume();
  return w;
}

inline Eigen::VectorXd as_vector(const ScalarField& f) {
  return Eigen::Map<const Eigen::VectorXd>(f.values.data(), static_cast<Eigen::Index>(f.size()));
}

inline ScalarField as_field(const PeriodicGrid& g, const Eigen::VectorXd& v) {
  return ScalarField(g, std::vector<double>(v.data(), v.data() + v.size()));
}

inline void require_budget(std::size_t size, const char* what) {
  if (size > dense_budget)
    throw std::invalid_argument(std::string(what) + ": n^dim = " + std::to_string(size) + " exceeds dense budget 4096");
}
}  // namespace detail

class Generator {
 public:
  explicit Generator(const DensityField& nu) : density_(nu), faces_(face_density(nu.field())) {}

  const DensityField& density() const { return density_; }
  const VectorField& face_weights() const { return faces_; }
  const PeriodicGrid& grid() const { return density_.grid(); }

  ScalarField apply(const ScalarField& f) const {
    detail::require_same_grid(grid(), f.grid, "Generator::apply");
    auto out = face_divergence(density_.field(), faces_, face_gradient(f));
    for (double& v : out.values) v = -v;
    return out;
  }

  // <grad f, grad f> on the weighted face space, equal to <f, L f>_nu.
  double dirichlet_form(const ScalarField& f) const {
    auto df = face_gradient(f);
    double s = 0.0;
    for (std::size_t k = 0; k < df.values.size(); ++k) s += faces_.values[k] * df.values[k] * df.values[k];
    return s * grid().cell_volume();
  }

  // A with <f, L g>_nu = f^T A g.
  Eigen::MatrixXd stiffness() const {
    const auto& g = grid();
    const auto n = static_cast<Eigen::Index>(g.size());
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
    const double scale = g.cell_volume() / (g.spacing() * g.spacing());
    for (int ax = 0; ax < g.dim(); ++ax)
      for (std::size_t i = 0; i < g.size(); ++i) {
        auto j = g.neighbor(i, ax, 1);
        double w = faces_.at(ax, i) * scale;
        a(i, i) += w;
        a(j, j) += w;
        a(i, j) -= w;
        a(j, i) -= w;
      }
    return a;
  }

  Eigen::MatrixXd matrix() const { return detail::node_weights(density_).cwiseInverse().asDiagonal() * stiffness(); }

  // W^{1/2} L W^{-1/2} = W^{-1/2} A W^{-1/2}, W = diag(nu h^d).
  Eigen::MatrixXd symmetrized() const {
    Eigen::VectorXd s = detail::node_weights(density_).cwiseSqrt().cwiseInverse();
    return s.asDiagonal() * stiffness() * s.asDiagonal();
  }

 private:
  DensityField density_;
  VectorField faces_;
};

inline Generator assemble_generator(const DensityField& nu) { return Generator(nu); }

struct SpectralData {
  DensityField reference;
  Eigen::VectorXd eigenvalues;     // ascending
  Eigen::MatrixXd eigenfunctions;  // column k is g_k, orthonormal in L^2_nu

  double poincare() const { return eigenvalues(1); }
  Eigen::Index size() const { return eigenvalues.size(); }
  const PeriodicGrid& grid() const { return reference.grid(); }
  Eigen::VectorXd weights() const { return detail::node_weights(reference); }

  ScalarField eigenfunction(Eigen::Index k) const { return detail::as_field(grid(), eigenfunctions.col(k)); }

  // <f, g_k>_nu for every k.
  Eigen::VectorXd coefficients(const ScalarField& f) const {
    detail::require_same_grid(grid(), f.grid, "SpectralData::coefficients");
    return eigenfunctions.transpose() * weights().cwiseProduct(detail::as_vector(f));
  }
};

inline SpectralData spectrum(const DensityField& nu) {
  detail::require_budget(nu.size(), "spectrum");
  Generator gen(nu);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gen.symmetrized());
  if (solver.info() != Eigen::Success) throw std::runtime_error("spectrum: eigensolve failed");
  SpectralData s;
  s.reference = nu;
  s.eigenvalues = solver.eigenvalues();
  s.eigenfunctions = detail::node_weights(nu).cwiseSqrt().cwiseInverse().asDiagonal() * solver.eigenvectors();
  // Fix g_0 = +1 and a deterministic sign for the rest.
  for (Eigen::Index k = 0; k < s.size(); ++k) {
    Eigen::Index arg;
    s.eigenfunctions.col(k).cwiseAbs().maxCoeff(&arg);
    if (k == 0 ? s.eigenfunctions.col(k).sum() < 0.0 : s.eigenfunctions(arg, k) < 0.0) s.eigenfunctions.col(k) *= -1.0;
  }
  return s;
}

inline double poincare_constant(const SpectralData& s) { return s.poincare(); }

inline ScalarField project_mean_zero(const ScalarField& f, const DensityField& nu) {
  double mean = integrate(f, nu.field());
  ScalarField out = f;
  for (double& v : out.values) v -= mean;
  return out;
}

inline double dirichlet_form(const ScalarField& f, const DensityField& nu) { return Generator(nu).dirichlet_form(f); }

// sum_{k >= 1} <f, g_k>^2_nu / lambda_k, after projecting f to mean zero.
inline double h_minus1_norm_sq(const ScalarField& f, const SpectralData& s) {
  Eigen::VectorXd c = s.coefficients(f);
  double total = 0.0;
  for (Eigen::Index k = 1; k < s.size(); ++k) total += c(k) * c(k) / s.eigenvalues(k);
  return total;
}

// Mean-zero solution u of L u = f - mean_nu f.
inline ScalarField inverse_generator(const ScalarField& f, const SpectralData& s) {
  Eigen::VectorXd c = s.coefficients(f);
  c(0) = 0.0;
  for (Eigen::Index k = 1; k < s.size(); ++k) c(k) /= s.eigenvalues(k);
  return detail::as_field(s.grid(), s.eigenfunctions * c);
}

// (K f)(x_i) = sum_j k(x_i, y_j) f_j nu_j h^d.
inline ScalarField apply_K(const Kernel& k, const ScalarField& f, const DensityField& nu) {
  detail::require_same_grid(k.y_grid(), f.grid, "apply_K");
  detail::require_same_grid(k.y_grid(), nu.grid(), "apply_K");
  Eigen::VectorXd out = k.matrix() * detail::node_weights(nu).cwiseProduct(detail::as_vector(f));
  return detail::as_field(k.x_grid(), out);
}

// Matrix of <g_a, K g_b>_nu over the nonconstant eigenfunctions a, b >= 1.
inline Eigen::MatrixXd kernel_form(const Kernel& k, const SpectralData& s) {
  detail::require_same_grid(k.x_grid(), s.grid(), "kernel_form");
  detail::require_same_grid(k.y_grid(), s.grid(), "kernel_form");
  const Eigen::Index m = s.size() - 1;
  Eigen::MatrixXd wg = s.weights().asDiagonal() * s.eigenfunctions.rightCols(m);
  return wg.transpose() * k.matrix() * wg;
}

// Least eigenvalue of the symmetric part of K on the mean-zero subspace of L^2_nu.
inline double kernel_form_min_eigenvalue(const Kernel& k, const SpectralData& s) {
  Eigen::MatrixXd b = kernel_form(k, s);
  Eigen::MatrixXd sym = 0.5 * (b + b.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym, Eigen::EigenvaluesOnly);
  return solver.eigenvalues()(0);
}

inline double tau0_estimate(const Kernel& k, const SpectralData& s) {
  if (!k.symmetric()) throw std::invalid_argument("tau0_estimate: kernel is not symmetric");
  return std::max(0.0, -kernel_form_min_eigenvalue(k, s));
}

struct M11Estimate {
  double analytic = 0.0;  // mode-wise triangle bound
  double sampled = 0.0;   // max over node pairs of the FD cross-Hessian
  double value() const { return std::max(analytic, sampled); }
};

inline M11Estimate m11_estimate(const Kernel& k) {
  M11Estimate est;
  est.analytic = k.cross_hessian_bound();
  if (k.is_zero()) return est;
  const auto& gx = k.x_grid();
  const auto& gy = k.y_grid();
  const auto& km = k.matrix();
  const double scale = 1.0 / (4.0 * gx.spacing() * gy.spacing());
  Eigen::Matrix2d h = Eigen::Matrix2d::Zero();
  for (std::size_t i = 0; i < gx.size(); ++i)
    for (std::size_t j = 0; j < gy.size(); ++j) {
      for (int a = 0; a < gx.dim(); ++a)
        for (int b = 0; b < gy.dim(); ++b) {
          auto ip = gx.neighbor(i, a, 1), im = gx.neighbor(i, a, -1);
          auto jp = gy.neighbor(j, b, 1), jm = gy.neighbor(j, b, -1);
          h(a, b) = (km(ip, jp) - km(ip, jm) - km(im, jp) + km(im, jm)) * scale;
        }
      double norm = (gx.dim() == 1 && gy.dim() == 1) ? std::abs(h(0, 0))
                                                       : Eigen::JacobiSVD<Eigen::Matrix2d>(h).singularValues()(0);
      est.sampled = std::max(est.sampled, norm);
    }
  return est;
}

inline double m11(const Kernel& k) { return m11_estimate(k).value(); }

struct SpectralAbscissa {
  double abscissa = 0.0;      // min Re spectrum of tau L + L K on mean-zero functions
  double hessian_min = 0.0;   // min eigenvalue of the symmetric form tau grad grad^* + grad K grad^*
};

inline SpectralAbscissa spectral_abscissa(double tau, const SpectralData& s, const Kernel& k) {
  detail::require_budget(static_cast<std::size_t>(s.size()), "spectral_abscissa");
  const Eigen::Index m = s.size() - 1;
  Eigen::VectorXd lambda = s.eigenvalues.tail(m);
  Eigen::MatrixXd b = kernel_form(k, s);
  Eigen::MatrixXd op = lambda.asDiagonal() * (tau * Eigen::MatrixXd::Identity(m, m) + b);
  Eigen::EigenSolver<Eigen::MatrixXd> es(op, false);
  if (es.info() != Eigen::Success) throw std::runtime_error("spectral_abscissa: eigensolve failed");
  SpectralAbscissa out;
  out.abscissa = es.eigenvalues().real().minCoeff();

  Eigen::VectorXd root = lambda.cwiseSqrt();
  Eigen::MatrixXd sym = tau * Eigen::MatrixXd::Identity(m, m) + 0.5 * (b + b.transpose());
  Eigen::MatrixXd form = root.asDiagonal() * sym * root.asDiagonal();
  out.hessian_min = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(form, Eigen::EigenvaluesOnly).eigenvalues()(0);
  return out;
}

struct BoundCheck {
  double lhs = 0.0;
  double rhs = 0.0;
  bool holds(double slack) const { return lhs <= rhs * (1.0 + slack) + 1e-14; }
};

// sup |grad K f| against M11 ||f||_{H^-1_nu}.
inline BoundCheck gradK_bound_check(const Kernel& k, const SpectralData& s, const ScalarField& f) {
  auto kf = apply_K(k, project_mean_zero(f, s.reference), s.reference);
  auto grad = gradient(kf);
  const auto& g = kf.grid;
  BoundCheck out;
  for (std::size_t i = 0; i < g.size(); ++i) {
    double sq = 0.0;
    for (int a = 0; a < g.dim(); ++a) sq += grad.at(a, i) * grad.at(a, i);
    out.lhs = std::max(out.lhs, std::sqrt(sq));
  }
  out.rhs = m11(k) * std::sqrt(std::max(0.0, h_minus1_norm_sq(f, s)));
  return out;
}

// Relative mismatch between int Gamma_2(Phi, Phi) dnu and int (grad^* Phi)^2 dnu
// for nu proportional to exp(-V), both sides by centred differences.
inline double hessian_identity_residual(const VectorField& phi, const DensityField& nu, const ScalarField& potential) {
  const auto& g = nu.grid();
  detail::require_same_grid(g, phi.grid, "hessian_identity_residual");
  detail::require_same_grid(g, potential.grid, "hessian_identity_residual");

  ScalarField log_nu(g);
  for (std::size_t i = 0; i < g.size(); ++i) log_nu[i] = std::log(nu[i]);
  auto grad_log = gradient(log_nu);
  auto grad_v = gradient(potential);
  double mismatch = 0.0, size = 1.0;
  for (std::size_t k = 0; k < grad_v.values.size(); ++k) {
    mismatch = std::max(mismatch, std::abs(grad_log.values[k] + grad_v.values[k]));
    size = std::max(size, std::abs(grad_v.values[k]));
  }
  if (mismatch > 1e-6 * size) throw std::invalid_argument("hessian_identity_residual: nu is not proportional to exp(-V)");

  const int d = g.dim();
  std::vector<VectorField> jac;  // jac[b].at(a, i) = d_a Phi_b
  std::vector<VectorField> hess;  // hess[a].at(b, i) = d_b d_a V
  for (int b = 0; b < d; ++b) {
    ScalarField comp(g, std::vector<double>(phi.component(b).begin(), phi.component(b).end()));
    jac.push_back(gradient(comp));
    ScalarField dv(g, std::vector<double>(grad_v.component(b).begin(), grad_v.component(b).end()));
    hess.push_back(gradient(dv));
  }
  ScalarField gamma2(g);
  for (std::size_t i = 0; i < g.size(); ++i) {
    double s = 0.0;
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b) {
        s += jac[b].at(a, i) * jac[a].at(b, i);
        double hab = 0.5 * (hess[a].at(b, i) + hess[b].at(a, i));
        s += phi.at(a, i) * hab * phi.at(b, i);
      }
    gamma2[i] = s;
  }
  double lhs = integrate(gamma2, nu.field());
  auto div = weighted_divergence(nu.field(), phi);
  double rhs = inner(div, div, nu.field());
  return std::abs(lhs - rhs) / std::max({std::abs(lhs), std::abs(rhs), 1e-14});
}

// Spectrum of grad grad^* on the weighted face space (staggered pair). Its
// nonzero part coincides with the nonzero spectrum of L.
inline Eigen::VectorXd gradient_space_spectrum(const DensityField& nu) {
  const auto& g = nu.grid();
  detail::require_budget(g.size() * g.dim(), "gradient_space_spectrum");
  Generator gen(nu);
  const auto n = static_cast<Eigen::Index>(g.size());
  const Eigen::Index faces = n * g.dim();
  Eigen::MatrixXd diff = Eigen::MatrixXd::Zero(faces, n);
  for (int a = 0; a < g.dim(); ++a)
    for (std::size_t i = 0; i < g.size(); ++i) {
      diff(a * n + i, g.neighbor(i, a, 1)) += 1.0 / g.spacing();
      diff(a * n + i, i) -= 1.0 / g.spacing();
    }
  Eigen::VectorXd face_w(faces);
  for (Eigen::Index k = 0; k < faces; ++k) face_w(k) = gen.face_weights().values[k] * g.cell_volume();
  Eigen::MatrixXd half = face_w.cwiseSqrt().asDiagonal() * diff;
  Eigen::MatrixXd op = half * detail::node_weights(nu).cwiseInverse().asDiagonal() * half.transpose();
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(op, Eigen::EigenvaluesOnly).eigenvalues();
}

// Smallest eigenvalue of grad grad^* above the numerical zero.
inline double gradient_space_gap(const DensityField& nu, double zero_tolerance = 1e-9) {
  Eigen::VectorXd ev = gradient_space_spectrum(nu);
  const double cutoff = zero_tolerance * ev.cwiseAbs().maxCoeff();
  for (Eigen::Index k = 0; k < ev.size(); ++k)
    if (ev(k) > cutoff) return ev(k);
  return 0.0;
}

}  // namespace mfl
