#pragma once

// System descriptions for the three flows and their stationary states, computed
// by damped proximal-Gibbs fixed-point iteration.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mfl/fourier.hpp"
#include "mfl/grid.hpp"
#include "mfl/kernel.hpp"
#include "mfl/measures.hpp"

namespace mfl {

enum class Variant { mfld, mflda, nspecies };

inline const char* to_string(Variant v) {
  switch (v) {
    case Variant::mfld: return "MFLD";
    case Variant::mflda: return "MFLDA";
    case Variant::nspecies: return "NSPECIES";
  }
  return "?";
}

using KernelTable = std::vector<std::vector<std::optional<Kernel>>>;

// Species are indexed 0..N-1. MFLD has one species; MFL-DA has x (0) and y (1).
// Potentials are linear in the measures:
//   MFLD      U     = V + K~mu
//   MFLDA     U_x   = V_x + K~mu^y,   U_y = V_y - K~^T mu^x
//   NSPECIES  U_I   = V_I + sum_J K~_IJ mu^J
class SystemSpec {
 public:
  static SystemSpec mfld(const PeriodicGrid& g, FourierSeries potential, Kernel k, double tau) {
    if (!(k.x_grid() == g) || !(k.y_grid() == g)) throw std::invalid_argument("mfld: kernel grid mismatch");
    if (!k.symmetric()) throw std::invalid_argument("mfld: kernel must be symmetric");
    SystemSpec s(Variant::mfld, tau, 1.0);
    s.grids_ = {g};
    s.external_ = {std::move(potential)};
    s.kernel_ = std::move(k);
    s.finish();
    return s;
  }

  static SystemSpec mflda(Kernel payoff, double tau, double timescale = 1.0, FourierSeries vx = {},
                          FourierSeries vy = {}) {
    if (!(timescale > 0.0) || !std::isfinite(timescale)) throw std::invalid_argument("mflda: timescale must be > 0");
    SystemSpec s(Variant::mflda, tau, timescale);
    s.grids_ = {payoff.x_grid(), payoff.y_grid()};
    s.external_ = {std::move(vx), std::move(vy)};
    s.kernel_ = std::move(payoff);
    s.finish();
    return s;
  }

  // Empty table entries are zero kernels.
  static SystemSpec nspecies(std::vector<PeriodicGrid> grids, std::vector<FourierSeries> potentials,
                             KernelTable table, double tau) {
    const std::size_t n = grids.size();
    if (n == 0) throw std::invalid_argument("nspecies: need at least one species");
    if (potentials.empty()) potentials.resize(n);
    if (potentials.size() != n) throw std::invalid_argument("nspecies: one external potential per species");
    if (table.size() != n) throw std::invalid_argument("nspecies: kernel table must be N x N");
    for (std::size_t i = 0; i < n; ++i) {
      if (table[i].size() != n) throw std::invalid_argument("nspecies: kernel table must be N x N");
      for (std::size_t j = 0; j < n; ++j)
        if (table[i][j] && (!(table[i][j]->x_grid() == grids[i]) || !(table[i][j]->y_grid() == grids[j])))
          throw std::invalid_argument("nspecies: kernel (" + std::to_string(i + 1) + "," + std::to_string(j + 1) +
                                      ") grid mismatch");
    }
    SystemSpec s(Variant::nspecies, tau, 1.0);
    s.grids_ = std::move(grids);
    s.external_ = std::move(potentials);
    s.table_ = std::move(table);
    s.finish();
    return s;
  }

  Variant variant() const { return variant_; }
  double tau() const { return tau_; }
  double timescale() const { return timescale_; }
  std::size_t species() const { return grids_.size(); }
  const PeriodicGrid& grid(std::size_t i) const { return grids_.at(i); }
  const FourierSeries& external(std::size_t i) const { return external_.at(i); }
  const ScalarField& external_field(std::size_t i) const { return external_fields_.at(i); }
  // MFLD interaction kernel or MFL-DA payoff.
  const Kernel& kernel() const { return kernel_; }
  const KernelTable& table() const { return table_; }

  // Step scale per species (Gamma on the ascent species of MFL-DA).
  double rate_scale(std::size_t i) const { return variant_ == Variant::mflda && i == 1 ? timescale_ : 1.0; }

  ScalarField potential(std::size_t i, const std::vector<DensityField>& mu) const {
    ScalarField u = external_fields_.at(i);
    auto add = [&u](const ScalarField& w, double sign) {
      for (std::size_t k = 0; k < u.size(); ++k) u[k] += sign * w[k];
    };
    switch (variant_) {
      case Variant::mfld:
        add(interaction_potential(kernel_, mu.at(0)), 1.0);
        break;
      case Variant::mflda:
        if (i == 0) add(interaction_potential(kernel_, mu.at(1)), 1.0);
        else add(interaction_potential_transposed(kernel_, mu.at(0)), -1.0);
        break;
      case Variant::nspecies:
        for (std::size_t j = 0; j < species(); ++j)
          if (table_[i][j]) add(interaction_potential(*table_[i][j], mu.at(j)), 1.0);
        break;
    }
    return u;
  }

  std::vector<ScalarField> potentials(const std::vector<DensityField>& mu) const {
    if (mu.size() != species()) throw std::invalid_argument("potentials: wrong number of densities");
    std::vector<ScalarField> out;
    for (std::size_t i = 0; i < species(); ++i) out.push_back(potential(i, mu));
    return out;
  }

 private:
  SystemSpec(Variant v, double tau, double timescale) : variant_(v), tau_(tau), timescale_(timescale) {
    if (!(tau > 0.0) || !std::isfinite(tau)) throw std::invalid_argument("SystemSpec: tau must be > 0");
  }

  void finish() {
    for (std::size_t i = 0; i < grids_.size(); ++i) {
      for (const auto& m : external_[i].modes)
        if (grids_[i].dim() == 1 && m.wavevector[1] != 0)
          throw std::invalid_argument("SystemSpec: potential wavevector exceeds grid dimension");
      external_fields_.push_back(external_[i].sample(grids_[i]));
    }
  }

  Variant variant_;
  double tau_;
  double timescale_;
  std::vector<PeriodicGrid> grids_;
  std::vector<FourierSeries> external_;
  std::vector<ScalarField> external_fields_;
  Kernel kernel_;
  KernelTable table_;
};

struct EquilibriumOptions {
  double damping = 0.5;
  double min_damping = 0.1;
  double tol = 1e-10;
  int max_iter = 10000;
  // Starting densities; defaults to the Gibbs states of the external potentials.
  std::optional<std::vector<DensityField>> initial;
};

struct EquilibriumResult {
  std::vector<DensityField> densities;
  double residual = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;

  const DensityField& density(std::size_t i = 0) const { return densities.at(i); }
};

// normalize(exp(-potential / tau)), shifted by the minimum for overflow safety.
inline DensityField proximal_gibbs(const ScalarField& potential, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("proximal_gibbs: tau must be > 0");
  double lo = *std::min_element(potential.values.begin(), potential.values.end());
  ScalarField raw(potential.grid);
  for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = std::exp(-(potential[i] - lo) / tau);
  return normalize(std::move(raw));
}

inline double oscillation(const ScalarField& f) {
  auto [lo, hi] = std::minmax_element(f.values.begin(), f.values.end());
  return *hi - *lo;
}

// osc(U + tau log mu) for one species.
inline double stationarity_defect(const ScalarField& potential, const DensityField& mu, double tau) {
  ScalarField s = potential;
  for (std::size_t i = 0; i < s.size(); ++i) s[i] += tau * std::log(mu[i]);
  return oscillation(s);
}

inline double stationarity_residual(const SystemSpec& spec, const std::vector<DensityField>& mu) {
  double r = 0.0;
  for (std::size_t i = 0; i < spec.species(); ++i)
    r = std::max(r, stationarity_defect(spec.potential(i, mu), mu[i], spec.tau()));
  return r;
}

namespace detail {

inline DensityField blend(const DensityField& current, const DensityField& target, double alpha) {
  ScalarField raw(current.grid());
  for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = (1.0 - alpha) * current[i] + alpha * target[i];
  return normalize(std::move(raw));
}

enum class Sweep { jacobi, gauss_seidel };

inline EquilibriumResult solve_fixed_point(const SystemSpec& spec, const EquilibriumOptions& opt, Sweep sweep) {
  if (!(opt.damping > 0.0 && opt.damping <= 1.0)) throw std::invalid_argument("equilibrium: damping must be in (0, 1]");
  if (!(opt.tol > 0.0) || opt.max_iter < 0) throw std::invalid_argument("equilibrium: bad tol / max_iter");
  std::vector<DensityField> mu;
  if (opt.initial) {
    mu = *opt.initial;
    if (mu.size() != spec.species()) throw std::invalid_argument("equilibrium: wrong number of initial densities");
    for (std::size_t i = 0; i < mu.size(); ++i) require_same_grid(mu[i].grid(), spec.grid(i), "equilibrium");
  } else {
    for (std::size_t i = 0; i < spec.species(); ++i) mu.push_back(proximal_gibbs(spec.external_field(i), spec.tau()));
  }

  EquilibriumResult best;
  best.densities = mu;
  best.residual = stationarity_residual(spec, mu);
  double residual = best.residual;
  double alpha = opt.damping;
  for (int it = 1; it <= opt.max_iter && best.residual > opt.tol; ++it) {
    if (sweep == Sweep::jacobi) {
      auto u = spec.potentials(mu);
      for (std::size_t i = 0; i < mu.size(); ++i) mu[i] = blend(mu[i], proximal_gibbs(u[i], spec.tau()), alpha);
    } else {
      for (std::size_t i = 0; i < mu.size(); ++i)
        mu[i] = blend(mu[i], proximal_gibbs(spec.potential(i, mu), spec.tau()), alpha);
    }
    double next = stationarity_residual(spec, mu);
    if (!std::isfinite(next)) break;
    if (next > residual) alpha = std::max(opt.min_damping, 0.5 * alpha);
    residual = next;
    if (next < best.residual) {
      best.densities = mu;
      best.residual = next;
      best.iterations = it;
    }
  }
  best.converged = best.residual <= opt.tol;
  return best;
}

}  // namespace detail

inline EquilibriumResult mfld_stationary(const SystemSpec& spec, const EquilibriumOptions& opt = {}) {
  if (spec.variant() != Variant::mfld) throw std::invalid_argument("mfld_stationary: spec is not MFLD");
  return detail::solve_fixed_point(spec, opt, detail::Sweep::jacobi);
}

// Alternating (x then y) damped updates.
inline EquilibriumResult mflda_equilibrium(const SystemSpec& spec, const EquilibriumOptions& opt = {}) {
  if (spec.variant() != Variant::mflda) throw std::invalid_argument("mflda_equilibrium: spec is not MFLDA");
  return detail::solve_fixed_point(spec, opt, detail::Sweep::gauss_seidel);
}

inline EquilibriumResult nspecies_equilibrium(const SystemSpec& spec, const EquilibriumOptions& opt = {}) {
  if (spec.variant() != Variant::nspecies) throw std::invalid_argument("nspecies_equilibrium: spec is not NSPECIES");
  return detail::solve_fixed_point(spec, opt, detail::Sweep::jacobi);
}

inline EquilibriumResult solve_equilibrium(const SystemSpec& spec, const EquilibriumOptions& opt = {}) {
  switch (spec.variant()) {
    case Variant::mfld: return mfld_stationary(spec, opt);
    case Variant::mflda: return mflda_equilibrium(spec, opt);
    case Variant::nspecies: return nspecies_equilibrium(spec, opt);
  }
  throw std::logic_error("solve_equilibrium: unknown variant");
}

}  // namespace mfl
