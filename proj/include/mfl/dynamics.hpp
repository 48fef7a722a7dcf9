#pragma once

// Explicit Scharfetter-Gummel finite-volume integration of the three
// Fokker-Planck systems, with diagnostic trajectories.
//
// Sign convention: particles move with velocity -grad U, so on the face
// i+1/2 with s = (U_{i+1} - U_i) / tau the flux (positive towards i+1) is
//   J = (tau / h) [B(s) mu_i - B(-s) mu_{i+1}],   B(s) = s / (e^s - 1),
// which vanishes exactly on the discrete Gibbs state mu ~ exp(-U / tau).

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mfl/equilibrium.hpp"
#include "mfl/grid.hpp"
#include "mfl/measures.hpp"
#include "mfl/spectral.hpp"

namespace mfl {

inline double bernoulli(double s) {
  if (std::abs(s) < 1e-4) return 1.0 - s / 2.0 + s * s / 12.0;
  return s / std::expm1(s);
}

// grad F'[mu] = grad V + grad K~mu at nodes (centred differences).
inline VectorField drift_field(const SystemSpec& spec, const std::vector<DensityField>& mu, std::size_t species) {
  return gradient(spec.potential(species, mu));
}

inline VectorField drift_field_mfld(const DensityField& mu, const SystemSpec& spec) {
  if (spec.variant() != Variant::mfld) throw std::invalid_argument("drift_field_mfld: spec is not MFLD");
  return drift_field(spec, {mu}, 0);
}

// Face drift (U_{i+e_a} - U_i) / h, the input of `step`.
inline VectorField face_drift(const ScalarField& potential) { return face_gradient(potential); }

// One explicit Euler step. Rejects steps that break the CFL bound
// dt <= min(h^2 / (2 dim tau), h / max|drift|) or the sharper positivity bound
// on the diagonal of the update.
inline DensityField step(const DensityField& mu, const VectorField& drift, double tau, double dt) {
  const auto& g = mu.grid();
  detail::require_same_grid(g, drift.grid, "step");
  if (drift.staggering != Staggering::faces) throw std::invalid_argument("step: drift must live on faces");
  if (!(tau > 0.0) || !(dt > 0.0)) throw std::invalid_argument("step: tau and dt must be > 0");
  const double h = g.spacing();
  double max_drift = 0.0;
  for (double v : drift.values) max_drift = std::max(max_drift, std::abs(v));
  double cfl = h * h / (2.0 * g.dim() * tau);
  if (max_drift > 0.0) cfl = std::min(cfl, h / max_drift);
  if (dt > cfl * (1.0 + 1e-12)) throw std::invalid_argument("step: CFL violated");

  const double c = tau / h;
  std::vector<double> flux(drift.values.size());
  std::vector<double> outflow(g.size(), 0.0);
  for (int a = 0; a < g.dim(); ++a)
    for (std::size_t i = 0; i < g.size(); ++i) {
      const std::size_t k = a * g.size() + i;
      const std::size_t j = g.neighbor(i, a, 1);
      double s = drift.values[k] * h / tau;
      double bp = bernoulli(s), bm = bernoulli(-s);
      flux[k] = c * (bp * mu[i] - bm * mu[j]);
      outflow[i] += c * bp;
      outflow[j] += c * bm;
    }
  ScalarField next(g);
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (dt * outflow[i] / h > 1.0) throw std::invalid_argument("step: positivity bound violated");
    double div = 0.0;
    for (int a = 0; a < g.dim(); ++a) {
      const std::size_t k = a * g.size() + i;
      div += flux[k] - flux[a * g.size() + g.neighbor(i, a, -1)];
    }
    next[i] = std::max(mu[i] - dt * div / h, DensityField::positivity_floor);
  }
  return DensityField::from_values(std::move(next));
}

struct StepperConfig {
  std::optional<double> dt;  // fixed step; automatic CFL when empty
  double safety = 0.5;       // sigma_cfl
  double horizon = 10.0;     // T
  int diagnostic_stride = 32;
  double snapshot_interval = 0.0;  // 0 selects horizon / 16
  double lyapunov_gamma = 0.0;     // gamma in W_t = z_t + gamma a_t

  void validate() const {
    if (dt && !(*dt > 0.0)) throw std::invalid_argument("StepperConfig: dt must be > 0");
    if (!(safety > 0.0 && safety <= 1.0)) throw std::invalid_argument("StepperConfig: safety must be in (0, 1]");
    if (!(horizon > 0.0) || !std::isfinite(horizon)) throw std::invalid_argument("StepperConfig: horizon must be > 0");
    if (diagnostic_stride < 1) throw std::invalid_argument("StepperConfig: diagnostic_stride must be >= 1");
    if (snapshot_interval < 0.0) throw std::invalid_argument("StepperConfig: snapshot_interval must be >= 0");
    if (!(lyapunov_gamma >= 0.0)) throw std::invalid_argument("StepperConfig: lyapunov_gamma must be >= 0");
  }
};

struct Snapshot {
  double time = 0.0;
  std::vector<DensityField> densities;
};

struct Trajectory {
  Variant variant = Variant::mfld;
  double dt = 0.0;
  long steps = 0;
  std::vector<double> times;
  // Per species, one entry per recorded time.
  std::vector<std::vector<double>> chi2, kl, hm1_sq;
  std::vector<double> chi2_total, kl_total, hm1sq_total, lyapunov, energy_gap, w2sq;
  std::vector<double> mass_error;    // max over species of |mass - 1|
  std::vector<double> min_density;   // min over species and nodes
  std::vector<double> cancellation;  // MFL-DA bilinear-form witness residual
  std::vector<Snapshot> snapshots;
  bool completed = true;
  std::string failure;

  std::size_t size() const { return times.size(); }
};

// Largest automatic step: sigma / (2 dim Gamma_I (tau / h^2 + D_I / h)) over
// species, with D_I an a-priori bound on |grad U_I| from the Fourier modes.
inline double auto_time_step(const SystemSpec& spec, double safety) {
  double dt = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < spec.species(); ++i) {
    const auto& g = spec.grid(i);
    double bound = spec.external(i).gradient_bound(g);
    switch (spec.variant()) {
      case Variant::mfld: bound += spec.kernel().gradient_x_bound(); break;
      case Variant::mflda:
        bound += i == 0 ? spec.kernel().gradient_x_bound() : spec.kernel().transposed().gradient_x_bound();
        break;
      case Variant::nspecies:
        for (const auto& k : spec.table()[i])
          if (k) bound += k->gradient_x_bound();
        break;
    }
    const double h = g.spacing();
    double local = safety / (2.0 * g.dim() * spec.rate_scale(i) * (spec.tau() / (h * h) + bound / h));
    dt = std::min(dt, local);
  }
  return dt;
}

// F_tau(mu) - F_tau(nu) for MFLD, in a difference form that stays accurate
// when mu is close to nu:
//   int (V + K~nu + tau log nu) d(mu - nu) + 1/2 <mu - nu, K~(mu - nu)> + tau KL(mu|nu).
inline double evaluate_energy(const DensityField& mu, const SystemSpec& spec, const DensityField& nu) {
  if (spec.variant() != Variant::mfld) throw std::invalid_argument("evaluate_energy: spec is not MFLD");
  detail::require_same_grid(mu.grid(), nu.grid(), "evaluate_energy");
  const auto& g = mu.grid();
  const double tau = spec.tau();
  auto u_nu = spec.potential(0, {nu});
  Eigen::VectorXd delta(static_cast<Eigen::Index>(g.size()));
  double linear = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    delta(i) = mu[i] - nu[i];
    linear += (u_nu[i] + tau * std::log(nu[i])) * delta(i);
  }
  const double w = g.cell_volume();
  double quadratic = 0.5 * delta.dot(spec.kernel().matrix() * delta) * w * w;
  return linear * w + quadratic + tau * kl(mu, nu);
}

namespace detail {

inline ScalarField relative_density(const DensityField& mu, const DensityField& nu) {
  ScalarField f(mu.grid());
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = mu[i] / nu[i] - 1.0;
  return f;
}

// |<f, K g>_{nu^x} - <g, K^T f>_{nu^y}| with f, g the relative densities of x, y.
inline double cancellation_residual(const Kernel& k, const std::vector<DensityField>& mu,
                                    const std::vector<DensityField>& nu) {
  Eigen::VectorXd f = as_vector(relative_density(mu[0], nu[0]));
  Eigen::VectorXd g = as_vector(relative_density(mu[1], nu[1]));
  Eigen::VectorXd wx = node_weights(nu[0]), wy = node_weights(nu[1]);
  double from_x = f.cwiseProduct(wx).dot(k.matrix() * g.cwiseProduct(wy));
  double from_y = g.cwiseProduct(wy).dot(k.matrix().transpose() * f.cwiseProduct(wx));
  return std::abs(from_x - from_y);
}

}  // namespace detail

// Generic driver for every variant. `spectra` (one per species, built from the
// equilibrium densities) may be supplied to avoid recomputing eigendata.
inline Trajectory simulate(const SystemSpec& spec, std::vector<DensityField> mu, const EquilibriumResult& equilibrium,
                           const StepperConfig& cfg, const std::vector<SpectralData>* spectra = nullptr) {
  cfg.validate();
  const std::size_t n = spec.species();
  if (mu.size() != n || equilibrium.densities.size() != n)
    throw std::invalid_argument("simulate: need one initial and one equilibrium density per species");
  for (std::size_t i = 0; i < n; ++i) {
    detail::require_same_grid(mu[i].grid(), spec.grid(i), "simulate");
    detail::require_same_grid(equilibrium.densities[i].grid(), spec.grid(i), "simulate");
  }
  std::vector<SpectralData> own;
  if (!spectra) {
    for (const auto& nu : equilibrium.densities) own.push_back(spectrum(nu));
    spectra = &own;
  }
  const auto& nu = equilibrium.densities;
  const double tau = spec.tau();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  bool all_1d = true;
  for (std::size_t i = 0; i < n; ++i) all_1d = all_1d && spec.grid(i).dim() == 1;

  Trajectory tr;
  tr.variant = spec.variant();
  tr.chi2.resize(n);
  tr.kl.resize(n);
  tr.hm1_sq.resize(n);
  double auto_dt = auto_time_step(spec, cfg.safety);
  if (cfg.dt) {
    tr.dt = *cfg.dt;
    tr.steps = static_cast<long>(std::ceil(cfg.horizon / tr.dt - 1e-9));
  } else {
    tr.steps = static_cast<long>(std::ceil(cfg.horizon / auto_dt));
    tr.dt = cfg.horizon / static_cast<double>(tr.steps);
  }
  const double snapshot_every = cfg.snapshot_interval > 0.0 ? cfg.snapshot_interval : cfg.horizon / 16.0;
  double next_snapshot = 0.0;

  auto record = [&](double t) {
    double chi_sum = 0.0, kl_sum = 0.0, hm1_sum = 0.0, mass_err = 0.0, lowest = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      double c = chi_squared(mu[i], nu[i]);
      double k = kl(mu[i], nu[i]);
      double z = h_minus1_norm_sq(detail::relative_density(mu[i], nu[i]), (*spectra)[i]);
      tr.chi2[i].push_back(c);
      tr.kl[i].push_back(k);
      tr.hm1_sq[i].push_back(z);
      chi_sum += c;
      kl_sum += k;
      hm1_sum += z;
      mass_err = std::max(mass_err, std::abs(mu[i].mass() - 1.0));
      lowest = std::min(lowest, mu[i].min());
    }
    tr.times.push_back(t);
    tr.chi2_total.push_back(chi_sum);
    tr.kl_total.push_back(kl_sum);
    tr.hm1sq_total.push_back(hm1_sum);
    tr.lyapunov.push_back(hm1_sum + cfg.lyapunov_gamma * chi_sum);
    tr.energy_gap.push_back(spec.variant() == Variant::mfld ? evaluate_energy(mu[0], spec, nu[0]) : nan);
    if (all_1d) {
      double w = 0.0;
      for (std::size_t i = 0; i < n; ++i) w += std::pow(w2_circle(mu[i], nu[i]), 2);
      tr.w2sq.push_back(w);
    } else {
      tr.w2sq.push_back(nan);
    }
    tr.mass_error.push_back(mass_err);
    tr.min_density.push_back(lowest);
    tr.cancellation.push_back(spec.variant() == Variant::mflda ? detail::cancellation_residual(spec.kernel(), mu, nu)
                                                               : nan);
    if (t >= next_snapshot - 1e-12 * cfg.horizon) {
      tr.snapshots.push_back({t, mu});
      while (next_snapshot <= t + 1e-12 * cfg.horizon) next_snapshot += snapshot_every;
    }
    bool finite = std::isfinite(chi_sum) && std::isfinite(kl_sum) && std::isfinite(hm1_sum) &&
                  (spec.variant() != Variant::mfld || std::isfinite(tr.energy_gap.back()));
    if (!finite) {
      tr.completed = false;
      tr.failure = "non-finite diagnostic at t = " + std::to_string(t);
    }
    return finite;
  };

  if (!record(0.0)) return tr;
  for (long s = 1; s <= tr.steps; ++s) {
    auto potentials = spec.potentials(mu);
    try {
      for (std::size_t i = 0; i < n; ++i)
        mu[i] = step(mu[i], face_drift(potentials[i]), tau, spec.rate_scale(i) * tr.dt);
    } catch (const std::invalid_argument& e) {
      if (s == 1) throw;  // a fixed dt that violates the CFL bound
      tr.completed = false;
      tr.failure = std::string(e.what()) + " at step " + std::to_string(s);
      return tr;
    }
    if (s % cfg.diagnostic_stride == 0 || s == tr.steps)
      if (!record(static_cast<double>(s) * tr.dt)) return tr;
  }
  return tr;
}

inline Trajectory simulate_mfld(const SystemSpec& spec, const DensityField& mu0, const EquilibriumResult& equilibrium,
                                const StepperConfig& cfg, const std::vector<SpectralData>* spectra = nullptr) {
  if (spec.variant() != Variant::mfld) throw std::invalid_argument("simulate_mfld: spec is not MFLD");
  return simulate(spec, {mu0}, equilibrium, cfg, spectra);
}

inline Trajectory simulate_mflda(const SystemSpec& spec, const DensityField& mu0x, const DensityField& mu0y,
                                 const EquilibriumResult& equilibrium, const StepperConfig& cfg,
                                 const std::vector<SpectralData>* spectra = nullptr) {
  if (spec.variant() != Variant::mflda) throw std::invalid_argument("simulate_mflda: spec is not MFLDA");
  return simulate(spec, {mu0x, mu0y}, equilibrium, cfg, spectra);
}

inline Trajectory simulate_nspecies(const SystemSpec& spec, std::vector<DensityField> inits,
                                    const EquilibriumResult& equilibrium, const StepperConfig& cfg,
                                    const std::vector<SpectralData>* spectra = nullptr) {
  if (spec.variant() != Variant::nspecies) throw std::invalid_argument("simulate_nspecies: spec is not NSPECIES");
  return simulate(spec, std::move(inits), equilibrium, cfg, spectra);
}

}  // namespace mfl
