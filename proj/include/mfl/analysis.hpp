#pragma once

// Rate fitting, convergence-theorem constants, Lyapunov assembly, linear
// monotonicity of N-species systems, and run reports.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "mfl/dynamics.hpp"
#include "mfl/equilibrium.hpp"
#include "mfl/kernel.hpp"
#include "mfl/measures.hpp"
#include "mfl/spectral.hpp"

namespace mfl {

inline constexpr int schema_version = 1;

struct RateReport {
  double rate = 0.0;  // 1/s
  double r_squared = 0.0;
  double t_begin = 0.0, t_end = 0.0;
  std::size_t samples = 0;
  double predicted = std::numeric_limits<double>::quiet_NaN();
  double ratio = std::numeric_limits<double>::quiet_NaN();
  std::string series = "chi2_total";

  RateReport& against(double prediction) {
    predicted = prediction;
    ratio = rate / prediction;
    return *this;
  }
};

// Least-squares slope of log(values) over the samples whose value lies in
// [floor, ceiling]; defaults ceiling = 0.1 v0, floor = max(1e-12, 1e-6 v0).
inline RateReport fit_rate(const std::vector<double>& times, const std::vector<double>& values,
                           std::optional<double> floor = {}, std::optional<double> ceiling = {}) {
  if (times.size() != values.size() || values.empty()) throw std::invalid_argument("fit_rate: series shape mismatch");
  const double v0 = values.front();
  const double hi = ceiling.value_or(0.1 * v0);
  const double lo = floor.value_or(std::max(1e-12, 1e-6 * v0));
  std::vector<double> ts, ys;
  for (std::size_t i = 0; i < values.size(); ++i)
    if (values[i] > 0.0 && values[i] >= lo && values[i] <= hi) {
      ts.push_back(times[i]);
      ys.push_back(std::log(values[i]));
    }
  if (ts.size() < 10)
    throw std::invalid_argument("fit_rate: window has " + std::to_string(ts.size()) + " samples, need >= 10");
  const double n = static_cast<double>(ts.size());
  double tm = 0.0, ym = 0.0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    tm += ts[i];
    ym += ys[i];
  }
  tm /= n;
  ym /= n;
  double stt = 0.0, sty = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    stt += (ts[i] - tm) * (ts[i] - tm);
    sty += (ts[i] - tm) * (ys[i] - ym);
    syy += (ys[i] - ym) * (ys[i] - ym);
  }
  if (!(stt > 0.0)) throw std::invalid_argument("fit_rate: window spans no time");
  const double slope = sty / stt;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    double e = ys[i] - (ym + slope * (ts[i] - tm));
    ss_res += e * e;
  }
  RateReport r;
  r.rate = -slope;
  r.r_squared = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
  r.t_begin = *std::min_element(ts.begin(), ts.end());
  r.t_end = *std::max_element(ts.begin(), ts.end());
  r.samples = ts.size();
  return r;
}

enum class Regime { thm_3_3, thm_3_9, thm_4_1, cor_two_timescale, thm_5_2, thm_5_3 };

inline const char* to_string(Regime r) {
  switch (r) {
    case Regime::thm_3_3: return "THM_3_3";
    case Regime::thm_3_9: return "THM_3_9";
    case Regime::thm_4_1: return "THM_4_1";
    case Regime::cor_two_timescale: return "COR_TWO_TIMESCALE";
    case Regime::thm_5_2: return "THM_5_2";
    case Regime::thm_5_3: return "THM_5_3";
  }
  return "?";
}

inline Regime regime_from_string(const std::string& s) {
  for (auto r : {Regime::thm_3_3, Regime::thm_3_9, Regime::thm_4_1, Regime::cor_two_timescale, Regime::thm_5_2,
                 Regime::thm_5_3})
    if (s == to_string(r)) return r;
  throw std::invalid_argument("unknown regime '" + s + "'");
}

struct ConstantInputs {
  double tau = 1.0;
  double tau0 = 0.0;
  double epsilon = 0.25;
  // One constant (MFLD), (c^x, c^y) for descent-ascent, or c^1..c^N.
  std::vector<double> poincare{1.0};
  double timescale = 1.0;  // Gamma
  int species = 1;         // N
  double m11 = 0.0, m111 = 0.0, m12 = 0.0;
};

struct TheoremConstants {
  Regime regime = Regime::thm_3_3;
  ConstantInputs inputs;
  double poincare = 0.0;  // effective c used by the formulas
  double rate = 0.0;
  double radius = 0.0;  // chi^2 threshold on the initialisation
  double prefactor = 1.0;
  // Lyapunov-functional regimes only.
  std::optional<double> gamma, m, w0;
};

// Radius is +inf when the interaction constant vanishes.
inline TheoremConstants theorem_constants(Regime regime, const ConstantInputs& in) {
  const double inf = std::numeric_limits<double>::infinity();
  if (!(in.tau > 0.0)) throw std::invalid_argument("theorem_constants: tau must be > 0");
  if (!(in.tau0 >= 0.0)) throw std::invalid_argument("theorem_constants: tau0 must be >= 0");
  if (in.poincare.empty()) throw std::invalid_argument("theorem_constants: need Poincare constants");
  for (double c : in.poincare)
    if (!(c > 0.0)) throw std::invalid_argument("theorem_constants: Poincare constants must be > 0");
  if (in.m11 < 0.0 || in.m111 < 0.0 || in.m12 < 0.0) throw std::invalid_argument("theorem_constants: M's must be >= 0");
  const bool lyapunov = regime == Regime::thm_3_9 || regime == Regime::thm_5_2;
  const double eps_max = lyapunov ? 0.125 : 1.0;
  if (!(in.epsilon > 0.0) || !(lyapunov ? in.epsilon <= eps_max : in.epsilon < eps_max))
    throw std::invalid_argument(std::string("theorem_constants: epsilon out of range for ") + to_string(regime));
  const bool game = regime == Regime::thm_4_1 || regime == Regime::cor_two_timescale;
  if (!game && !(in.tau > in.tau0)) throw std::invalid_argument("theorem_constants: need tau > tau0");
  if (game && in.poincare.size() != 2) throw std::invalid_argument("theorem_constants: need (c^x, c^y)");
  if ((regime == Regime::thm_5_2 || regime == Regime::thm_5_3) && in.species < 1)
    throw std::invalid_argument("theorem_constants: N must be >= 1");
  if (regime == Regime::cor_two_timescale && !(in.timescale > 0.0))
    throw std::invalid_argument("theorem_constants: Gamma must be > 0");

  TheoremConstants out;
  out.regime = regime;
  out.inputs = in;
  const double tau = in.tau, gap = in.tau - in.tau0, eps = in.epsilon;
  const double n = in.species;
  double c = *std::min_element(in.poincare.begin(), in.poincare.end());
  auto safe_div = [inf](double a, double b) { return b > 0.0 ? a / b : inf; };

  switch (regime) {
    case Regime::thm_3_3:
      out.radius = safe_div(gap * gap * c * c * eps * eps, 4.0 * in.m11 * in.m11);
      out.prefactor = 1.0 + in.m11 * in.m11 / (tau * gap * c * c * eps * eps);
      out.rate = 2.0 * gap * c * (1.0 - eps);
      break;
    case Regime::thm_4_1:
      out.radius = safe_div(tau * tau * c * c * eps * eps, 4.0 * in.m11 * in.m11);
      out.prefactor = 1.0 + in.m11 * in.m11 / (tau * tau * c * c * eps * eps);
      out.rate = 2.0 * tau * c * (1.0 - eps);
      break;
    case Regime::cor_two_timescale: {
      c = std::min(in.poincare[0], in.timescale * in.poincare[1]);
      const double g = in.timescale;
      out.radius = safe_div(tau * tau * c * c * eps * eps, 4.0 * g * in.m11 * in.m11);
      out.prefactor = 1.0 + g * in.m11 * in.m11 / (tau * tau * c * c * eps * eps);
      out.rate = 2.0 * tau * c * (1.0 - eps);
      break;
    }
    case Regime::thm_3_9:
    case Regime::thm_5_2: {
      double m = regime == Regime::thm_3_9
                     ? std::max(in.m11, (in.m12 + in.m111) / c)
                     : std::sqrt(2.0) * n * std::max(in.m11, (in.m12 + n * in.m111) / c);
      out.m = m;
      out.gamma = safe_div(tau * gap * c * eps * eps, 128.0 * m * m);
      out.w0 = std::min(safe_div(std::pow(2.0, -20) * std::pow(gap, 4) * c * c * c * std::pow(eps, 4), std::pow(m, 4)),
                        1.0);
      out.radius = m > 0.0 ? *out.w0 / (*out.gamma + 1.0 / c) : inf;
      out.prefactor = 1.0 + 128.0 * m * m / (tau * gap * c * c * eps * eps);
      out.rate = 2.0 * gap * c * (1.0 - eps);
      break;
    }
    case Regime::thm_5_3:
      out.radius = safe_div(gap * gap * c * c * eps * eps, 8.0 * n * n * in.m11 * in.m11);
      out.prefactor = 1.0 + 2.0 * n * n * in.m11 * in.m11 / (tau * gap * c * c * eps * eps);
      out.rate = 2.0 * gap * c * (1.0 - eps);
      break;
  }
  out.poincare = c;
  return out;
}

// W_t = z_t + gamma a_t.
inline std::vector<double> lyapunov_series(const Trajectory& tr, double gamma) {
  if (tr.hm1sq_total.empty() || tr.hm1sq_total.size() != tr.chi2_total.size())
    throw std::invalid_argument("lyapunov_series: trajectory lacks H^-1 / chi^2 series");
  std::vector<double> w(tr.hm1sq_total.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = tr.hm1sq_total[i] + gamma * tr.chi2_total[i];
  return w;
}

struct MonotonicityReport {
  double min_eigenvalue = 0.0;
  double residual = 0.0;  // max(0, -min_eigenvalue)
  double tau0 = 0.0;
};

// Least eigenvalue of the symmetric part of the block operator [K_IJ] on the
// product of the nu^I-mean-zero subspaces.
inline MonotonicityReport monotonicity_residual(const KernelTable& table, const std::vector<SpectralData>& spectra) {
  const std::size_t n = spectra.size();
  if (table.size() != n) throw std::invalid_argument("monotonicity_residual: table size != species");
  std::vector<Eigen::Index> offset(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) offset[i + 1] = offset[i] + spectra[i].size() - 1;
  Eigen::MatrixXd block = Eigen::MatrixXd::Zero(offset[n], offset[n]);
  std::vector<Eigen::MatrixXd> bases;
  for (const auto& s : spectra) {
    const Eigen::Index m = s.size() - 1;
    bases.push_back(s.weights().asDiagonal() * s.eigenfunctions.rightCols(m));
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (table[i].size() != n) throw std::invalid_argument("monotonicity_residual: table must be N x N");
    for (std::size_t j = 0; j < n; ++j) {
      if (!table[i][j]) continue;
      const auto& k = *table[i][j];
      detail::require_same_grid(k.x_grid(), spectra[i].grid(), "monotonicity_residual");
      detail::require_same_grid(k.y_grid(), spectra[j].grid(), "monotonicity_residual");
      block.block(offset[i], offset[j], offset[i + 1] - offset[i], offset[j + 1] - offset[j]) =
          bases[i].transpose() * k.matrix() * bases[j];
    }
  }
  Eigen::MatrixXd sym = 0.5 * (block + block.transpose());
  MonotonicityReport r;
  r.min_eigenvalue = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(sym, Eigen::EigenvaluesOnly).eigenvalues()(0);
  r.residual = std::max(0.0, -r.min_eigenvalue);
  r.tau0 = r.residual;
  return r;
}

inline MonotonicityReport monotonicity_residual(const KernelTable& table, const std::vector<DensityField>& equilibrium) {
  std::vector<SpectralData> spectra;
  for (const auto& nu : equilibrium) spectra.push_back(spectrum(nu));
  return monotonicity_residual(table, spectra);
}

// Table with entries (K_IJ + K_JI^T) / 2.
inline KernelTable symmetrized(const KernelTable& table) {
  const std::size_t n = table.size();
  KernelTable out(n, std::vector<std::optional<Kernel>>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      std::vector<KernelMode> modes;
      std::optional<PeriodicGrid> gx, gy;
      if (table[i][j]) {
        for (auto m : table[i][j]->modes()) {
          m.amplitude *= 0.5;
          modes.push_back(m);
        }
        gx = table[i][j]->x_grid();
        gy = table[i][j]->y_grid();
      }
      if (table[j][i]) {
        auto t = table[j][i]->transposed();
        for (auto m : t.modes()) {
          m.amplitude *= 0.5;
          modes.push_back(m);
        }
        gx = t.x_grid();
        gy = t.y_grid();
      }
      if (gx) out[i][j] = Kernel(*gx, *gy, std::move(modes));
    }
  return out;
}

// Curvature bound of x -> V(x) + int k(x, y) dmu(y) plus the cross term, from
// Fourier modes: sup|Hess V| + sum_j |a_j| (w^2 |p_j|^2 + w^2 |p_j||q_j|).
inline double gap_lipschitz_beta(const SystemSpec& spec) {
  if (spec.variant() != Variant::mfld) throw std::invalid_argument("gap_lipschitz_beta: spec is not MFLD");
  return spec.external(0).hessian_bound(spec.grid(0)) + spec.kernel().hessian_x_bound() +
         spec.kernel().cross_hessian_bound();
}

// F_tau(mu) - F_tau(nu) against (beta + beta^2/(c tau)) W2^2 + tau KL + (tau/2) chi^2.
inline BoundCheck ftau_gap_bound_check(const DensityField& mu, const DensityField& nu, const SystemSpec& spec,
                                       double beta, double c) {
  if (mu.grid().dim() != 1) throw std::invalid_argument("ftau_gap_bound_check: dim must be 1");
  if (!(c > 0.0)) throw std::invalid_argument("ftau_gap_bound_check: c must be > 0");
  const double tau = spec.tau();
  BoundCheck out;
  out.lhs = evaluate_energy(mu, spec, nu);
  const double w = w2_circle(mu, nu);
  out.rhs = (beta + beta * beta / (c * tau)) * w * w + tau * kl(mu, nu) + 0.5 * tau * chi_squared(mu, nu);
  return out;
}

struct SpectralSummary {
  double c_pi = 0.0;
  double tau0 = 0.0;
  double m11 = 0.0;
  double spectral_abscissa = std::numeric_limits<double>::quiet_NaN();
};

struct RunRecord {
  std::string name;
  const Trajectory* trajectory = nullptr;
  std::optional<RateReport> rate;
  std::optional<TheoremConstants> constants;
  std::vector<SpectralSummary> spectral;
};

inline nlohmann::json finite_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

inline nlohmann::json to_json(const RateReport& r) {
  return {{"fitted_rate", r.rate}, {"r_squared", r.r_squared}, {"t_begin", r.t_begin}, {"t_end", r.t_end},
          {"samples", r.samples}, {"predicted_rate", finite_or_null(r.predicted)}, {"ratio", finite_or_null(r.ratio)},
          {"series", r.series}};
}

inline nlohmann::json to_json(const TheoremConstants& t) {
  nlohmann::json j = {{"regime", to_string(t.regime)},
                      {"rate", finite_or_null(t.rate)},
                      {"radius", finite_or_null(t.radius)},
                      {"prefactor", finite_or_null(t.prefactor)},
                      {"poincare", t.poincare},
                      {"inputs",
                       {{"tau", t.inputs.tau},
                        {"tau0", t.inputs.tau0},
                        {"epsilon", t.inputs.epsilon},
                        {"c_pi", t.inputs.poincare},
                        {"gamma_timescale", t.inputs.timescale},
                        {"n_species", t.inputs.species},
                        {"m11", t.inputs.m11},
                        {"m111", t.inputs.m111},
                        {"m12", t.inputs.m12}}}};
  if (t.gamma) j["gamma"] = finite_or_null(*t.gamma);
  if (t.m) j["M"] = finite_or_null(*t.m);
  if (t.w0) j["w0_bar"] = finite_or_null(*t.w0);
  return j;
}

inline nlohmann::json to_json(const SpectralSummary& s) {
  return {{"c_pi", s.c_pi}, {"tau0", s.tau0}, {"m11", s.m11}, {"spectral_abscissa", finite_or_null(s.spectral_abscissa)}};
}

inline nlohmann::json summarize(const Trajectory& tr) {
  double mass = 0.0, lowest = std::numeric_limits<double>::infinity();
  for (double v : tr.mass_error) mass = std::max(mass, v);
  for (double v : tr.min_density) lowest = std::min(lowest, v);
  return {{"variant", to_string(tr.variant)},
          {"completed", tr.completed},
          {"failure", tr.failure},
          {"dt", tr.dt},
          {"steps", tr.steps},
          {"samples", tr.size()},
          {"final_time", tr.times.empty() ? 0.0 : tr.times.back()},
          {"chi2_initial", tr.chi2_total.empty() ? 0.0 : tr.chi2_total.front()},
          {"chi2_final", tr.chi2_total.empty() ? 0.0 : tr.chi2_total.back()},
          {"max_mass_error", mass},
          {"min_density", finite_or_null(lowest)}};
}

// Aggregate runs in input order.
inline nlohmann::json report(const std::vector<RunRecord>& runs) {
  nlohmann::json out = {{"schema_version", schema_version}, {"runs", nlohmann::json::array()}};
  for (const auto& r : runs) {
    nlohmann::json entry = {{"name", r.name}};
    entry["trajectory"] = r.trajectory ? summarize(*r.trajectory) : nlohmann::json(nullptr);
    entry["rate"] = r.rate ? to_json(*r.rate) : nlohmann::json(nullptr);
    entry["constants"] = r.constants ? to_json(*r.constants) : nlohmann::json(nullptr);
    entry["spectral"] = nlohmann::json::array();
    for (const auto& s : r.spectral) entry["spectral"].push_back(to_json(s));
    out["runs"].push_back(std::move(entry));
  }
  return out;
}

}  // namespace mfl
