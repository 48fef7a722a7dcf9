// End-to-end acceptance run: one PASS/FAIL line per criterion, tolerances pinned
// below. Exit status is nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "mfl/mfl.hpp"

using namespace mfl;

namespace {

constexpr double pi = std::numbers::pi;

// Pinned tolerances.
constexpr double tight_ratio_lo = 0.95, tight_ratio_hi = 1.05;
constexpr double rate_slack = 0.95;         // fitted >= bound * slack
constexpr double lyapunov_slack = 1.05;
constexpr double lyapunov_floor = 1e-24;    // below this W is round-off
constexpr double cancellation_tol = 1e-10;
constexpr double two_timescale_tol = 0.15;
constexpr double nspecies_rate_slack = 0.9;
constexpr double reduction_n1_tol = 1e-10;
constexpr double reduction_n2_tol = 1e-9;
constexpr double monotone_tol = 1e-12;
constexpr double exact_tol = 1e-15;
constexpr double hessian_tol = 1e-3;
constexpr double gradk_slack = 0.05;
constexpr double duality_tol = 1e-8;
constexpr double mass_tol = 1e-12;

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    pass = pass && ok;
    if (!detail.empty()) detail += "; ";
    detail += what + (ok ? "" : " [violated]");
  }
};

std::string fmt(const char* f, double a) {
  char buf[96];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}
std::string fmt(const char* f, double a, double b) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

// Invariants gathered across every trajectory for criterion 8.
struct InvariantLog {
  double mass_error = 0.0;
  double min_density = std::numeric_limits<double>::infinity();
  int runs = 0;
  bool all_completed = true;

  void add(const Trajectory& tr) {
    for (double v : tr.mass_error) mass_error = std::max(mass_error, v);
    for (double v : tr.min_density) min_density = std::min(min_density, v);
    all_completed = all_completed && tr.completed;
    ++runs;
  }
} invariants;

const FourierSeries cosine{{{{1, 0}, 1.0, 0.0}}};

// Shared by criteria 2 and 3.
struct InteractionRun {
  SystemSpec spec = SystemSpec::mfld(build_grid(1, 256, 2 * pi), cosine,
                                     Kernel(build_grid(1, 256, 2 * pi), {{{1, 0}, {-1, 0}, 0.3, 0.0}}), 1.0);
  EquilibriumResult eq;
  SpectralData s;
  Trajectory tr;
  double tau0 = 0.0;
};
InteractionRun interaction;

Outcome overdamped_tightness() {
  Outcome o;
  auto g = build_grid(1, 256, 2 * pi);
  auto spec = SystemSpec::mfld(g, cosine, Kernel(g, {}), 1.0);
  auto eq = mfld_stationary(spec);
  auto s = spectrum(eq.density());
  auto mu0 = perturb(eq.density(), s.eigenfunction(1), 0.05);
  StepperConfig cfg;
  cfg.horizon = 15.0;
  std::vector<SpectralData> spectra{s};
  auto tr = simulate_mfld(spec, mu0, eq, cfg, &spectra);
  invariants.add(tr);
  auto r = fit_rate(tr.times, tr.chi2_total).against(2.0 * spec.tau() * s.poincare());
  o.require(tr.completed, "run completed");
  o.require(r.ratio >= tight_ratio_lo && r.ratio <= tight_ratio_hi,
            fmt("rate %.6f vs 2 tau c_PI %.6f", r.rate, r.predicted) + fmt(", ratio %.5f in [%.2f, 1.05]", r.ratio, tight_ratio_lo));
  return o;
}

Outcome mfld_quadratic_rate() {
  Outcome o;
  auto& run = interaction;
  run.eq = mfld_stationary(run.spec);
  run.s = spectrum(run.eq.density());
  run.tau0 = tau0_estimate(run.spec.kernel(), run.s);
  const double c = run.s.poincare();
  ConstantInputs in;
  in.tau = run.spec.tau();
  in.tau0 = run.tau0;
  in.epsilon = 0.25;
  in.poincare = {c};
  in.m11 = m11(run.spec.kernel());
  auto local = theorem_constants(Regime::thm_3_3, in);
  in.epsilon = 0.125;
  in.m12 = run.spec.kernel().mixed_third_bound();
  auto lyap = theorem_constants(Regime::thm_3_9, in);

  auto mu0 = perturb(run.eq.density(), run.s.eigenfunction(1), 0.1);
  StepperConfig cfg;
  cfg.horizon = 10.0;
  cfg.diagnostic_stride = 16;
  cfg.lyapunov_gamma = *lyap.gamma;
  std::vector<SpectralData> spectra{run.s};
  run.tr = simulate_mfld(run.spec, mu0, run.eq, cfg, &spectra);
  invariants.add(run.tr);
  auto r = fit_rate(run.tr.times, run.tr.chi2_total);
  auto sigma = spectral_abscissa(run.spec.tau(), run.s, run.spec.kernel());

  o.require(run.eq.converged, fmt("equilibrium residual %.1e", run.eq.residual));
  o.require(run.tau0 <= 1e-12, fmt("tau0 %.1e (PSD kernel)", run.tau0));
  o.require(run.tr.chi2_total.front() <= local.radius,
            fmt("chi2_0 %.4g <= radius %.4g", run.tr.chi2_total.front(), local.radius));
  const double bound = 2.0 * run.spec.tau() * c * 0.75 * rate_slack;
  o.require(r.rate >= bound, fmt("rate %.5f >= %.5f", r.rate, bound));
  // Reported only: the abscissa-based rate is conjectural.
  o.detail += fmt("; reported: rate / 2 sigma = %.4f (sigma %.5f)", r.rate / (2.0 * sigma.abscissa), sigma.abscissa);
  return o;
}

Outcome lyapunov_contraction() {
  Outcome o;
  const auto& run = interaction;
  ConstantInputs in;
  in.tau = run.spec.tau();
  in.tau0 = run.tau0;
  in.epsilon = 0.125;
  in.poincare = {run.s.poincare()};
  in.m11 = m11(run.spec.kernel());
  in.m12 = run.spec.kernel().mixed_third_bound();
  auto k = theorem_constants(Regime::thm_3_9, in);
  auto w = lyapunov_series(run.tr, *k.gamma);
  int pairs = 0;
  double worst = 0.0;
  for (std::size_t i = 0; i + 1 < w.size(); ++i) {
    if (w[i] > *k.w0 || w[i] < lyapunov_floor) continue;
    const double dt = run.tr.times[i + 1] - run.tr.times[i];
    worst = std::max(worst, w[i + 1] / (w[i] * std::exp(-k.rate * dt)));
    ++pairs;
  }
  o.require(pairs > 0, std::to_string(pairs) + " pairs below W0 " + fmt("%.3g", *k.w0));
  o.require(worst <= lyapunov_slack, fmt("max W_{t+d} / (W_t e^{-rate d}) = %.4f <= 1.05, gamma %.4g", worst, *k.gamma));
  return o;
}

Outcome instability() {
  Outcome o;
  auto g = build_grid(1, 128, 2 * pi);
  auto spec = SystemSpec::mfld(g, {}, Kernel(g, {{{1, 0}, {-1, 0}, -3.0, 0.0}}), 1.0);
  auto eq = mfld_stationary(spec);
  const auto& nu = eq.density();
  double flat = 0.0;
  for (double v : nu.values()) flat = std::max(flat, std::abs(v * 2 * pi - 1.0));
  auto s = spectrum(nu);
  const double tau0 = tau0_estimate(spec.kernel(), s);
  // Most negative direction of K on mean-zero functions, as a unit-norm function.
  Eigen::MatrixXd b = kernel_form(spec.kernel(), s);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (b + b.transpose()));
  Eigen::VectorXd f = s.eigenfunctions.rightCols(s.size() - 1) * es.eigenvectors().col(0);
  ScalarField dir(g, std::vector<double>(f.data(), f.data() + f.size()));
  auto mu0 = perturb(nu, dir, 0.02);
  const double gap = evaluate_energy(mu0, spec, nu);
  StepperConfig cfg;
  cfg.horizon = 20.0;
  std::vector<SpectralData> spectra{s};
  auto tr = simulate_mfld(spec, mu0, eq, cfg, &spectra);
  invariants.add(tr);
  const double chi0 = tr.chi2_total.front();
  double lowest = *std::min_element(tr.chi2_total.begin(), tr.chi2_total.end());

  o.require(flat <= 1e-12, fmt("uniform fixed point (dev %.1e)", flat));
  o.require(std::abs(tau0 - 1.5) <= 1e-10, fmt("tau0 %.6f = 3/2", tau0));
  o.require(gap < 0.0, fmt("energy gap %.4e < 0", gap));
  o.require(tr.completed && lowest >= 0.5 * chi0,
            fmt("min chi2 %.4g >= chi2_0 / 2 = %.4g", lowest, 0.5 * chi0) + fmt(", chi2(T) %.4g", tr.chi2_total.back()));
  return o;
}

Outcome mflda_local_rate() {
  Outcome o;
  auto g = build_grid(1, 128, 2 * pi);
  Kernel k(g, {{{1, 0}, {-1, 0}, 1.0, 0.0}});
  FourierPerturbation px({{{1, 0}, 1.0, 0.3}}), py({{{1, 0}, 1.0, 1.1}, {{2, 0}, 0.5, 0.0}});

  auto run = [&](const SystemSpec& spec, double sx, double sy, double horizon, Regime regime, double& radius) {
    auto eq = mflda_equilibrium(spec);
    std::vector<SpectralData> spectra{spectrum(eq.density(0)), spectrum(eq.density(1))};
    ConstantInputs in;
    in.tau = spec.tau();
    in.epsilon = 0.25;
    in.poincare = {spectra[0].poincare(), spectra[1].poincare()};
    in.timescale = spec.timescale();
    in.m11 = m11(spec.kernel());
    radius = theorem_constants(regime, in).radius;
    StepperConfig cfg;
    cfg.horizon = horizon;
    auto tr = simulate_mflda(spec, perturb(eq.density(0), px, sx), perturb(eq.density(1), py, sy), eq, cfg, &spectra);
    invariants.add(tr);
    return std::pair{tr, in.poincare};
  };

  double radius = 0.0;
  auto [tr, c] = run(SystemSpec::mflda(k, 1.0), 0.08, 0.05, 12.0, Regime::thm_4_1, radius);
  auto r = fit_rate(tr.times, tr.chi2_total);
  double witness = *std::max_element(tr.cancellation.begin(), tr.cancellation.end());
  const double bound = 2.0 * std::min(c[0], c[1]) * 0.75 * rate_slack;
  o.require(tr.chi2_total.front() <= radius, fmt("chi2_0 %.4g <= radius %.4g", tr.chi2_total.front(), radius));
  o.require(r.rate >= bound, fmt("rate %.5f >= %.5f", r.rate, bound));
  o.require(witness <= cancellation_tol, fmt("cancellation witness %.1e", witness));

  // Double-well y-potential beta cos 2y tuned so that c^y = c^x / 4.
  auto gaps = [&](double beta) {
    auto spec = SystemSpec::mflda(k, 1.0, 1.0, {}, FourierSeries{{{{2, 0}, beta, 0.0}}});
    auto eq = mflda_equilibrium(spec);
    return std::pair{spectrum(eq.density(0)).poincare(), spectrum(eq.density(1)).poincare()};
  };
  double lo = 0.0, hi = 5.0;
  for (int i = 0; i < 40; ++i) {
    double mid = 0.5 * (lo + hi);
    auto [cx, cy] = gaps(mid);
    (cy > cx / 4 ? lo : hi) = mid;
  }
  const double beta = 0.5 * (lo + hi);
  FourierSeries vy{{{{2, 0}, beta, 0.0}}};
  double r1 = 0.0, r4 = 0.0;
  auto [slow, cs] = run(SystemSpec::mflda(k, 1.0, 1.0, {}, vy), 0.02, 0.02, 40.0, Regime::cor_two_timescale, r1);
  auto [fast, cf] = run(SystemSpec::mflda(k, 1.0, 4.0, {}, vy), 0.02, 0.02, 12.0, Regime::cor_two_timescale, r4);
  auto rate1 = fit_rate(slow.times, slow.chi2_total).rate;
  auto rate4 = fit_rate(fast.times, fast.chi2_total).rate;
  const double predicted4 = 2.0 * std::min(cf[0], 4.0 * cf[1]);
  o.require(fast.chi2_total.front() <= r4, fmt("Gamma=4 chi2_0 %.3g <= radius %.3g", fast.chi2_total.front(), r4));
  o.require(std::abs(rate4 / predicted4 - 1.0) <= two_timescale_tol,
            fmt("Gamma=4 rate %.4f vs 2 tau min(c^x, 4c^y) %.4f", rate4, predicted4) + fmt(" (beta %.5f, c^y/c^x %.4f)", beta, cf[1] / cf[0]));
  o.require(rate4 > rate1, fmt("Gamma=4 rate %.4f > Gamma=1 rate %.4f", rate4, rate1));
  return o;
}

double max_diff(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double trajectory_diff(const Trajectory& a, const Trajectory& b) {
  return std::max({max_diff(a.chi2_total, b.chi2_total), max_diff(a.kl_total, b.kl_total),
                   max_diff(a.hm1sq_total, b.hm1sq_total), max_diff(a.w2sq, b.w2sq)});
}

Outcome nspecies_reductions() {
  Outcome o;
  auto g = build_grid(1, 128, 2 * pi);
  FourierPerturbation p({{{1, 0}, 1.0, 0.3}, {{3, 0}, 0.4, 0.0}});
  StepperConfig cfg;
  cfg.horizon = 5.0;

  Kernel k(g, {{{1, 0}, {-1, 0}, 0.3, 0.0}});
  auto s1 = SystemSpec::mfld(g, cosine, k, 1.0);
  auto e1 = mfld_stationary(s1);
  auto sn = SystemSpec::nspecies({g}, {cosine}, {{k}}, 1.0);
  auto en = nspecies_equilibrium(sn);
  auto t1 = simulate_mfld(s1, perturb(e1.density(), p, 0.1), e1, cfg);
  auto tn = simulate_nspecies(sn, {perturb(en.density(), p, 0.1)}, en, cfg);
  invariants.add(t1);
  invariants.add(tn);
  o.require(trajectory_diff(t1, tn) <= reduction_n1_tol, fmt("N=1 vs MFLD max diff %.1e", trajectory_diff(t1, tn)));

  Kernel kc(g, {{{1, 0}, {-1, 0}, 1.0, 0.0}});
  auto sa = SystemSpec::mflda(kc, 1.0);
  auto ea = mflda_equilibrium(sa);
  KernelTable pair{{std::nullopt, kc}, {kc.transposed().negated(), std::nullopt}};
  auto s2 = SystemSpec::nspecies({g, g}, {}, pair, 1.0);
  auto e2 = nspecies_equilibrium(s2);
  auto ta = simulate_mflda(sa, perturb(ea.density(0), p, 0.1), perturb(ea.density(1), p, 0.05), ea, cfg);
  auto t2 = simulate_nspecies(s2, {perturb(e2.density(0), p, 0.1), perturb(e2.density(1), p, 0.05)}, e2, cfg);
  invariants.add(ta);
  invariants.add(t2);
  o.require(trajectory_diff(ta, t2) <= reduction_n2_tol, fmt("N=2 vs MFLDA max diff %.1e", trajectory_diff(ta, t2)));

  // Three-species pairwise zero-sum (polymatrix) game.
  Kernel k12(g, {{{1, 0}, {-1, 0}, 1.0, 0.0}}), k13(g, {{{1, 0}, {1, 0}, 0.5, -pi / 2}}),
      k23(g, {{{2, 0}, {-1, 0}, 0.7, 0.4}});
  KernelTable t3(3, std::vector<std::optional<Kernel>>(3));
  t3[0][1] = k12, t3[1][0] = k12.transposed().negated();
  t3[0][2] = k13, t3[2][0] = k13.transposed().negated();
  t3[1][2] = k23, t3[2][1] = k23.transposed().negated();
  std::vector<FourierSeries> v{cosine, FourierSeries{{{{2, 0}, 0.5, 0.3}}}, {}};
  auto s3 = SystemSpec::nspecies({g, g, g}, v, t3, 1.0);
  auto e3 = nspecies_equilibrium(s3);
  std::vector<SpectralData> spectra;
  ConstantInputs in;
  in.poincare.clear();
  for (const auto& d : e3.densities) {
    spectra.push_back(spectrum(d));
    in.poincare.push_back(spectra.back().poincare());
  }
  auto mono = monotonicity_residual(t3, spectra);
  auto mono2 = monotonicity_residual(pair, e2.densities);
  o.require(std::max(mono.residual, mono2.residual) <= monotone_tol,
            fmt("monotonicity residual %.1e (N=3), %.1e (N=2)", mono.residual, mono2.residual));
  in.tau = 1.0;
  in.tau0 = mono.tau0;
  in.epsilon = 0.25;
  in.species = 3;
  for (const auto& row : t3)
    for (const auto& kk : row)
      if (kk) in.m11 = std::max(in.m11, m11(*kk));
  auto c53 = theorem_constants(Regime::thm_5_3, in);
  std::vector<DensityField> init;
  for (const auto& d : e3.densities) init.push_back(perturb(d, p, 0.01));
  StepperConfig long_cfg;
  long_cfg.horizon = 15.0;
  auto tr = simulate_nspecies(s3, init, e3, long_cfg, &spectra);
  invariants.add(tr);
  auto r = fit_rate(tr.times, tr.chi2_total);
  const double bound = 2.0 * c53.poincare * nspecies_rate_slack;
  o.require(tr.chi2_total.front() <= c53.radius, fmt("chi2_0 %.4g <= r0 %.4g", tr.chi2_total.front(), c53.radius));
  o.require(r.rate >= bound, fmt("3-species rate %.4f >= %.4f", r.rate, bound));
  return o;
}

Outcome constant_formulas() {
  Outcome o;
  auto exact = [&](double got, double want, const std::string& what) {
    o.require(std::abs(got - want) <= exact_tol * std::abs(want), what + fmt(" = %.17g (expected %.17g)", got, want));
  };
  ConstantInputs in;
  in.tau = 1.0;
  in.tau0 = 0.0;
  in.poincare = {1.0};
  in.epsilon = 0.5;
  in.m11 = 1.0;
  auto a = theorem_constants(Regime::thm_3_3, in);
  exact(a.radius, 1.0 / 16, "THM_3_3 radius");
  exact(a.prefactor, 5.0, "THM_3_3 C");
  ConstantInputs game = in;
  game.poincare = {1.0, 1.0};
  auto b = theorem_constants(Regime::thm_4_1, game);
  exact(b.radius, 1.0 / 16, "THM_4_1 radius");
  exact(b.prefactor, 5.0, "THM_4_1 C");
  auto c = theorem_constants(Regime::thm_5_3, in);
  exact(c.radius, 1.0 / 32, "THM_5_3 r0");
  exact(c.prefactor, 3.0, "THM_5_3 C");
  ConstantInputs lyap = in;
  lyap.epsilon = 0.125;
  exact(*theorem_constants(Regime::thm_3_9, lyap).gamma, 1.0 / 8192, "THM_3_9 gamma");
  return o;
}

Outcome identity_suites() {
  Outcome o;
  std::mt19937_64 rng(20240611);
  std::uniform_real_distribution<double> phase(0.0, 2 * pi);
  std::normal_distribution<double> normal(0.0, 1.0);

  // Hessian identity on Gibbs measures of two potentials.
  auto g = build_grid(1, 256, 2 * pi);
  std::vector<FourierSeries> potentials{cosine, FourierSeries{{{{2, 0}, 0.5, 0.0}, {{1, 0}, 0.3, -pi / 2}}}};
  double hess = 0.0;
  for (const auto& v : potentials) {
    auto nu = proximal_gibbs(v.sample(g), 1.0);
    for (int t = 0; t < 5; ++t) {
      // Phi = psi' for a random trigonometric psi.
      FourierSeries psi{{{{1, 0}, normal(rng), phase(rng)}, {{2, 0}, normal(rng), phase(rng)}, {{3, 0}, normal(rng), phase(rng)}}};
      VectorField phi(g);
      for (std::size_t i = 0; i < g.size(); ++i)
        for (const auto& m : psi.modes)
          phi.at(0, i) -= m.amplitude * m.wavevector[0] * std::sin(m.wavevector[0] * g.coordinate(i, 0) + m.phase);
      hess = std::max(hess, hessian_identity_residual(phi, nu, v.sample(g)));
    }
  }
  o.require(hess <= hessian_tol, fmt("Hessian identity max residual %.2e <= 1e-3", hess));

  // grad K bound on the interaction run's equilibrium.
  const auto& s = interaction.s;
  const auto& k = interaction.spec.kernel();
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    ScalarField f(g);
    for (double& x : f.values) x = normal(rng);
    for (int m = 1; m <= 6; ++m) {
      double a = normal(rng), ph = phase(rng);
      for (std::size_t i = 0; i < g.size(); ++i) f[i] += a * std::cos(m * g.coordinate(i, 0) + ph);
    }
    auto c = gradK_bound_check(k, s, project_mean_zero(f, s.reference));
    worst = std::max(worst, c.lhs / c.rhs);
  }
  o.require(worst <= 1.0 + gradk_slack, fmt("sup|grad K f| / (M11 |f|_H-1) max %.4f <= 1.05", worst));

  // Operator duality, 1-D and 2-D.
  auto g2 = build_grid(2, 16, 2 * pi);
  auto nu2 = proximal_gibbs(FourierSeries{{{{1, 0}, 1.0, 0.0}, {{1, 1}, 0.6, 0.4}}}.sample(g2), 1.0);
  double dual = std::max(std::abs(gradient_space_gap(s.reference) / s.poincare() - 1.0),
                         std::abs(gradient_space_gap(nu2) / spectrum(nu2).poincare() - 1.0));
  o.require(dual <= duality_tol, fmt("duality relative gap %.1e <= 1e-8", dual));

  // Metric ordering over random smooth pairs. The atomic W2 overestimates the
  // continuum distance by O(h W1), so the grid must resolve small perturbations.
  auto gm = build_grid(1, 512, 2 * pi);
  double kl_excess = -std::numeric_limits<double>::infinity(), w2_ratio = 0.0;
  std::uniform_real_distribution<double> size(0.05, 0.95);
  for (int t = 0; t < 100; ++t) {
    FourierSeries v{{{{1, 0}, normal(rng), phase(rng)}, {{2, 0}, 0.5 * normal(rng), phase(rng)}}};
    auto nu = proximal_gibbs(v.sample(gm), 1.0);
    FourierSeries d{{{{1, 0}, normal(rng), phase(rng)}, {{2, 0}, normal(rng), phase(rng)}, {{4, 0}, normal(rng), phase(rng)}}};
    auto f = d.sample(gm);
    double peak = 0.0;
    for (double x : f.values) peak = std::max(peak, std::abs(x));
    auto mu = perturb(nu, f, size(rng) / (2.0 * peak));
    const double chi = chi_squared(mu, nu), w = w2_circle(mu, nu);
    kl_excess = std::max(kl_excess, kl(mu, nu) - chi);
    w2_ratio = std::max(w2_ratio, w * w / (2.0 / spectrum(nu).poincare() * chi));
  }
  o.require(kl_excess <= 0.0, fmt("max KL - chi2 = %.2e <= 0", kl_excess));
  o.require(w2_ratio <= 1.0, fmt("max W2^2 / (2 chi2 / c_PI) = %.4f <= 1", w2_ratio));

  o.require(invariants.mass_error <= mass_tol && invariants.min_density > 0.0 && invariants.all_completed,
            fmt("over %g runs: max |mass - 1| %.1e", invariants.runs, invariants.mass_error) +
                fmt(", min density %.3g", invariants.min_density));
  return o;
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double budget_s;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "overdamped tightness", 30, overdamped_tightness},
      {2, "MFLD quadratic rate", 60, mfld_quadratic_rate},
      {3, "Lyapunov contraction", 60, lyapunov_contraction},
      {4, "instability below tau0", 60, instability},
      {5, "MFL-DA local rate and two timescales", 120, mflda_local_rate},
      {6, "N-species reductions and monotonicity", 180, nspecies_reductions},
      {7, "constant formulas", 1, constant_formulas},
      {8, "identity and inequality suites", 120, identity_suites},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    o.require(secs < c.budget_s, fmt("runtime %.1f s < %.0f s", secs, c.budget_s));
    failures += o.pass ? 0 : 1;
    std::printf("CRITERION %d %s  %s: %s\n", c.id, o.pass ? "PASS" : "FAIL", c.name, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
