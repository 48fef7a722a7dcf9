#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "mfl/equilibrium.hpp"
#include "mfl/spectral.hpp"

using namespace mfl;
namespace {
constexpr double pi = std::numbers::pi;

// First nonzero eigenvalue of -(e^{-cos} f')' = lambda e^{-cos} f on the circle,
// from a 81-mode Fourier-Galerkin solve with Bessel-function moments.
constexpr double c_pi_cosine_well = 1.16549653;

DensityField gibbs(const PeriodicGrid& g, const FourierSeries& v) { return proximal_gibbs(v.sample(g), 1.0); }

ScalarField random_field(const PeriodicGrid& g, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  ScalarField f(g);
  for (double& v : f.values) v = n(rng);
  return f;
}

DensityField random_density(const PeriodicGrid& g, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.2, 2.0);
  ScalarField f(g);
  for (double& v : f.values) v = u(rng);
  return normalize(f);
}
}  // namespace

// Uniform measure: the staggered Laplacian has symbol (4/h^2) sin^2(pi k / n).
TEST(Spectrum, UniformMeasureMatchesDiscreteSymbol) {
  const int n = 64;
  auto g = build_grid(1, n, 2 * pi);
  auto s = spectrum(normalize(ScalarField(g, 1.0)));
  const double h = g.spacing();
  EXPECT_NEAR(s.eigenvalues(0), 0.0, 1e-12);
  EXPECT_NEAR(s.poincare(), 4.0 / (h * h) * std::pow(std::sin(pi / n), 2), 1e-12);
  EXPECT_NEAR(s.eigenvalues(3), 4.0 / (h * h) * std::pow(std::sin(2 * pi / n), 2), 1e-12);
}

TEST(Spectrum, CosineWellConvergesToGalerkinReference) {
  FourierSeries v{{{{1, 0}, 1.0, 0.0}}};
  auto err = [&](int n) { return std::abs(spectrum(gibbs(build_grid(1, n, 2 * pi), v)).poincare() - c_pi_cosine_well); };
  EXPECT_LT(err(256), 2e-4);
  EXPECT_NEAR(std::log2(err(64) / err(128)), 2.0, 0.1);
}

TEST(Spectrum, EigenfunctionsAreOrthonormalWithPositiveGroundState) {
  std::mt19937_64 rng(1);
  auto g = build_grid(2, 10, 2 * pi);
  auto s = spectrum(random_density(g, rng));
  Eigen::MatrixXd gram = s.eigenfunctions.transpose() * s.weights().asDiagonal() * s.eigenfunctions;
  EXPECT_LT((gram - Eigen::MatrixXd::Identity(s.size(), s.size())).cwiseAbs().maxCoeff(), 1e-10);
  for (double v : s.eigenfunction(0).values) EXPECT_NEAR(v, 1.0, 1e-10);
}

TEST(Generator, AnnihilatesConstantsAndIsSelfAdjoint) {
  std::mt19937_64 rng(2);
  auto g = build_grid(2, 9, 3.0);
  auto nu = random_density(g, rng);
  Generator gen(nu);
  for (double v : gen.apply(ScalarField(g, 1.0)).values) EXPECT_NEAR(v, 0.0, 1e-11);
  auto f = random_field(g, rng), h = random_field(g, rng);
  EXPECT_NEAR(inner(f, gen.apply(h), nu.field()), inner(gen.apply(f), h, nu.field()), 1e-10);
  EXPECT_NEAR(inner(f, gen.apply(f), nu.field()), gen.dirichlet_form(f), 1e-10);
}

TEST(Spectrum, RayleighQuotientBoundedByPoincareConstant) {
  std::mt19937_64 rng(3);
  auto g = build_grid(1, 40, 2 * pi);
  auto nu = random_density(g, rng);
  auto s = spectrum(nu);
  for (int t = 0; t < 100; ++t) {
    auto f = project_mean_zero(random_field(g, rng), nu);
    EXPECT_GE(dirichlet_form(f, nu), s.poincare() * inner(f, f, nu.field()) * (1 - 1e-12));
  }
  // Attained by the first eigenfunction.
  auto g1 = s.eigenfunction(1);
  EXPECT_NEAR(dirichlet_form(g1, nu), s.poincare(), 1e-10);
}

TEST(NegativeSobolev, InverseGeneratorAndNormAgree) {
  std::mt19937_64 rng(4);
  auto g = build_grid(1, 48, 2 * pi);
  auto nu = random_density(g, rng);
  auto s = spectrum(nu);
  auto f = project_mean_zero(random_field(g, rng), nu);
  auto u = inverse_generator(f, s);
  auto lu = Generator(nu).apply(u);
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(lu[i], f[i], 1e-9);
  EXPECT_NEAR(h_minus1_norm_sq(f, s), dirichlet_form(u, nu), 1e-10);
  // c ||f||^2_{H^-1} <= ||f||^2 <= ||grad f||^2 / c
  const double c = s.poincare();
  EXPECT_LE(c * h_minus1_norm_sq(f, s), inner(f, f, nu.field()) * (1 + 1e-12));
  EXPECT_LE(inner(f, f, nu.field()), dirichlet_form(f, nu) / c * (1 + 1e-12));
}

TEST(Duality, GradientSpaceGapEqualsPoincareConstant) {
  std::mt19937_64 rng(5);
  for (int dim : {1, 2}) {
    auto g = build_grid(dim, dim == 1 ? 64 : 12, 2 * pi);
    auto nu = random_density(g, rng);
    EXPECT_NEAR(gradient_space_gap(nu) / spectrum(nu).poincare(), 1.0, 1e-9) << "dim " << dim;
  }
}

// k(x, y) = -cos(x - y) on the uniform measure acts as -1/2 on cos x and sin x.
TEST(KernelForm, AttractiveCosineGivesTauZeroOneHalf) {
  auto g = build_grid(1, 32, 2 * pi);
  Kernel k(g, {{{1, 0}, {-1, 0}, -1.0, 0.0}});
  auto s = spectrum(normalize(ScalarField(g, 1.0)));
  EXPECT_NEAR(tau0_estimate(k, s), 0.5, 1e-12);
  Kernel repulsive(g, {{{1, 0}, {-1, 0}, 1.0, 0.0}});
  EXPECT_NEAR(tau0_estimate(repulsive, s), 0.0, 1e-12);
}

TEST(KernelForm, TauZeroRequiresSymmetricKernel) {
  auto g = build_grid(1, 16, 2 * pi);
  Kernel k(g, {{{1, 0}, {2, 0}, 1.0, 0.3}});
  EXPECT_FALSE(k.symmetric());
  auto s = spectrum(normalize(ScalarField(g, 1.0)));
  EXPECT_THROW(tau0_estimate(k, s), std::invalid_argument);
}

// Cross-derivative of a cos(p x + q y + phi) peaks at a |p q| (2 pi / L)^2.
TEST(CrossHessian, AnalyticAndSampledEstimates) {
  auto g = build_grid(1, 128, 4.0);
  Kernel k(g, {{{2, 0}, {-3, 0}, 0.5, 0.2}});
  const double w = 2 * pi / 4.0;
  auto est = m11_estimate(k);
  EXPECT_NEAR(est.analytic, 0.5 * 6 * w * w, 1e-12);
  EXPECT_LE(est.sampled, est.analytic);
  // Centred differences lose sin(2wh) sin(3wh) / (6 w^2 h^2), about 0.5% here.
  const double h = g.spacing();
  EXPECT_NEAR(est.sampled, est.analytic * std::sin(2 * w * h) * std::sin(3 * w * h) / (6 * w * w * h * h),
              5e-4 * est.analytic);
}

TEST(CrossHessian, GradKBoundHoldsForRandomFields) {
  std::mt19937_64 rng(6);
  auto g = build_grid(1, 64, 2 * pi);
  Kernel k(g, {{{1, 0}, {-1, 0}, 0.7, 0.0}, {{2, 0}, {-2, 0}, 0.2, 0.0}});
  auto nu = gibbs(g, FourierSeries{{{{1, 0}, 1.0, 0.0}}});
  auto s = spectrum(nu);
  for (int t = 0; t < 100; ++t) EXPECT_TRUE(gradK_bound_check(k, s, random_field(g, rng)).holds(0.0));
}

TEST(SpectralAbscissa, ReducesToTauTimesGapWithoutInteraction) {
  auto g = build_grid(1, 64, 2 * pi);
  auto s = spectrum(gibbs(g, FourierSeries{{{{1, 0}, 1.0, 0.0}}}));
  auto a = spectral_abscissa(0.7, s, Kernel(g, {}));
  EXPECT_NEAR(a.abscissa, 0.7 * s.poincare(), 1e-10);
  EXPECT_NEAR(a.hessian_min, 0.7 * s.poincare(), 1e-10);
}

// For a symmetric kernel tau L + L K is similar to a symmetric operator, so the
// abscissa and the symmetric form agree.
TEST(SpectralAbscissa, SymmetricKernelAbscissaMatchesForm) {
  auto g = build_grid(1, 64, 2 * pi);
  Kernel k(g, {{{1, 0}, {-1, 0}, 0.3, 0.0}});
  auto s = spectrum(gibbs(g, FourierSeries{{{{1, 0}, 1.0, 0.0}}}));
  auto a = spectral_abscissa(1.0, s, k);
  EXPECT_NEAR(a.abscissa, a.hessian_min, 1e-9);
  EXPECT_GT(a.hessian_min, s.poincare());
}

TEST(HessianIdentity, SecondOrderAccurateOnGibbsMeasures) {
  FourierSeries v{{{{1, 0}, 1.0, 0.0}, {{2, 0}, 0.4, 0.5}}};
  auto residual = [&](int n) {
    auto g = build_grid(1, n, 2 * pi);
    VectorField phi(g);
    for (std::size_t i = 0; i < g.size(); ++i) phi.at(0, i) = std::cos(2 * g.coordinate(i, 0)) + 0.5;
    return hessian_identity_residual(phi, gibbs(g, v), v.sample(g));
  };
  EXPECT_LT(residual(256), 1e-3);
  EXPECT_NEAR(std::log2(residual(64) / residual(128)), 2.0, 0.2);
}

TEST(HessianIdentity, RejectsMismatchedPotential) {
  auto g = build_grid(1, 32, 2 * pi);
  FourierSeries v{{{{1, 0}, 1.0, 0.0}}};
  VectorField phi(g);
  EXPECT_THROW(hessian_identity_residual(phi, normalize(ScalarField(g, 1.0)), v.sample(g)), std::invalid_argument);
}

TEST(Spectrum, RefusesGridsBeyondDenseBudget) {
  auto g = build_grid(2, 65, 1.0);
  EXPECT_THROW(spectrum(normalize(ScalarField(g, 1.0))), std::invalid_argument);
}
