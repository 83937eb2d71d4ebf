#include <doctest.h>

#include <Eigen/Cholesky>

#include <cmath>
#include <random>

#include "rdcbias/debias.hpp"
#include "rdcbias/errors.hpp"
#include "rdcbias/experiments.hpp"
#include "rdcbias/noise.hpp"
#include "support.hpp"

using namespace rdcbias;

namespace {

const ReferenceChain& reference() {
  static const ReferenceChain ref = load_reference(test::data_path("1ubq.pdb"), 71);
  return ref;
}

SaupeTensor fixed_saupe() {
  return saupe_from_eigen(Eigen::Vector3d(-0.60e-3, -0.25e-3, 0.85e-3), rotation_zyz(30, 50, 70));
}

struct NoisyCase {
  FragmentSetup f;
  TorsionSet template_torsions;
  Eigen::VectorXd d;
};

NoisyCase noisy_case(double sigma_deg, std::uint64_t seed) {
  FragmentSetup f = make_fragment(reference().clean, 0, 8);
  const Eigen::VectorXd d = f.design.a * from_tensor(fixed_saupe());
  TorsionSet t = perturb_torsions(f.truth, deg_to_rad(sigma_deg), RandomStream(seed, 0));
  return {std::move(f), std::move(t), d};
}

}  // namespace

TEST_CASE("zero noise leaves the OLS eigenvalues unchanged") {
  const NoisyCase c = noisy_case(10.0, 1);
  const DebiasResult r = mc_debias(c.f.model, c.template_torsions, c.d, 0.0, 50, RandomStream(2, 0));
  CHECK(r.lambda_tilde == r.lambda_ols);
  CHECK(r.lambda_sim_mean == r.lambda_ols);
  CHECK(r.n_sim == 50);
  CHECK(r.n_skipped == 0);

  const SimexResult sx = simex_extrapolate(c.f.model, c.template_torsions, c.d, 0.0,
                                           {0.5, 1.0, 1.5, 2.0}, 20, RandomStream(2, 0));
  CHECK((sx.extrapolated - sx.lambda_ols).norm() == 0.0);
}

TEST_CASE("debias result satisfies its identities") {
  const NoisyCase c = noisy_case(15.0, 3);
  const DebiasResult r =
      mc_debias(c.f.model, c.template_torsions, c.d, deg_to_rad(15.0), 400, RandomStream(4, 0));
  CHECK((r.lambda_tilde - (2.0 * r.lambda_ols - r.lambda_sim_mean)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(std::abs(r.lambda_ols.sum()) < 1e-10);
  CHECK(std::abs(r.lambda_sim_mean.sum()) < 1e-10);
  CHECK(std::abs(r.lambda_tilde.sum()) < 1e-10);
  CHECK(r.sigma_used == doctest::Approx(deg_to_rad(15.0)));
  CHECK((r.lambda_sim_stderr.array() > 0.0).all());
  // Torsion noise shrinks the outer eigenvalues, so the correction widens them.
  CHECK(r.lambda_tilde(2) > r.lambda_ols(2));
}

TEST_CASE("debias is bit-identical across runs and thread counts") {
  const NoisyCase c = noisy_case(12.0, 5);
  const RandomStream rng(6, 0);
  const double sigma = deg_to_rad(12.0);
  const DebiasResult a = mc_debias(c.f.model, c.template_torsions, c.d, sigma, 300, rng, 1);
  const DebiasResult b = mc_debias(c.f.model, c.template_torsions, c.d, sigma, 300, rng, 1);
  const DebiasResult t3 = mc_debias(c.f.model, c.template_torsions, c.d, sigma, 300, rng, 3);
  const DebiasResult t7 = mc_debias(c.f.model, c.template_torsions, c.d, sigma, 300, rng, 7);
  for (const DebiasResult* other : {&b, &t3, &t7}) {
    CHECK(other->lambda_tilde == a.lambda_tilde);
    CHECK(other->lambda_sim_mean == a.lambda_sim_mean);
    CHECK(other->lambda_sim_stderr == a.lambda_sim_stderr);
  }
  const DebiasResult other_seed =
      mc_debias(c.f.model, c.template_torsions, c.d, sigma, 300, RandomStream(7, 0));
  CHECK(other_seed.lambda_sim_mean != a.lambda_sim_mean);
}

TEST_CASE("simulation standard error falls as 1/sqrt(n)") {
  const NoisyCase c = noisy_case(15.0, 8);
  const double sigma = deg_to_rad(15.0);
  const RandomStream rng(9, 0);
  const auto se = [&](int n) {
    return mc_debias(c.f.model, c.template_torsions, c.d, sigma, n, rng).lambda_sim_stderr;
  };
  const Eigen::Vector3d s250 = se(250), s1000 = se(1000), s4000 = se(4000);
  for (int j = 0; j < 3; ++j) {
    CHECK(s250(j) / s1000(j) == doctest::Approx(2.0).epsilon(0.15));
    CHECK(s1000(j) / s4000(j) == doctest::Approx(2.0).epsilon(0.15));
  }
}

TEST_CASE("mc_debias validates its arguments") {
  const NoisyCase c = noisy_case(5.0, 10);
  const RandomStream rng(1, 1);
  CHECK_THROWS_AS(mc_debias(c.f.model, c.template_torsions, c.d, -0.1, 10, rng), InputError);
  CHECK_THROWS_AS(mc_debias(c.f.model, c.template_torsions, c.d, 0.1, 0, rng), InputError);
  CHECK_THROWS_AS(simex_extrapolate(c.f.model, c.template_torsions, c.d, 0.1, {}, 10, rng),
                  InputError);
  CHECK_THROWS_AS(simex_extrapolate(c.f.model, c.template_torsions, c.d, 0.1, {-1.0}, 10, rng),
                  InputError);
}

TEST_CASE("auto sigma uses the residual estimate") {
  const NoisyCase c = noisy_case(10.0, 11);
  const RandomStream rng(12, 0);
  const DebiasResult a = mc_debias_auto(c.f.model, c.template_torsions, c.d, 100, rng);
  const DesignMatrix design = c.f.model.design(c.template_torsions);
  const double expected = estimate_sigma(ols_fit(design, c.d),
                                         sensitivity(c.f.model, c.template_torsions), design);
  CHECK(a.sigma_used == expected);
  const DebiasResult m = mc_debias(c.f.model, c.template_torsions, c.d, expected, 100, rng);
  CHECK(a.lambda_tilde == m.lambda_tilde);
}

TEST_CASE("SIMEX with a single unit grid point reproduces mc_debias") {
  const NoisyCase c = noisy_case(15.0, 13);
  const RandomStream rng(14, 0);
  const double sigma = deg_to_rad(15.0);
  const DebiasResult r = mc_debias(c.f.model, c.template_torsions, c.d, sigma, 200, rng);
  const SimexResult sx = simex_extrapolate(c.f.model, c.template_torsions, c.d, sigma, {1.0}, 200, rng);
  CHECK(sx.linear_fallback);
  CHECK(sx.extrapolated == r.lambda_tilde);
  CHECK(sx.means.size() == 1);
  CHECK(sx.means[0] == r.lambda_sim_mean);

  const SimexResult quad = simex_extrapolate(c.f.model, c.template_torsions, c.d, sigma,
                                             {0.5, 1.0, 1.5, 2.0}, 200, rng);
  CHECK_FALSE(quad.linear_fallback);
  CHECK(quad.means[1] == r.lambda_sim_mean);
}

TEST_CASE("SIMEX through two grid points interpolates them") {
  const NoisyCase c = noisy_case(15.0, 15);
  const RandomStream rng(16, 0);
  const SimexResult sx = simex_extrapolate(c.f.model, c.template_torsions, c.d, deg_to_rad(15.0),
                                           {1.0, 2.0}, 200, rng);
  // a k + b k^2 through (1, y1) and (2, y2), evaluated at k = -1.
  for (int j = 0; j < 3; ++j) {
    const double y1 = sx.means[0](j) - sx.lambda_ols(j);
    const double y2 = sx.means[1](j) - sx.lambda_ols(j);
    const double b = (y2 - 2.0 * y1) / 2.0;
    const double a = y1 - b;
    CHECK(sx.extrapolated(j) == doctest::Approx(sx.lambda_ols(j) - a + b).epsilon(1e-12));
  }
}

TEST_CASE("additive bias prediction") {
  const FragmentSetup f = make_fragment(reference().clean, 0, 8);
  const SaupeTensor s = saupe_from_eigen(Eigen::Vector3d(-1.0e-3, 0.3e-3, 0.7e-3),
                                         rotation_zyz(10, 70, 200));
  CHECK(additive_bias_predict(s, f.design, 0.0) == Eigen::Vector3d::Zero());
  CHECK_THROWS_AS(additive_bias_predict(s, f.design, -1.0), InputError);

  const double sigma_add = 2e-5;
  const Eigen::Vector3d bias = additive_bias_predict(s, f.design, sigma_add);
  CHECK(bias(0) < 0.0);
  CHECK(bias(2) > 0.0);
  CHECK(additive_bias_predict(s, f.design, 2.0 * sigma_add).isApprox(4.0 * bias, 1e-12));

  // Oracle: antithetic Monte Carlo of eigenvalue shifts under Gaussian
  // perturbations of s with covariance sigma^2 (A^T A)^{-1}.
  const Mat5 cov = (f.design.a.transpose() * f.design.a).inverse() * sigma_add * sigma_add;
  const Mat5 chol = cov.llt().matrixL();
  const Vec5 s0 = from_tensor(s);
  const Eigen::Vector3d base = eig_sorted(s.matrix()).values;
  std::mt19937_64 gen(17);
  std::normal_distribution<double> n;
  Eigen::Vector3d sum = Eigen::Vector3d::Zero();
  const int pairs = 20000;
  for (int i = 0; i < pairs; ++i) {
    Vec5 z;
    for (int k = 0; k < 5; ++k) z(k) = n(gen);
    const Vec5 ds = chol * z;
    sum += 0.5 * (eig_sorted(to_tensor(s0 + ds).matrix()).values +
                  eig_sorted(to_tensor(s0 - ds).matrix()).values) -
           base;
  }
  const Eigen::Vector3d mc = sum / pairs;
  CHECK(bias(0) == doctest::Approx(mc(0)).epsilon(0.05));
  CHECK(bias(2) == doctest::Approx(mc(2)).epsilon(0.05));
  CHECK(std::abs(bias(1) - mc(1)) < 0.05 * std::abs(bias(2)));
}

TEST_CASE("additive bias needs separated eigenvalues") {
  const FragmentSetup f = make_fragment(reference().clean, 0, 8);
  const SaupeTensor axial = saupe_from_eigen(Eigen::Vector3d(-0.5e-3, -0.5e-3, 1e-3),
                                             Mat3::Identity());
  CHECK_THROWS_AS(additive_bias_predict(axial, f.design, 1e-5), NumericalError);
  const SaupeTensor close = saupe_from_eigen(
      Eigen::Vector3d(-1e-3, 0.5e-3 - 2e-7, 0.5e-3 + 2e-7), Mat3::Identity());
  CHECK_THROWS_AS(additive_bias_predict(close, f.design, 1e-5), NumericalError);
  CHECK_NOTHROW(additive_bias_predict(close, f.design, 1e-5, 1e-7));
}

TEST_CASE("additive_debias subtracts the prediction and re-centres") {
  const FragmentSetup f = make_fragment(reference().clean, 0, 8);
  const SaupeTensor s = saupe_from_eigen(Eigen::Vector3d(-1.0e-3, 0.3e-3, 0.7e-3),
                                         rotation_zyz(10, 70, 200));
  const Eigen::VectorXd d =
      add_coupling_noise(f.design.a * from_tensor(s), 3e-5, RandomStream(18, 0));
  const FitResult fit = ols_fit(f.design, d);
  CHECK((additive_debias(fit, f.design, 0.0) - fit.eigen.values).norm() < 1e-18);
  const Eigen::Vector3d corrected = additive_debias(fit, f.design, 3e-5);
  CHECK(std::abs(corrected.sum()) < 1e-18);
  Eigen::Vector3d expected = fit.eigen.values - additive_bias_predict(fit.s_tensor, f.design, 3e-5);
  expected.array() -= expected.mean();
  CHECK((corrected - expected).norm() < 1e-18);
}

TEST_CASE("bound on the additive bias") {
  CHECK(bound_additive_bias(1.35, 1e-4, 2e-5) == doctest::Approx(1.6e-5).epsilon(0.02));
  CHECK(bound_additive_bias(1.35, 1e-4, 2e-5) == doctest::Approx(1.62e-5).epsilon(1e-12));
  CHECK(bound_additive_bias(1.35, 1e-4, 0.0) == 0.0);
  CHECK_THROWS_AS(bound_additive_bias(1.35, 0.0, 1e-5), InputError);

  const FragmentSetup f = make_fragment(reference().clean, 0, 8);
  const Mat5 inv = (f.design.a.transpose() * f.design.a).inverse();
  CHECK(trace_inverse_normal(f.design) == doctest::Approx(inv.trace()).epsilon(1e-10));
  CHECK(bound_additive_bias(f.design, 1e-4, 2e-5) ==
        doctest::Approx(3.0 * inv.trace() * 4e-10 / 1e-4).epsilon(1e-10));
}
