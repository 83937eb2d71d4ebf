#include <doctest.h>

#include <cmath>
#include <random>

#include "rdcbias/errors.hpp"
#include "rdcbias/experiments.hpp"
#include "rdcbias/noise.hpp"
#include "rdcbias/random.hpp"
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

}  // namespace

TEST_CASE("random streams are deterministic, addressable and distinct") {
  const RandomStream a(7, 3);
  const RandomStream b(7, 3);
  CHECK(a.key() == b.key());
  CHECK(a.bits(12) == b.bits(12));
  CHECK(a.normal(5) == b.normal(5));
  CHECK(a.key() != RandomStream(7, 4).key());
  CHECK(a.key() != RandomStream(8, 3).key());
  CHECK(a.substream(1).key() != a.substream(2).key());
  CHECK(a.substream(1).substream(2).key() == b.substream(1).substream(2).key());
  for (std::uint64_t k = 0; k < 1000; ++k) {
    const double u = a.uniform(k);
    CHECK(u > 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("standard normals have unit variance") {
  const RandomStream r(1, 1);
  double sum = 0.0, sum2 = 0.0;
  const int n = 100000;
  for (int k = 0; k < n; ++k) {
    const double x = r.normal(static_cast<std::uint64_t>(k));
    sum += x;
    sum2 += x * x;
  }
  const double mean = sum / n;
  CHECK(std::abs(mean) < 4.0 / std::sqrt(n));
  CHECK(sum2 / n - mean * mean == doctest::Approx(1.0).epsilon(0.03));
}

TEST_CASE("perturb_torsions") {
  std::mt19937_64 gen(1);
  const TorsionSet t = test::random_torsions(6, gen);
  const RandomStream r(11, 0);
  const TorsionSet same = perturb_torsions(t, 0.0, r);
  for (std::size_t k = 0; k < t.coordinate_count(); ++k) CHECK(same.coordinate(k) == t.coordinate(k));

  const TorsionSet p1 = perturb_torsions(t, 0.2, r);
  const TorsionSet p2 = perturb_torsions(t, 0.2, RandomStream(11, 0));
  for (std::size_t k = 0; k < t.coordinate_count(); ++k) CHECK(p1.coordinate(k) == p2.coordinate(k));
  CHECK(perturb_torsions(t, 0.2, r.substream(1)).coordinate(0) != p1.coordinate(0));
  CHECK_THROWS_AS(perturb_torsions(t, -1.0, r), InputError);

  // Offset variance over 10^5 coordinates.
  std::vector<TorsionLink> zeros(50000);
  const double sigma = deg_to_rad(10.0);
  const TorsionSet big(zeros);
  const TorsionSet noisy = perturb_torsions(big, sigma, RandomStream(5, 5));
  double sum2 = 0.0;
  for (std::size_t k = 0; k < noisy.coordinate_count(); ++k) {
    sum2 += std::pow(angle_difference(noisy.coordinate(k), 0.0), 2);
  }
  CHECK(sum2 / 1e5 == doctest::Approx(sigma * sigma).epsilon(0.03));
}

TEST_CASE("add_coupling_noise") {
  const Eigen::VectorXd d = Eigen::VectorXd::LinSpaced(100000, -1e-3, 1e-3);
  const RandomStream r(3, 9);
  CHECK(add_coupling_noise(d, 0.0, r) == d);
  const double sigma = 2e-5;
  const Eigen::VectorXd noisy = add_coupling_noise(d, sigma, r);
  CHECK(std::abs((noisy - d).mean()) < 3.0 * sigma / std::sqrt(1e5));
  CHECK(noisy == add_coupling_noise(d, sigma, RandomStream(3, 9)));
  CHECK_THROWS_AS(add_coupling_noise(d, -sigma, r), InputError);
}

TEST_CASE("sensitivity matches a one-sided difference and is step stable") {
  const FragmentSetup f = make_fragment(reference().clean, 0, 8);
  const SensitivityTensor g = sensitivity(f.model, f.truth);
  const SensitivityTensor g4 = sensitivity(f.model, f.truth, 1e-4);
  REQUIRE(g.partials.size() == f.truth.coordinate_count());
  const double delta = 1e-7;
  for (std::size_t k = 0; k < g.partials.size(); ++k) {
    const DesignRows forward =
        (f.model.design(f.truth.shifted(k, delta)).a - f.design.a) / delta;
    CHECK((forward - g.partials[k]).cwiseAbs().maxCoeff() < 1e-5);
    CHECK((g4.partials[k] - g.partials[k]).cwiseAbs().maxCoeff() < 1e-6);
  }
  // The first residue is anchored, so psi of residue 1 leaves its C-CA bond
  // in place and moves everything downstream.
  CHECK(g.partials.front().topRows(1).norm() == 0.0);
  CHECK(g.partials.front().norm() > 0.1);
}

TEST_CASE("residual projector identities") {
  const FragmentSetup f = make_fragment(reference().clean, 10, 8);
  const Eigen::MatrixXd p = residual_projector(f.design);
  const auto m = static_cast<double>(f.design.m());
  CHECK((p * p - p).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((p - p.transpose()).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(p.trace() == doctest::Approx(m - 5.0).epsilon(1e-8));
  CHECK((p * f.design.a).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("estimate_sigma is zero on consistent data and scale invariant") {
  const FragmentSetup f = make_fragment(reference().clean, 0, 8);
  const SaupeTensor s = fixed_saupe();
  const SensitivityTensor g = sensitivity(f.model, f.truth);
  const Eigen::VectorXd d = f.design.a * from_tensor(s);
  CHECK(estimate_sigma(ols_fit(f.design, d), g, f.design) < 1e-9);

  const TorsionSet noisy = perturb_torsions(f.truth, deg_to_rad(8.0), RandomStream(1, 2));
  const Eigen::VectorXd dn = f.model.design(noisy).a * from_tensor(s);
  const double base = estimate_sigma(ols_fit(f.design, dn), g, f.design);
  CHECK(base > 0.0);
  for (double c : {1e-3, 0.5, 7.0, 1e4}) {
    CHECK(estimate_sigma(ols_fit(f.design, c * dn), g, f.design) ==
          doctest::Approx(base).epsilon(1e-9));
  }
  CHECK_THROWS_AS(estimate_sigma(ols_fit(f.design, Eigen::VectorXd::Zero(f.design.m())), g,
                                 f.design),
                  NumericalError);
}

TEST_CASE("residual second moment matches q for small noise") {
  const FragmentSetup f = make_fragment(reference().clean, 0, 8);
  const Vec5 s = from_tensor(fixed_saupe());
  const SensitivityTensor g = sensitivity(f.model, f.truth);
  const double q = projected_sensitivity(g, f.design, s);
  const Eigen::VectorXd d = f.design.a * s;
  const double sigma = deg_to_rad(1.0);
  const RandomStream root(42, 0);
  double sum = 0.0;
  const int draws = 1000;
  for (int i = 0; i < draws; ++i) {
    const TorsionSet t = perturb_torsions(f.truth, sigma, root.substream(i));
    const FitResult fit = ols_fit(f.model.design(t), d);
    sum += fit.rms * fit.rms;
  }
  const double m = static_cast<double>(f.design.m());
  CHECK(m * (sum / draws) / (sigma * sigma) == doctest::Approx(q).epsilon(0.10));
}

TEST_CASE("estimate_sigma_add") {
  FitResult fit;
  fit.residual = Eigen::VectorXd::Zero(21);
  fit.rms = 0.0;
  CHECK(estimate_sigma_add(fit) == 0.0);
  fit.residual = Eigen::VectorXd::Zero(5);
  CHECK_THROWS_AS(estimate_sigma_add(fit), InputError);

  const FragmentSetup f = make_fragment(reference().clean, 0, 8);
  REQUIRE(f.design.m() == 21);
  const Eigen::VectorXd d = f.design.a * from_tensor(fixed_saupe());
  const double sigma_add = 5e-5;
  const RandomStream root(9, 9);
  double sum = 0.0;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    const double e = estimate_sigma_add(ols_fit(f.design, add_coupling_noise(d, sigma_add,
                                                                             root.substream(i))));
    sum += e * e;
  }
  CHECK(sum / draws == doctest::Approx(sigma_add * sigma_add).epsilon(0.02));
}
