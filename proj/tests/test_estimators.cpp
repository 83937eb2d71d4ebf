#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "rdcbias/errors.hpp"
#include "rdcbias/estimators.hpp"
#include "rdcbias/pdb.hpp"
#include "support.hpp"

using namespace rdcbias;

namespace {

// Six icosahedral axes. Their outer products form a spherical 4-design, so
// sum_i (v_i^T S v_i)^2 is proportional to |S|_F^2 for traceless S.
BondVectorSet icosahedral_bonds() {
  const double g = (1.0 + std::sqrt(5.0)) / 2.0;
  const Vec3 axes[] = {{0, 1, g}, {0, -1, g}, {1, g, 0}, {-1, g, 0}, {g, 0, 1}, {g, 0, -1}};
  BondVectorSet out;
  int k = 1;
  for (const Vec3& a : axes) out.push_back({{BondKind::NH, k++}, 0, a.normalized()});
  return out;
}

DesignMatrix ubiquitin_design() {
  const BackboneStructure u =
      read_pdb_backbone(test::data_path("1ubq.pdb")).with_amide_hydrogens().slice(0, 8);
  return build_design(bond_vectors(u, kAllBondKinds));
}

Vec5 s_of_field(const Mat3& b) { return from_tensor(saupe_from_field(FieldTensor(b))); }

Mat3 random_feasible_field(std::mt19937_64& gen) {
  std::gamma_distribution<double> gamma(0.5, 1.0);
  Eigen::Vector3d w(gamma(gen), gamma(gen), gamma(gen));
  w /= w.sum();
  Mat3 b = compose(test::random_rotation(gen), w);
  return 0.5 * (b + b.transpose());
}

// Brute-force simplex projection: best feasible candidate over every
// support set, each solved in closed form.
Eigen::Vector3d simplex_oracle(const Eigen::Vector3d& y) {
  Eigen::Vector3d best = Eigen::Vector3d::Zero();
  double best_dist = std::numeric_limits<double>::infinity();
  for (int mask = 1; mask < 8; ++mask) {
    int size = 0;
    double sum = 0.0;
    for (int i = 0; i < 3; ++i) {
      if (mask & (1 << i)) {
        ++size;
        sum += y(i);
      }
    }
    const double tau = (sum - 1.0) / size;
    Eigen::Vector3d x = Eigen::Vector3d::Zero();
    bool feasible = true;
    for (int i = 0; i < 3; ++i) {
      if (mask & (1 << i)) {
        x(i) = y(i) - tau;
        if (x(i) < 0.0) feasible = false;
      }
    }
    if (feasible && (x - y).norm() < best_dist) {
      best_dist = (x - y).norm();
      best = x;
    }
  }
  return best;
}

}  // namespace

TEST_CASE("design_row examples") {
  Vec5 expected;
  expected << -1, -1, 0, 0, 0;
  CHECK(design_row(Vec3(1, 0, 0)) == expected);
  expected << 1, 0, 0, 0, 0;
  CHECK(design_row(Vec3(0, 1, 0)) == expected);
  const double r = 1.0 / std::sqrt(2.0);
  const Vec5 row = design_row(Vec3(r, r, 0));
  expected << 0, -0.5, 1, 0, 0;
  CHECK((row - expected).norm() < 1e-15);
  CHECK_THROWS_AS(design_row(Vec3(1, 1, 0)), InputError);
}

TEST_CASE("design matrix of residues 1-8 has full rank") {
  const DesignMatrix a = ubiquitin_design();
  CHECK(a.m() == 21);
  CHECK(a.rows.size() == 21);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a.a);
  CHECK(svd.singularValues()(4) > 1e-3 * svd.singularValues()(0));
}

TEST_CASE("ols_fit gates on row count, sizes and rank") {
  BondVectorSet four = icosahedral_bonds();
  four.resize(4);
  const DesignMatrix small = build_design(four);
  CHECK(small.m() == 4);
  CHECK_THROWS_AS(ols_fit(small, Eigen::VectorXd::Zero(4)), InputError);

  const DesignMatrix six = build_design(icosahedral_bonds());
  CHECK_THROWS_AS(ols_fit(six, Eigen::VectorXd::Zero(5)), InputError);

  BondVectorSet same(6);
  for (auto& b : same) b.v = Vec3::UnitZ();
  CHECK_THROWS_AS(ols_fit(build_design(same), Eigen::VectorXd::Zero(6)), NumericalError);
}

TEST_CASE("ols_fit recovers noiseless tensors") {
  const DesignMatrix a = ubiquitin_design();
  CHECK(ols_fit(a, Eigen::VectorXd::Zero(a.m())).s_hat.norm() == 0.0);
  std::mt19937_64 gen(1);
  for (int rep = 0; rep < 20; ++rep) {
    const SaupeTensor s = test::random_saupe(gen);
    const Vec5 truth = from_tensor(s);
    const FitResult fit = ols_fit(a, a.a * truth);
    CHECK((fit.s_hat - truth).norm() / truth.norm() < 1e-10);
    CHECK(fit.rms < 1e-12);
    CHECK((fit.s_tensor.matrix() - to_tensor(fit.s_hat).matrix()).norm() == 0.0);
  }
}

TEST_CASE("ols_fit matches the normal equations and leaves orthogonal residuals") {
  const DesignMatrix a = ubiquitin_design();
  std::mt19937_64 gen(2);
  std::normal_distribution<double> n(0.0, 1e-3);
  for (int rep = 0; rep < 20; ++rep) {
    Eigen::VectorXd d(a.m());
    for (Eigen::Index i = 0; i < d.size(); ++i) d(i) = n(gen);
    const FitResult fit = ols_fit(a, d);
    const Mat5 normal = a.a.transpose() * a.a;
    const Vec5 direct = normal.ldlt().solve(a.a.transpose() * d);
    CHECK((fit.s_hat - direct).norm() < 1e-8 * std::max(1.0, direct.norm()));
    CHECK((a.a.transpose() * fit.residual).norm() < 1e-14);
    CHECK(fit.rms == doctest::Approx(fit.residual.norm() / std::sqrt(21.0)).epsilon(1e-12));
  }
}

TEST_CASE("simplex projection agrees with the active-set oracle") {
  std::mt19937_64 gen(3);
  std::normal_distribution<double> n(0.3, 1.0);
  for (int rep = 0; rep < 500; ++rep) {
    const Eigen::Vector3d y(n(gen), n(gen), n(gen));
    const Eigen::Vector3d x = project_simplex(y);
    CHECK((x - simplex_oracle(y)).norm() < 1e-12);
    CHECK(x.minCoeff() >= 0.0);
    CHECK(std::abs(x.sum() - 1.0) < 1e-12);
  }
}

TEST_CASE("spectrahedron projection") {
  CHECK((project_spectrahedron(Mat3::Identity() / 3.0).matrix() - Mat3::Identity() / 3.0).norm() <
        1e-15);
  const Mat3 p = project_spectrahedron(Eigen::Vector3d(2, 1, -1).asDiagonal()).matrix();
  const Eigen::Vector3d oracle = simplex_oracle(Eigen::Vector3d(2, 1, -1));
  CHECK(oracle == Eigen::Vector3d(1, 0, 0));
  CHECK((p - Mat3(oracle.asDiagonal())).norm() < 1e-14);

  std::mt19937_64 gen(4);
  std::normal_distribution<double> n;
  for (int rep = 0; rep < 100; ++rep) {
    Mat3 x, y;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        x(i, j) = n(gen);
        y(i, j) = n(gen);
      }
    x = 0.5 * (x + x.transpose()).eval();
    y = 0.5 * (y + y.transpose()).eval();
    const Mat3 px = project_spectrahedron(x).matrix();
    const Mat3 py = project_spectrahedron(y).matrix();
    CHECK(project_spectrahedron(px).matrix().isApprox(px, 1e-12));
    CHECK((px - py).norm() <= (x - y).norm() + 1e-12);
    CHECK(project_spectrahedron(px).is_physical());
    CHECK(std::abs(px.trace() - 1.0) < 1e-12);
  }
}

TEST_CASE("constrained fit returns the OLS solution in the interior") {
  const DesignMatrix a = ubiquitin_design();
  std::mt19937_64 gen(5);
  for (int rep = 0; rep < 10; ++rep) {
    const Vec5 truth = from_tensor(test::random_saupe(gen));
    const Eigen::VectorXd d = a.a * truth + 1e-5 * Eigen::VectorXd::Random(a.m());
    const FitResult ols = ols_fit(a, d);
    const ConstrainedFit c = constrained_fit(a, d);
    CHECK(c.converged);
    CHECK((c.fit.s_hat - ols.s_hat).norm() < 1e-10);
  }
}

TEST_CASE("constrained fit lands on the boundary found by grid search") {
  // With an isotropic design the objective depends on |S - S_ols|_F only, so
  // the optimum shares the OLS eigenvectors and has eigenvalue B_x = 0.
  const DesignMatrix a = build_design(icosahedral_bonds());
  std::mt19937_64 gen(6);
  for (int rep = 0; rep < 5; ++rep) {
    const Mat3 u = test::random_rotation(gen);
    const Eigen::Vector3d lambda_ols(-0.7 - 0.05 * rep, 0.1, 0.6 + 0.05 * rep);
    const Vec5 s_ols = from_tensor(SaupeTensor(0.5 * (compose(u, lambda_ols) +
                                                      compose(u, lambda_ols).transpose())));
    const Eigen::VectorXd d = a.a * s_ols;

    auto f_at = [&](double t) {
      Mat3 b = compose(u, Eigen::Vector3d(0.0, t, 1.0 - t));
      b = 0.5 * (b + b.transpose()).eval();
      return objective(a, d, s_of_field(b));
    };
    double best_t = 0.0;
    double best_f = f_at(0.0);
    for (int k = 1; k <= 100000; ++k) {
      const double t = k * 1e-5;
      if (const double f = f_at(t); f < best_f) {
        best_f = f;
        best_t = t;
      }
    }
    const double lo = std::max(0.0, best_t - 1e-5);
    for (int k = 0; k <= 2000; ++k) {
      const double t = lo + k * 1e-8;
      if (const double f = f_at(t); f < best_f) {
        best_f = f;
        best_t = t;
      }
    }

    const ConstrainedFit c = constrained_fit(a, d, {.tol = 1e-12});
    CHECK(c.converged);
    CHECK(c.fit.eigen.values(0) == doctest::Approx(-0.5).epsilon(1e-6));
    CHECK(std::abs(c.fit.eigen.values(1) - (3.0 * best_t - 1.0) / 2.0) < 1e-6);
    CHECK(objective(a, d, c.fit.s_hat) <= best_f * (1.0 + 1e-9));
  }
}

TEST_CASE("constrained fit on a real design is feasible, monotone and optimal") {
  const DesignMatrix a = ubiquitin_design();
  std::mt19937_64 gen(7);
  for (int rep = 0; rep < 5; ++rep) {
    const Mat3 u = test::random_rotation(gen);
    Mat3 s = compose(u, Eigen::Vector3d(-0.8, 0.2, 0.6));
    s = 0.5 * (s + s.transpose()).eval();
    const Eigen::VectorXd d = a.a * from_tensor(SaupeTensor(s));
    const ConstrainedFit c = constrained_fit(a, d, {.tol = 1e-10, .record_objective = true});
    CHECK(c.converged);
    CHECK(c.field.is_physical(1e-9));
    CHECK(std::abs(c.field.matrix().trace() - 1.0) < 1e-10);
    CHECK(eig_sorted(c.field.matrix()).values(0) >= -1e-9);
    const auto& trace = c.objective_trace;
    REQUIRE(trace.size() >= 2);
    for (std::size_t i = 1; i < trace.size(); ++i) {
      CHECK(trace[i] <= trace[i - 1] * (1.0 + 1e-12) + 1e-300);
    }
    const double f = objective(a, d, c.fit.s_hat);
    for (int k = 0; k < 2000; ++k) {
      CHECK(f <= objective(a, d, s_of_field(random_feasible_field(gen))) + 1e-15);
    }
  }
}

TEST_CASE("FragmentModel restricts rows to measured bonds") {
  std::mt19937_64 gen(8);
  const TorsionSet t = test::protein_like_torsions(3, gen);
  const FragmentModel all(test::residues(4), {BondKind::NH, BondKind::CCA, BondKind::CN});
  CHECK(all.design(t).m() == 9);
  const FragmentModel some(test::residues(4), {BondKind::NH, BondKind::CCA, BondKind::CN},
                           std::nullopt,
                           std::vector<BondId>{{BondKind::CN, 2}, {BondKind::NH, 2}},
                           1);
  const DesignMatrix d = some.design(t);
  REQUIRE(d.m() == 2);
  CHECK(d.rows[0] == BondId{BondKind::NH, 2});
  CHECK(d.rows[1] == BondId{BondKind::CN, 2});
}
