#include "rdcbias/tensor.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <cmath>

#include "rdcbias/errors.hpp"

namespace rdcbias {

namespace {

double asymmetry(const Mat3& m) { return (m - m.transpose()).cwiseAbs().maxCoeff(); }

}  // namespace

SaupeTensor::SaupeTensor(const Mat3& m) : m_(m) {
  if (!m.allFinite()) throw InputError("Saupe tensor has non-finite entries");
  if (asymmetry(m) > kTolerance) throw InputError("Saupe tensor is not symmetric");
  if (std::abs(m.trace()) > kTolerance) throw InputError("Saupe tensor is not traceless");
}

FieldTensor::FieldTensor(const Mat3& b) : b_(b) {
  if (!b.allFinite()) throw InputError("field tensor has non-finite entries");
  if (asymmetry(b) > 1e-10) throw InputError("field tensor is not symmetric");
  if (std::abs(b.trace() - 1.0) > 1e-10) throw InputError("field tensor trace is not 1");
}

bool FieldTensor::is_physical(double tol) const {
  return eig_sorted(b_).values(0) >= -tol;
}

SaupeTensor to_tensor(const Vec5& s) {
  Mat3 m;
  m << -s(0) - s(1), s(2), s(3),
       s(2), s(0), s(4),
       s(3), s(4), s(1);
  return SaupeTensor(m);
}

Vec5 from_tensor(const SaupeTensor& s) {
  const Mat3& m = s.matrix();
  Vec5 v;
  v << m(1, 1), m(2, 2), m(0, 1), m(0, 2), m(1, 2);
  return v;
}

Vec5 adjoint_L(const Mat3& x) {
  Vec5 v;
  v << -x(0, 0) + x(1, 1), -x(0, 0) + x(2, 2), x(0, 1) + x(1, 0), x(0, 2) + x(2, 0),
      x(1, 2) + x(2, 1);
  return v;
}

EigenSystem eig_sorted(const Mat3& m) {
  if (!m.allFinite()) throw InputError("eigendecomposition of a non-finite matrix");
  if (asymmetry(m) > 1e-10) throw InputError("eigendecomposition needs a symmetric matrix");
  const Mat3 sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Mat3> solver(sym);
  if (solver.info() != Eigen::Success) throw NumericalError("3x3 eigensolver failed");
  EigenSystem out;
  out.values = solver.eigenvalues();  // ascending
  out.vectors = solver.eigenvectors();
  for (int j = 0; j < 3; ++j) {
    for (int i = 0; i < 3; ++i) {
      const double x = out.vectors(i, j);
      if (std::abs(x) > 1e-14) {
        if (x < 0.0) out.vectors.col(j) *= -1.0;
        break;
      }
    }
  }
  return out;
}

Eigen::VectorXd predict_rdc(const SaupeTensor& s, const BondVectorSet& bonds) {
  Eigen::VectorXd d(static_cast<Eigen::Index>(bonds.size()));
  for (std::size_t i = 0; i < bonds.size(); ++i) {
    const Vec3& v = bonds[i].v;
    d(static_cast<Eigen::Index>(i)) = v.dot(s.matrix() * v);
  }
  return d;
}

FieldTensor field_tensor(const SaupeTensor& s) {
  return FieldTensor((2.0 * s.matrix() + Mat3::Identity()) / 3.0);
}

SaupeTensor saupe_from_field(const FieldTensor& b) {
  Mat3 s = 0.5 * (3.0 * b.matrix() - Mat3::Identity());
  // Re-impose exact tracelessness lost to rounding in the affine map.
  s -= (s.trace() / 3.0) * Mat3::Identity();
  s = 0.5 * (s + s.transpose()).eval();
  return SaupeTensor(s);
}

MagnitudeRhombicity magnitude_rhombicity(const Eigen::Vector3d& eigenvalues) {
  std::array<double, 3> v{eigenvalues(0), eigenvalues(1), eigenvalues(2)};
  const double scale = std::max({std::abs(v[0]), std::abs(v[1]), std::abs(v[2])});
  if (scale == 0.0) throw NumericalError("magnitude/rhombicity undefined for a zero tensor");
  if (std::abs(v[0] + v[1] + v[2]) > 1e-8 * scale) {
    throw InputError("eigenvalues must sum to zero");
  }
  // Ties in magnitude are broken by value so the result does not depend on
  // the input order.
  std::sort(v.begin(), v.end(), [](double a, double b) {
    if (std::abs(a) != std::abs(b)) return std::abs(a) > std::abs(b);
    return a > b;
  });
  const double zz = v[0];
  const double yy = v[1];
  const double xx = v[2];
  return MagnitudeRhombicity{zz / 2.0, (xx - yy) / zz};
}

Mat3 compose(const Mat3& u, const Eigen::Vector3d& values) {
  return u * values.asDiagonal() * u.transpose();
}

}  // namespace rdcbias
