#pragma once

// Saupe tensor algebra.
//
// The five independent entries of a symmetric traceless 3x3 tensor are kept
// in the order (S_yy, S_zz, S_xy, S_xz, S_yz); S_xx = -S_yy - S_zz.

#include <Eigen/Core>

#include "rdcbias/geometry.hpp"

namespace rdcbias {

using Vec5 = Eigen::Matrix<double, 5, 1>;
using Mat5 = Eigen::Matrix<double, 5, 5>;

// Symmetric traceless 3x3 order matrix.
class SaupeTensor {
 public:
  static constexpr double kTolerance = 1e-12;

  SaupeTensor() : m_(Mat3::Zero()) {}
  // Throws InputError unless m is symmetric and traceless within kTolerance.
  explicit SaupeTensor(const Mat3& m);

  const Mat3& matrix() const { return m_; }

 private:
  Mat3 m_;
};

// Ascending eigenvalues with matching orthonormal eigenvectors as columns.
// Each eigenvector's first component above 1e-14 in magnitude is positive.
struct EigenSystem {
  Eigen::Vector3d values = Eigen::Vector3d::Zero();
  Mat3 vectors = Mat3::Identity();
};

// B = (2S + I)/3; symmetric with unit trace.
class FieldTensor {
 public:
  explicit FieldTensor(const Mat3& b);

  const Mat3& matrix() const { return b_; }
  // Eigenvalues >= -tol.
  bool is_physical(double tol = 1e-9) const;

 private:
  Mat3 b_;
};

SaupeTensor to_tensor(const Vec5& s);
Vec5 from_tensor(const SaupeTensor& s);

// L*: the adjoint of to_tensor under the Frobenius inner product.
Vec5 adjoint_L(const Mat3& x);

// Throws InputError when m is not symmetric within 1e-10.
EigenSystem eig_sorted(const Mat3& m);

// d_i = v_i^T S v_i for every bond.
Eigen::VectorXd predict_rdc(const SaupeTensor& s, const BondVectorSet& bonds);

FieldTensor field_tensor(const SaupeTensor& s);
// S = (3B - I)/2.
SaupeTensor saupe_from_field(const FieldTensor& b);

// Axial magnitude and rhombicity in the common NMR convention: eigenvalues
// relabelled by decreasing magnitude as (zz, yy, xx), Da = zz/2 and
// R = (xx - yy)/zz. Other conventions differ by constant factors.
struct MagnitudeRhombicity {
  double da = 0.0;
  double rhombicity = 0.0;
};

MagnitudeRhombicity magnitude_rhombicity(const Eigen::Vector3d& eigenvalues);

// U diag(values) U^T.
Mat3 compose(const Mat3& u, const Eigen::Vector3d& values);

}  // namespace rdcbias
