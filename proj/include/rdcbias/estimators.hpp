#pragma once

// Saupe tensor estimation from normalized couplings d = A s.

#include <Eigen/Core>

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rdcbias/geometry.hpp"
#include "rdcbias/tensor.hpp"

namespace rdcbias {

using DesignRows = Eigen::Matrix<double, Eigen::Dynamic, 5>;

struct DesignMatrix {
  DesignRows a;
  std::vector<BondId> rows;  // provenance of each row

  Eigen::Index m() const { return a.rows(); }
};

struct FitResult {
  Vec5 s_hat = Vec5::Zero();
  SaupeTensor s_tensor;
  Eigen::VectorXd residual;  // d - A s_hat
  double rms = 0.0;          // ||r|| / sqrt(M)
  EigenSystem eigen;
};

// Coefficients of (S_yy, S_zz, S_xy, S_xz, S_yz) in v^T S v. Throws InputError
// unless |v| = 1 within 1e-9.
Vec5 design_row(const Vec3& v);

DesignMatrix build_design(const BondVectorSet& bonds);

// Smallest singular value relative to the largest below which A is treated
// as rank deficient.
inline constexpr double kRankTolerance = 1e-10;

// Least squares through the thin SVD of A. Throws InputError for M < 5 or a
// size mismatch and NumericalError when A is rank deficient.
FitResult ols_fit(const DesignMatrix& design, const Eigen::VectorXd& d);

// Fills residual, rms and eigen for a given s.
FitResult make_fit(const DesignMatrix& design, const Eigen::VectorXd& d, const Vec5& s);

double objective(const DesignMatrix& design, const Eigen::VectorXd& d, const Vec5& s);

// Euclidean projection onto {x : x >= 0, sum x = 1}.
Eigen::Vector3d project_simplex(const Eigen::Vector3d& x);

// Frobenius-nearest positive semidefinite matrix with unit trace.
FieldTensor project_spectrahedron(const Mat3& b);

struct ConstrainedOptions {
  double tol = 1e-10;
  int max_iter = 50'000;
  bool record_objective = false;
};

struct ConstrainedFit {
  FitResult fit;
  FieldTensor field{Mat3::Identity() / 3.0};
  int iterations = 0;
  bool converged = false;  // false: best iterate after max_iter
  std::vector<double> objective_trace;
};

// Least squares over physical Saupe tensors S = (3B - I)/2 with B PSD and
// Tr B = 1, by projected gradient on B with step 1/L. Returns the OLS fit
// unchanged when it is already physical.
ConstrainedFit constrained_fit(const DesignMatrix& design, const Eigen::VectorXd& d,
                               const ConstrainedOptions& options = {});

// Rebuilds a fragment from torsions and returns its design matrix. Rows can
// be restricted to a set of measured bonds; the row order then follows the
// structure, not the filter.
class FragmentModel {
 public:
  FragmentModel(std::vector<std::string> sequence, std::vector<BondKind> kinds,
                std::optional<ChainAnchor> anchor = std::nullopt,
                std::optional<std::vector<BondId>> measured = std::nullopt,
                int first_residue_number = 1);

  const std::vector<std::string>& sequence() const { return sequence_; }
  std::span<const BondKind> kinds() const { return kinds_; }
  int first_residue_number() const { return first_number_; }

  BackboneStructure structure(const TorsionSet& torsions) const;
  BondVectorSet bonds(const TorsionSet& torsions) const;
  DesignMatrix design(const TorsionSet& torsions) const;

 private:
  std::vector<std::string> sequence_;
  std::vector<BondKind> kinds_;
  std::optional<ChainAnchor> anchor_;
  std::optional<std::vector<BondId>> measured_;  // sorted
  int first_number_;
};

}  // namespace rdcbias
