#include "rdcbias/estimators.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>

#include "rdcbias/errors.hpp"

namespace rdcbias {

namespace {

// (L* L)^{-1}; L* L = [[2, 1], [1, 2]] (+) 2 I_3.
Mat5 adjoint_normal_inverse() {
  Mat5 m = Mat5::Zero();
  m(0, 0) = 2.0 / 3.0;
  m(1, 1) = 2.0 / 3.0;
  m(0, 1) = -1.0 / 3.0;
  m(1, 0) = -1.0 / 3.0;
  m(2, 2) = m(3, 3) = m(4, 4) = 0.5;
  return m;
}

// (L* L)^{-1/2}.
Mat5 adjoint_normal_inverse_sqrt() {
  Eigen::SelfAdjointEigenSolver<Mat5> es(adjoint_normal_inverse());
  return es.eigenvectors() * es.eigenvalues().cwiseSqrt().asDiagonal() *
         es.eigenvectors().transpose();
}

Vec5 s_from_field(const Mat3& b) { return from_tensor(saupe_from_field(FieldTensor(b))); }

}  // namespace

Vec5 design_row(const Vec3& v) {
  if (!v.allFinite() || std::abs(v.norm() - 1.0) > 1e-9) {
    throw InputError("design row needs a unit bond vector");
  }
  const double x = v.x(), y = v.y(), z = v.z();
  Vec5 row;
  row << y * y - x * x, z * z - x * x, 2.0 * x * y, 2.0 * x * z, 2.0 * y * z;
  return row;
}

DesignMatrix build_design(const BondVectorSet& bonds) {
  if (bonds.empty()) throw InputError("design matrix needs at least one bond");
  DesignMatrix out;
  out.a.resize(static_cast<Eigen::Index>(bonds.size()), 5);
  out.rows.reserve(bonds.size());
  for (std::size_t i = 0; i < bonds.size(); ++i) {
    out.a.row(static_cast<Eigen::Index>(i)) = design_row(bonds[i].v).transpose();
    out.rows.push_back(bonds[i].id);
  }
  return out;
}

FitResult make_fit(const DesignMatrix& design, const Eigen::VectorXd& d, const Vec5& s) {
  FitResult fit;
  fit.s_hat = s;
  fit.s_tensor = to_tensor(s);
  fit.residual = d - design.a * s;
  fit.rms = fit.residual.norm() / std::sqrt(static_cast<double>(d.size()));
  fit.eigen = eig_sorted(fit.s_tensor.matrix());
  return fit;
}

double objective(const DesignMatrix& design, const Eigen::VectorXd& d, const Vec5& s) {
  return (d - design.a * s).squaredNorm();
}

FitResult ols_fit(const DesignMatrix& design, const Eigen::VectorXd& d) {
  const Eigen::Index m = design.m();
  if (d.size() != m) {
    throw InputError("coupling vector has " + std::to_string(d.size()) + " entries for " +
                     std::to_string(m) + " design rows");
  }
  if (m < 5) {
    throw InputError("at least 5 couplings are needed, got " + std::to_string(m));
  }
  if (!d.allFinite()) throw InputError("couplings must be finite");
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(design.a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  if (!(sv(4) > kRankTolerance * sv(0))) {
    throw NumericalError("design matrix is rank deficient");
  }
  const Eigen::VectorXd coeffs = (svd.matrixU().transpose() * d).cwiseQuotient(sv);
  const Vec5 s = svd.matrixV() * coeffs;
  return make_fit(design, d, s);
}

Eigen::Vector3d project_simplex(const Eigen::Vector3d& x) {
  std::array<double, 3> u{x(0), x(1), x(2)};
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumulative = 0.0;
  double theta = 0.0;
  for (int j = 0; j < 3; ++j) {
    cumulative += u[static_cast<std::size_t>(j)];
    const double t = (cumulative - 1.0) / (j + 1);
    if (u[static_cast<std::size_t>(j)] - t > 0.0) theta = t;
  }
  return (x.array() - theta).max(0.0).matrix();
}

FieldTensor project_spectrahedron(const Mat3& b) {
  const Mat3 sym = 0.5 * (b + b.transpose());
  const EigenSystem es = eig_sorted(sym);
  Mat3 out = compose(es.vectors, project_simplex(es.values));
  out = 0.5 * (out + out.transpose()).eval();
  return FieldTensor(out);
}

ConstrainedFit constrained_fit(const DesignMatrix& design, const Eigen::VectorXd& d,
                               const ConstrainedOptions& options) {
  ConstrainedFit result;
  result.fit = ols_fit(design, d);
  const FieldTensor ols_field = field_tensor(result.fit.s_tensor);
  if (eig_sorted(ols_field.matrix()).values(0) >= 0.0) {
    result.field = ols_field;
    result.converged = true;
    if (options.record_objective) {
      result.objective_trace.push_back(objective(design, d, result.fit.s_hat));
    }
    return result;
  }

  // Objective in B: f(B) = ||d - A s(B)||^2 with s(B) = 1.5 L^{-1}(B - I/3).
  // The Frobenius gradient over traceless directions is L(M^{-1} 1.5 g) with
  // g = -2 A^T r and M = L* L. Its Lipschitz constant is 4.5 times the top
  // eigenvalue of M^{-1/2} A^T A M^{-1/2}.
  const Mat5 normal = design.a.transpose() * design.a;
  const Mat5 msqrt = adjoint_normal_inverse_sqrt();
  const Mat5 pulled = msqrt * normal * msqrt;
  Eigen::SelfAdjointEigenSolver<Mat5> es(pulled);
  const double lipschitz = 4.5 * es.eigenvalues().maxCoeff();
  const Mat5 minv = adjoint_normal_inverse();
  const Eigen::VectorXd atd = design.a.transpose() * d;

  Mat3 b = project_spectrahedron(ols_field.matrix()).matrix();
  Vec5 s = s_from_field(b);
  double f = objective(design, d, s);
  Mat3 best_b = b;
  double best_f = f;
  if (options.record_objective) result.objective_trace.push_back(f);

  for (int iter = 1; iter <= options.max_iter; ++iter) {
    const Vec5 g = -2.0 * (atd - normal * s);
    const Mat3 grad = to_tensor(minv * (1.5 * g)).matrix();
    const Mat3 next = project_spectrahedron(b - grad / lipschitz).matrix();
    const double step = (next - b).norm() * lipschitz;
    b = next;
    s = s_from_field(b);
    f = objective(design, d, s);
    if (options.record_objective) result.objective_trace.push_back(f);
    if (f <= best_f) {
      best_f = f;
      best_b = b;
    }
    result.iterations = iter;
    if (step < options.tol) {
      result.converged = true;
      break;
    }
  }

  result.field = FieldTensor(best_b);
  result.fit = make_fit(design, d, s_from_field(best_b));
  return result;
}

FragmentModel::FragmentModel(std::vector<std::string> sequence, std::vector<BondKind> kinds,
                             std::optional<ChainAnchor> anchor,
                             std::optional<std::vector<BondId>> measured, int first_residue_number)
    : sequence_(std::move(sequence)),
      kinds_(std::move(kinds)),
      anchor_(std::move(anchor)),
      measured_(std::move(measured)),
      first_number_(first_residue_number) {
  if (sequence_.size() < 2) throw InputError("fragment needs at least two residues");
  if (kinds_.empty()) throw InputError("fragment needs at least one bond kind");
  if (measured_) std::sort(measured_->begin(), measured_->end());
}

BackboneStructure FragmentModel::structure(const TorsionSet& torsions) const {
  return build_backbone(sequence_, torsions, anchor_ ? &*anchor_ : nullptr, first_number_);
}

BondVectorSet FragmentModel::bonds(const TorsionSet& torsions) const {
  BondVectorSet all = bond_vectors(structure(torsions), kinds_);
  if (!measured_) return all;
  BondVectorSet kept;
  kept.reserve(all.size());
  for (auto& b : all) {
    if (std::binary_search(measured_->begin(), measured_->end(), b.id)) kept.push_back(b);
  }
  return kept;
}

DesignMatrix FragmentModel::design(const TorsionSet& torsions) const {
  return build_design(bonds(torsions));
}

}  // namespace rdcbias
