#include "rdcbias/noise.hpp"

#include <Eigen/QR>

#include <cmath>

#include "rdcbias/errors.hpp"

namespace rdcbias {

namespace {

Eigen::MatrixXd column_basis(const DesignMatrix& design) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(design.a);
  return qr.householderQ() * Eigen::MatrixXd::Identity(design.m(), 5);
}

}  // namespace

TorsionSet perturb_torsions(const TorsionSet& torsions, double sigma, const RandomStream& rng) {
  if (!(sigma >= 0.0)) throw InputError("torsion noise sigma must be non-negative");
  if (sigma == 0.0) return torsions;
  std::vector<double> coords = torsions.coordinates();
  for (std::size_t k = 0; k < coords.size(); ++k) coords[k] += sigma * rng.normal(k);
  return TorsionSet::from_coordinates(coords);
}

Eigen::VectorXd add_coupling_noise(const Eigen::VectorXd& d, double sigma_add,
                                   const RandomStream& rng) {
  if (!(sigma_add >= 0.0)) throw InputError("coupling noise sigma must be non-negative");
  Eigen::VectorXd out = d;
  if (sigma_add == 0.0) return out;
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    out(i) += sigma_add * rng.normal(static_cast<std::uint64_t>(i));
  }
  return out;
}

SensitivityTensor sensitivity(const FragmentModel& model, const TorsionSet& template_torsions,
                              double step) {
  SensitivityTensor out;
  out.partials.reserve(template_torsions.coordinate_count());
  for (std::size_t k = 0; k < template_torsions.coordinate_count(); ++k) {
    const DesignMatrix plus = model.design(template_torsions.shifted(k, step));
    const DesignMatrix minus = model.design(template_torsions.shifted(k, -step));
    out.partials.push_back((plus.a - minus.a) / (2.0 * step));
  }
  return out;
}

Eigen::MatrixXd residual_projector(const DesignMatrix& design) {
  const Eigen::MatrixXd q = column_basis(design);
  return Eigen::MatrixXd::Identity(design.m(), design.m()) - q * q.transpose();
}

double projected_sensitivity(const SensitivityTensor& sens, const DesignMatrix& design,
                             const Vec5& s) {
  const Eigen::MatrixXd q = column_basis(design);
  double total = 0.0;
  for (const auto& g : sens.partials) {
    if (g.rows() != design.m()) throw InputError("sensitivity shape does not match design");
    const Eigen::VectorXd y = g * s;
    const Eigen::VectorXd py = y - q * (q.transpose() * y);
    total += py.squaredNorm();
  }
  return total;
}

double estimate_sigma(const FitResult& fit, const SensitivityTensor& sens,
                      const DesignMatrix& design) {
  if (fit.residual.size() != design.m()) throw InputError("fit does not match design");
  const double q = projected_sensitivity(sens, design, fit.s_hat);
  if (!(q > 0.0)) throw NumericalError("degenerate torsion sensitivity (q <= 0)");
  return fit.rms * std::sqrt(static_cast<double>(design.m()) / q);
}

double estimate_sigma_add(const FitResult& fit) {
  const auto m = static_cast<double>(fit.residual.size());
  if (m <= 5.0) throw InputError("additive noise estimate needs more than 5 couplings");
  return std::sqrt(m / (m - 5.0)) * fit.rms;
}

}  // namespace rdcbias
