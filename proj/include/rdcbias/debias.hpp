#pragma once

// Eigenvalue bias removal for the OLS Saupe tensor.
//
// Structural noise (torsion noise in the template) shrinks the OLS
// eigenvalues towards zero. mc_debias re-applies noise of the same size to
// the template, measures the mean shift of the eigenvalues and subtracts it
// once more:  tilde = ols - (<sim> - ols) = 2 ols - <sim>.
//
// Additive coupling noise instead pushes the extreme eigenvalues outwards;
// its second-order effect has a closed form (additive_bias_predict).

#include <Eigen/Core>

#include <vector>

#include "rdcbias/estimators.hpp"
#include "rdcbias/random.hpp"

namespace rdcbias {

struct DebiasResult {
  Eigen::Vector3d lambda_ols = Eigen::Vector3d::Zero();       // Lambda(S_hat)
  Eigen::Vector3d lambda_sim_mean = Eigen::Vector3d::Zero();  // <Lambda(S_sim)>
  Eigen::Vector3d lambda_sim_stderr = Eigen::Vector3d::Zero();
  Eigen::Vector3d bias_hat = Eigen::Vector3d::Zero();      // <sim> - ols
  Eigen::Vector3d lambda_tilde = Eigen::Vector3d::Zero();  // ols - bias_hat
  int n_sim = 0;      // simulated fits that were used
  int n_skipped = 0;  // rank-deficient simulated designs
  double sigma_used = 0.0;  // radians
};

// Skipped simulations beyond this fraction of n_sim raise NumericalError.
inline constexpr double kMaxSkipFraction = 0.01;

// Simulation i perturbs the template with rng.substream(i).
DebiasResult mc_debias(const FragmentModel& model, const TorsionSet& template_torsions,
                       const Eigen::VectorXd& d, double sigma, int n_sim, const RandomStream& rng,
                       int threads = 1);

// Same, with sigma replaced by the residual-based estimate at the template.
DebiasResult mc_debias_auto(const FragmentModel& model, const TorsionSet& template_torsions,
                            const Eigen::VectorXd& d, int n_sim, const RandomStream& rng,
                            int threads = 1);

struct SimexResult {
  Eigen::Vector3d lambda_ols = Eigen::Vector3d::Zero();
  Eigen::Vector3d extrapolated = Eigen::Vector3d::Zero();  // value at k = -1
  std::vector<double> k_grid;
  std::vector<Eigen::Vector3d> means;  // per grid point
  bool linear_fallback = false;        // fewer than two distinct k
};

// Mean OLS eigenvalues with template noise k * sigma for each k, fitted by a
// quadratic in k through (0, Lambda(S_hat)) and evaluated at k = -1. All grid
// points share the random draws of mc_debias (same substreams), so
// k_grid = {1} reproduces its lambda_tilde exactly.
SimexResult simex_extrapolate(const FragmentModel& model, const TorsionSet& template_torsions,
                              const Eigen::VectorXd& d, double sigma,
                              const std::vector<double>& k_grid, int n_sim,
                              const RandomStream& rng, int threads = 1);

inline constexpr double kGapMin = 1e-6;

// Second-order perturbation bias of each eigenvalue of the OLS estimate under
// additive coupling noise of standard deviation sigma_add, using the
// eigensystem of s_ref. Throws NumericalError when two eigenvalues are closer
// than gap_min.
Eigen::Vector3d additive_bias_predict(const SaupeTensor& s_ref, const DesignMatrix& design,
                                      double sigma_add, double gap_min = kGapMin);

// Lambda(S_hat) minus the predicted bias at S_hat, re-centred to sum to zero.
Eigen::Vector3d additive_debias(const FitResult& fit, const DesignMatrix& design, double sigma_add,
                                double gap_min = kGapMin);

// Tr((A^T A)^{-1}).
double trace_inverse_normal(const DesignMatrix& design);

// 3 Tr((A^T A)^{-1}) sigma_add^2 / gap.
double bound_additive_bias(const DesignMatrix& design, double gap, double sigma_add);
double bound_additive_bias(double trace_inverse, double gap, double sigma_add);

}  // namespace rdcbias
