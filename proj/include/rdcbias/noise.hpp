#pragma once

// Noise models for torsions and couplings, and the residual-based estimators
// of their magnitudes.

#include <Eigen/Core>

#include <cstdint>
#include <vector>

#include "rdcbias/estimators.hpp"
#include "rdcbias/geometry.hpp"
#include "rdcbias/random.hpp"

namespace rdcbias {

struct NoiseSpec {
  double sigma_torsion = 0.0;  // radians
  double sigma_add = 0.0;      // normalized coupling units
  std::uint64_t seed = 0;
  std::uint64_t stream_id = 0;

  RandomStream stream() const { return RandomStream(seed, stream_id); }
};

// Adds sigma * N(0, 1) to every torsion coordinate; coordinate k reads
// variate k of the stream.
TorsionSet perturb_torsions(const TorsionSet& torsions, double sigma, const RandomStream& rng);

// d + sigma_add * eps with eps_i = rng.normal(i).
Eigen::VectorXd add_coupling_noise(const Eigen::VectorXd& d, double sigma_add,
                                   const RandomStream& rng);

// dA/d(theta_k) for every torsion coordinate k (see TorsionSet::coordinate).
struct SensitivityTensor {
  std::vector<DesignRows> partials;
};

inline constexpr double kSensitivityStep = 1e-5;

// Central differences of the rebuilt design matrix.
SensitivityTensor sensitivity(const FragmentModel& model, const TorsionSet& template_torsions,
                              double step = kSensitivityStep);

// P = I - A (A^T A)^{-1} A^T.
Eigen::MatrixXd residual_projector(const DesignMatrix& design);

// q = sum_k |P G_k s|^2, the unit-variance second moment s^T <F^T P F> s.
double projected_sensitivity(const SensitivityTensor& sens, const DesignMatrix& design,
                             const Vec5& s);

// Torsion noise magnitude (radians) implied by the OLS residual:
// RMS(r) * sqrt(M / q) with s_hat standing in for s and P, G taken at the
// template. Throws NumericalError when q <= 0.
double estimate_sigma(const FitResult& fit, const SensitivityTensor& sens,
                      const DesignMatrix& design);

// sqrt(M / (M - 5)) * RMS(r). Throws InputError for M <= 5.
double estimate_sigma_add(const FitResult& fit);

}  // namespace rdcbias
