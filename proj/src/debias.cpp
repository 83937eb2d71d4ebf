#include "rdcbias/debias.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <optional>
#include <set>

#include "rdcbias/errors.hpp"
#include "rdcbias/noise.hpp"
#include "rdcbias/parallel.hpp"

namespace rdcbias {

namespace {

struct SimulationSummary {
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  Eigen::Vector3d stderr_ = Eigen::Vector3d::Zero();
  int used = 0;
  int skipped = 0;
};

SimulationSummary simulate(const FragmentModel& model, const TorsionSet& template_torsions,
                           const Eigen::VectorXd& d, double sigma, int n_sim,
                           const RandomStream& rng, int threads) {
  std::vector<std::optional<Eigen::Vector3d>> draws(static_cast<std::size_t>(n_sim));
  parallel_for(draws.size(), threads, [&](std::size_t i) {
    const TorsionSet noisy = perturb_torsions(template_torsions, sigma, rng.substream(i));
    try {
      draws[i] = ols_fit(model.design(noisy), d).eigen.values;
    } catch (const NumericalError&) {
      draws[i] = std::nullopt;
    }
  });

  // Summed relative to the first usable draw, so identical draws average
  // to themselves exactly.
  SimulationSummary out;
  std::optional<Eigen::Vector3d> origin;
  Eigen::Vector3d sum = Eigen::Vector3d::Zero();
  for (const auto& draw : draws) {
    if (!draw) {
      ++out.skipped;
      continue;
    }
    if (!origin) origin = *draw;
    sum += *draw - *origin;
    ++out.used;
  }
  if (out.skipped > kMaxSkipFraction * n_sim) {
    throw NumericalError(std::to_string(out.skipped) + " of " + std::to_string(n_sim) +
                         " simulated designs were rank deficient");
  }
  out.mean = *origin + sum / out.used;
  if (out.used > 1) {
    Eigen::Vector3d sq = Eigen::Vector3d::Zero();
    for (const auto& draw : draws) {
      if (draw) sq += (*draw - out.mean).cwiseAbs2();
    }
    out.stderr_ = (sq / (out.used - 1)).cwiseSqrt() / std::sqrt(static_cast<double>(out.used));
  }
  return out;
}

void check_simulation_args(double sigma, int n_sim) {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
    throw InputError("torsion noise sigma must be finite and non-negative");
  }
  if (n_sim < 1) throw InputError("number of simulations must be at least 1");
}

}  // namespace

DebiasResult mc_debias(const FragmentModel& model, const TorsionSet& template_torsions,
                       const Eigen::VectorXd& d, double sigma, int n_sim, const RandomStream& rng,
                       int threads) {
  check_simulation_args(sigma, n_sim);
  const FitResult base = ols_fit(model.design(template_torsions), d);
  const SimulationSummary sim = simulate(model, template_torsions, d, sigma, n_sim, rng, threads);

  DebiasResult out;
  out.lambda_ols = base.eigen.values;
  out.lambda_sim_mean = sim.mean;
  out.lambda_sim_stderr = sim.stderr_;
  out.bias_hat = sim.mean - base.eigen.values;
  out.lambda_tilde = out.lambda_ols - out.bias_hat;
  out.n_sim = sim.used;
  out.n_skipped = sim.skipped;
  out.sigma_used = sigma;
  return out;
}

DebiasResult mc_debias_auto(const FragmentModel& model, const TorsionSet& template_torsions,
                            const Eigen::VectorXd& d, int n_sim, const RandomStream& rng,
                            int threads) {
  const DesignMatrix design = model.design(template_torsions);
  const FitResult fit = ols_fit(design, d);
  const double sigma = fit.rms == 0.0
                           ? 0.0
                           : estimate_sigma(fit, sensitivity(model, template_torsions), design);
  return mc_debias(model, template_torsions, d, sigma, n_sim, rng, threads);
}

SimexResult simex_extrapolate(const FragmentModel& model, const TorsionSet& template_torsions,
                              const Eigen::VectorXd& d, double sigma,
                              const std::vector<double>& k_grid, int n_sim,
                              const RandomStream& rng, int threads) {
  check_simulation_args(sigma, n_sim);
  if (k_grid.empty()) throw InputError("SIMEX grid must not be empty");
  for (double k : k_grid) {
    if (!(k > 0.0) || !std::isfinite(k)) throw InputError("SIMEX grid values must be positive");
  }

  SimexResult out;
  out.k_grid = k_grid;
  out.lambda_ols = ols_fit(model.design(template_torsions), d).eigen.values;
  for (double k : k_grid) {
    out.means.push_back(
        simulate(model, template_torsions, d, k * sigma, n_sim, rng, threads).mean);
  }

  const std::set<double> distinct(k_grid.begin(), k_grid.end());
  out.linear_fallback = distinct.size() < 2;
  for (int j = 0; j < 3; ++j) {
    // y(k) = mean(k) - Lambda(S_hat) fitted as a k + b k^2 (or a k).
    double skk = 0.0, sk3 = 0.0, sk4 = 0.0, sky = 0.0, sk2y = 0.0;
    for (std::size_t g = 0; g < k_grid.size(); ++g) {
      const double k = k_grid[g];
      const double y = out.means[g](j) - out.lambda_ols(j);
      skk += k * k;
      sk3 += k * k * k;
      sk4 += k * k * k * k;
      sky += k * y;
      sk2y += k * k * y;
    }
    double a = 0.0;
    double b = 0.0;
    if (out.linear_fallback) {
      a = sky / skk;
    } else {
      const double det = skk * sk4 - sk3 * sk3;
      a = (sky * sk4 - sk3 * sk2y) / det;
      b = (skk * sk2y - sk3 * sky) / det;
    }
    out.extrapolated(j) = out.lambda_ols(j) - a + b;
  }
  return out;
}

Eigen::Vector3d additive_bias_predict(const SaupeTensor& s_ref, const DesignMatrix& design,
                                      double sigma_add, double gap_min) {
  if (!(sigma_add >= 0.0)) throw InputError("additive noise sigma must be non-negative");
  if (sigma_add == 0.0) return Eigen::Vector3d::Zero();
  const EigenSystem es = eig_sorted(s_ref.matrix());
  for (int j = 0; j < 2; ++j) {
    if (es.values(j + 1) - es.values(j) < gap_min) {
      throw NumericalError("eigenvalue gap below " + std::to_string(gap_min) +
                           ": perturbation correction undefined");
    }
  }
  const Mat5 normal = design.a.transpose() * design.a;
  const Mat5 covariance = normal.ldlt().solve(Mat5::Identity()) * (sigma_add * sigma_add);
  Eigen::Vector3d bias = Eigen::Vector3d::Zero();
  for (int j = 0; j < 3; ++j) {
    for (int k = 0; k < 3; ++k) {
      if (k == j) continue;
      const Vec5 w = adjoint_L(es.vectors.col(k) * es.vectors.col(j).transpose());
      bias(j) += w.dot(covariance * w) / (es.values(j) - es.values(k));
    }
  }
  return bias;
}

Eigen::Vector3d additive_debias(const FitResult& fit, const DesignMatrix& design, double sigma_add,
                                double gap_min) {
  Eigen::Vector3d corrected =
      fit.eigen.values - additive_bias_predict(fit.s_tensor, design, sigma_add, gap_min);
  corrected.array() -= corrected.mean();
  return corrected;
}

double trace_inverse_normal(const DesignMatrix& design) {
  const Mat5 normal = design.a.transpose() * design.a;
  return normal.ldlt().solve(Mat5::Identity()).trace();
}

double bound_additive_bias(const DesignMatrix& design, double gap, double sigma_add) {
  return bound_additive_bias(trace_inverse_normal(design), gap, sigma_add);
}

double bound_additive_bias(double trace_inverse, double gap, double sigma_add) {
  if (!(gap > 0.0)) throw InputError("eigenvalue gap must be positive");
  return 3.0 * trace_inverse * sigma_add * sigma_add / gap;
}

}  // namespace rdcbias
