#include "rdcbias/ensemble.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "rdcbias/errors.hpp"

namespace rdcbias {

std::vector<FragmentWindow> enumerate_fragments(const BackboneStructure& structure,
                                                int window_planes, std::size_t residue_limit) {
  if (window_planes < 1) throw InputError("window must span at least one peptide plane");
  const std::size_t available =
      residue_limit == 0 ? structure.size() : std::min(residue_limit, structure.size());
  const auto count = static_cast<std::size_t>(window_planes) + 1;
  if (count > available) {
    throw InputError("window of " + std::to_string(window_planes) + " planes needs " +
                     std::to_string(count) + " residues, chain has " + std::to_string(available));
  }
  std::vector<FragmentWindow> out;
  for (std::size_t first = 0; first + count <= available; ++first) {
    out.push_back(FragmentWindow{static_cast<int>(out.size()), first, count, structure[first].number,
                                 structure[first + count - 1].number});
  }
  return out;
}

EnsembleSummary average_eigenvalues(std::span<const FragmentEstimate> estimates, bool use_tilde,
                                    std::optional<double> rms_threshold, bool above) {
  EnsembleSummary out;
  Eigen::Vector3d tilde_sum = Eigen::Vector3d::Zero();
  for (const auto& e : estimates) {
    if (rms_threshold) {
      const bool keep = above ? e.rms > *rms_threshold : e.rms < *rms_threshold;
      if (!keep) continue;
    }
    out.lambda_ave_ols += e.fit.eigen.values;
    if (use_tilde) {
      if (!e.debias) {
        throw InputError("fragment " + std::to_string(e.window.id) + " has no debias result");
      }
      tilde_sum += e.debias->lambda_tilde;
    }
    ++out.n_fragments;
  }
  std::ostringstream rule;
  if (rms_threshold) {
    rule << "rms " << (above ? ">" : "<") << " " << *rms_threshold;
  } else {
    rule << "all";
  }
  out.selection = rule.str();
  if (out.n_fragments == 0) throw InputError("no fragment satisfies selection '" + out.selection + "'");
  out.lambda_ave_ols /= out.n_fragments;
  if (use_tilde) out.lambda_ave_tilde = tilde_sum / out.n_fragments;
  return out;
}

double fractional_error(const Eigen::Vector3d& estimate, const Eigen::Vector3d& truth) {
  const double denom = truth.norm();
  if (denom == 0.0) throw InputError("fractional error relative to a zero triple");
  return (estimate - truth).norm() / denom;
}

Mat3 random_orthogonal(const RandomStream& rng) {
  Mat3 g;
  for (int i = 0; i < 9; ++i) g(i / 3, i % 3) = rng.normal(static_cast<std::uint64_t>(i));
  Eigen::JacobiSVD<Mat3> svd(g, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return svd.matrixU() * svd.matrixV().transpose();
}

SaupeTensor saupe_from_eigen(const Eigen::Vector3d& eigenvalues, const Mat3& orientation) {
  Mat3 s = compose(orientation, eigenvalues);
  s = 0.5 * (s + s.transpose()).eval();
  s -= (s.trace() / 3.0) * Mat3::Identity();
  return SaupeTensor(s);
}

RandomSaupe random_saupe(const RandomStream& rng) {
  RandomSaupe out;
  const double neg = -1e-3 * rng.uniform(100);
  const double pos = 1e-3 * rng.uniform(101);
  Eigen::Vector3d values(neg, pos, -neg - pos);
  std::sort(values.data(), values.data() + 3);
  out.eigenvalues = values;
  out.orientation = random_orthogonal(rng.substream(1));
  out.tensor = saupe_from_eigen(values, out.orientation);
  return out;
}

}  // namespace rdcbias
