#pragma once

// Multi-fragment estimation: fragment windows, eigenvalue averaging with
// residual-RMS selection, error metrics and random Saupe tensors.

#include <Eigen/Core>

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rdcbias/debias.hpp"
#include "rdcbias/estimators.hpp"
#include "rdcbias/random.hpp"

namespace rdcbias {

struct FragmentWindow {
  int id = 0;
  std::size_t first = 0;  // index of the first residue in the parent chain
  std::size_t count = 0;  // residues in the window (planes + 1)
  int first_number = 0;   // residue numbers, inclusive
  int last_number = 0;
};

// Every contiguous window of window_planes peptide planes among the first
// residue_limit residues (0: whole chain). Throws InputError if the window
// does not fit.
std::vector<FragmentWindow> enumerate_fragments(const BackboneStructure& structure,
                                                int window_planes = 7,
                                                std::size_t residue_limit = 0);

struct FragmentEstimate {
  FragmentWindow window;
  FitResult fit;
  std::optional<DebiasResult> debias;
  double rms = 0.0;
};

struct EnsembleSummary {
  Eigen::Vector3d lambda_ave_ols = Eigen::Vector3d::Zero();
  std::optional<Eigen::Vector3d> lambda_ave_tilde;
  int n_fragments = 0;
  std::string selection;
};

// Entrywise mean of the sorted eigenvalue triples of the selected fragments.
// With a threshold only fragments whose rms is strictly above (or below) it
// are used. use_tilde requires every selected fragment to carry a debias
// result. Throws InputError on an empty selection.
EnsembleSummary average_eigenvalues(std::span<const FragmentEstimate> estimates, bool use_tilde,
                                    std::optional<double> rms_threshold = std::nullopt,
                                    bool above = true);

// |est - truth| / |truth| for eigenvalue triples.
double fractional_error(const Eigen::Vector3d& estimate, const Eigen::Vector3d& truth);

// Orthogonal polar factor of a 3x3 matrix of standard normals
// (rng.normal(0..8)); Haar distributed on O(3).
Mat3 random_orthogonal(const RandomStream& rng);

struct RandomSaupe {
  SaupeTensor tensor;
  Eigen::Vector3d eigenvalues = Eigen::Vector3d::Zero();  // ascending
  Mat3 orientation = Mat3::Identity();
};

// One eigenvalue from U[-1e-3, 0], one from U[0, 1e-3], the third from the
// zero trace; orientation from random_orthogonal.
RandomSaupe random_saupe(const RandomStream& rng);

// Saupe tensor with the given eigenvalues and eigenvector frame.
SaupeTensor saupe_from_eigen(const Eigen::Vector3d& eigenvalues, const Mat3& orientation);

}  // namespace rdcbias
