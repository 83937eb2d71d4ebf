#pragma once

// Simulation studies on ubiquitin fragments. Each study returns a table with
// one row per (grid value, statistic) plus the fully resolved configuration,
// and can be written as CSV with a JSON sidecar.

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rdcbias/debias.hpp"
#include "rdcbias/ensemble.hpp"
#include "rdcbias/estimators.hpp"
#include "rdcbias/geometry.hpp"
#include "rdcbias/random.hpp"
#include "rdcbias/tensor.hpp"

namespace rdcbias {

using Json = nlohmann::ordered_json;

// Default location of data/1ubq.pdb, fixed at build time.
std::string default_pdb_path();

// The crystal backbone (amide H added where missing) and its idealized
// rebuild from the extracted torsions, anchored on the first residue. The
// rebuild is the noiseless "true" structure of the synthetic studies.
struct ReferenceChain {
  BackboneStructure crystal;
  BackboneStructure clean;
};
ReferenceChain load_reference(const std::string& pdb_path, std::size_t residue_limit = 0);

// A window of the clean chain: its torsions, model (anchored on the window's
// first residue) and design matrix at the true torsions.
struct FragmentSetup {
  FragmentModel model;
  TorsionSet truth;
  DesignMatrix design;
};
FragmentSetup make_fragment(const BackboneStructure& chain, std::size_t first, std::size_t count,
                            std::span<const BondKind> kinds = kAllBondKinds);
// Same, addressed by inclusive residue numbers.
FragmentSetup make_fragment_by_number(const BackboneStructure& chain, int first_number,
                                      int last_number,
                                      std::span<const BondKind> kinds = kAllBondKinds);

// Rotation R = Rz(a) Ry(b) Rz(c), angles in degrees.
Mat3 rotation_zyz(double a_deg, double b_deg, double c_deg);

// Running mean and standard error, accumulated in call order.
class Accumulator {
 public:
  void add(double x);
  int count() const { return n_; }
  double mean() const;
  double stderr_of_mean() const;  // 0 for fewer than two samples

 private:
  int n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

struct StudyRow {
  double grid_value = 0.0;
  std::string statistic;
  double mean = 0.0;
  double std_error = 0.0;
  int count = 0;
};

struct StudyOutput {
  std::string name;
  std::string grid_name;
  std::vector<StudyRow> rows;
  Json config;  // resolved configuration including seed
  // Additional CSV artifacts: (file name suffix, contents).
  std::vector<std::pair<std::string, std::string>> extra_files;

  void add(double grid, const std::string& statistic, const Accumulator& acc);
  void add_value(double grid, const std::string& statistic, double value);
  // InputError when absent.
  const StudyRow& row(double grid, const std::string& statistic) const;
};

std::vector<std::string> experiment_names();

// Study defaults merged with `overrides`; unknown keys are rejected.
Json resolve_experiment_config(const std::string& name, const Json& overrides);

// Runs a study. `threads` affects speed only, never the output.
StudyOutput run_experiment(const std::string& name, const Json& overrides, int threads = 1);

// Table columns: experiment,grid,grid_value,statistic,mean,std_error,count.
std::string study_csv(const StudyOutput& study);
std::string csv_field(const std::string& text);  // RFC 4180 quoting
std::string format_number(double x);              // shortest round-trip form

// Writes <dir>/<name>.csv, <dir>/<name>.json and the extra files; returns
// the paths written.
std::vector<std::string> write_study(const StudyOutput& study, const std::string& dir);

// One noise realization of the synthetic multi-fragment study: every window
// gets an independent noisy template (noise sigma on its true torsions) and a
// Monte Carlo debias with the same sigma. Window w uses rng.substream(w).
struct MfrDraw {
  std::vector<FragmentEstimate> estimates;
  EnsembleSummary summary;  // with lambda_ave_tilde
};
MfrDraw mfr_synthetic_draw(const BackboneStructure& clean, std::span<const FragmentWindow> windows,
                           const SaupeTensor& s, double sigma, int n_sim, const RandomStream& rng,
                           int threads = 1);

}  // namespace rdcbias
