#pragma once

// RDC tables: delimited text with a header row.
//
//   residue,bond,value[,uncertainty][,units][,residue_name]
//
// Comma or tab separated; '#' starts a comment line. `units` is "hz" or
// "normalized" per row; without the column the caller's default applies.
// Columns value_hz / value_normalized may replace value + units.

#include <Eigen/Core>

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rdcbias/estimators.hpp"
#include "rdcbias/geometry.hpp"

namespace rdcbias {

enum class CouplingUnits { Hz, Normalized };

struct RdcRecord {
  int residue_number = 0;
  BondKind kind = BondKind::NH;
  std::optional<double> value_hz;
  std::optional<double> value_normalized;
  std::optional<double> uncertainty_hz;
  std::optional<double> uncertainty_normalized;
  std::optional<std::string> residue_name;
  int line = 0;
};

struct DmaxEntry {
  double gamma_product = 0.0;  // gamma_n * gamma_m, (rad/s/T)^2
  double bond_length = 0.0;    // Angstrom
  double dmax_hz = 0.0;
};

// D^max per bond kind. The defaults follow from the gyromagnetic ratios and
// bond lengths (N-H 1.02 A, C-CA 1.525 A, C-N 1.329 A) through
// D^max = -(mu0/4pi) gamma_n gamma_m h / (2 pi^2 r^3); N-H comes out near
// 23 kHz.
class DmaxTable {
 public:
  static DmaxTable standard();
  static double dmax_from_constants(double gamma_product, double bond_length_angstrom);

  void set(BondKind kind, DmaxEntry entry);
  void set_dmax(BondKind kind, double dmax_hz);
  const DmaxEntry& at(BondKind kind) const;  // InputError when missing
  bool contains(BondKind kind) const { return entries_.count(kind) != 0; }

 private:
  std::map<BondKind, DmaxEntry> entries_;
};

struct RdcEntry {
  BondId id;
  double d = 0.0;  // D / D^max
  std::optional<double> uncertainty;  // normalized
};

class RdcDataset {
 public:
  RdcDataset() = default;
  explicit RdcDataset(std::vector<RdcEntry> entries);  // InputError on duplicates

  const std::vector<RdcEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  const RdcEntry* find(const BondId& id) const;
  std::vector<BondId> ids() const;

  // Couplings in the row order of a design matrix. Every row must be present.
  Eigen::VectorXd couplings_for(const DesignMatrix& design) const;

  // InputError listing N-H rows that sit on prolines of the structure.
  void check_against(const BackboneStructure& structure) const;

 private:
  std::vector<RdcEntry> entries_;
};

// Strict row parsing; every rejected row is reported with its line and
// reason in one InputError.
std::vector<RdcRecord> parse_rdc_records(std::string_view text,
                                         CouplingUnits default_units = CouplingUnits::Hz);

// Divides Hz values by the bond's D^max; normalized values pass through.
// Rejects duplicate (residue, bond) pairs.
RdcDataset normalize_records(const std::vector<RdcRecord>& records, const DmaxTable& dmax);

RdcDataset parse_rdc_table(std::string_view text, const DmaxTable& dmax,
                           CouplingUnits default_units = CouplingUnits::Hz);

double to_hz(double normalized, BondKind kind, const DmaxTable& dmax);

// Table with columns residue,bond,value,units (normalized values).
std::string write_rdc_table(const RdcDataset& data);

std::string read_text_file(const std::string& path);

}  // namespace rdcbias
