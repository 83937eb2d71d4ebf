#pragma once

// Backbone internal coordinates.
//
// A chain of n residues has n - 1 peptide links. Link i joins residue i to
// residue i + 1 and carries the two torsions that flank its peptide plane:
// psi of residue i (rotation about CA_i-C_i) and phi of residue i + 1
// (rotation about N_{i+1}-CA_{i+1}). The first residue therefore has no phi
// and the last has no psi. omega is fixed at 180 degrees.

#include <Eigen/Core>

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace rdcbias {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Idealized construction constants (Angstrom, degrees).
namespace ideal {
inline constexpr double kBondNCa = 1.458;
inline constexpr double kBondCaC = 1.525;
inline constexpr double kBondCN = 1.329;
inline constexpr double kBondNH = 1.01;
inline constexpr double kAngleNCaC = 111.2;
inline constexpr double kAngleCaCN = 116.2;
inline constexpr double kAngleCNCa = 121.7;
inline constexpr double kOmega = 180.0;
}  // namespace ideal

double deg_to_rad(double deg);
double rad_to_deg(double rad);

// Wraps an angle to (-pi, pi].
double wrap_angle(double rad);

// Smallest signed difference a - b on the circle, in (-pi, pi].
double angle_difference(double a, double b);

struct TorsionLink {
  double phi = 0.0;  // phi of the following residue, radians
  double psi = 0.0;  // psi of the preceding residue, radians
};

class TorsionSet {
 public:
  // Throws InputError on an empty list or a non-finite angle. Stored angles
  // are wrapped to (-pi, pi].
  explicit TorsionSet(std::vector<TorsionLink> links);

  std::size_t size() const { return links_.size(); }
  const TorsionLink& operator[](std::size_t i) const { return links_[i]; }
  std::span<const TorsionLink> links() const { return links_; }

  // Flat view in chain order: psi_0, phi_1, psi_1, phi_2, ... so that
  // coordinate 2i is links[i].psi and 2i + 1 is links[i].phi.
  std::size_t coordinate_count() const { return 2 * links_.size(); }
  double coordinate(std::size_t k) const;
  std::vector<double> coordinates() const;
  static TorsionSet from_coordinates(std::span<const double> coords);

  // Copy with coordinate k shifted by delta (radians).
  TorsionSet shifted(std::size_t k, double delta) const;

 private:
  std::vector<TorsionLink> links_;
};

struct BackboneResidue {
  std::string name;  // three-letter code
  int number = 0;    // residue sequence number
  Vec3 n = Vec3::Zero();
  Vec3 ca = Vec3::Zero();
  Vec3 c = Vec3::Zero();
  std::optional<Vec3> h;  // amide hydrogen
};

// Places the first residue: N at n, CA on the n->ca ray, C in the (n, ca, c)
// plane. Only directions are taken from ca and c.
struct ChainAnchor {
  Vec3 n;
  Vec3 ca;
  Vec3 c;
};

class BackboneStructure;
BackboneStructure build_backbone(std::span<const std::string> sequence, const TorsionSet& torsions,
                                 const ChainAnchor* anchor, int first_number);

class BackboneStructure {
 public:
  // Validates bonded distances (within 20% of the idealized values) and that
  // no two atoms of neighbouring residues coincide. Throws InputError.
  explicit BackboneStructure(std::vector<BackboneResidue> residues);

  std::size_t size() const { return residues_.size(); }
  const BackboneResidue& operator[](std::size_t i) const { return residues_[i]; }
  std::span<const BackboneResidue> residues() const { return residues_; }
  std::vector<std::string> sequence() const;

  // Contiguous sub-chain [first, first + count).
  BackboneStructure slice(std::size_t first, std::size_t count) const;

  // Copy where every non-proline residue after the first carries an amide H.
  // Existing hydrogens are kept.
  BackboneStructure with_amide_hydrogens() const;

 private:
  struct Unchecked {};
  BackboneStructure(Unchecked, std::vector<BackboneResidue> residues)
      : residues_(std::move(residues)) {}
  friend BackboneStructure build_backbone(std::span<const std::string>, const TorsionSet&,
                                          const ChainAnchor*, int);

  std::vector<BackboneResidue> residues_;
};

ChainAnchor anchor_of(const BackboneResidue& residue);

// Builds N, CA, C and amide H for every residue by sequential placement with
// idealized geometry. torsions.size() must equal sequence.size() - 1. Residue
// numbers start at 1. Without an anchor the first residue sits in a fixed
// canonical frame (N at the origin, CA on +x, C in the xy plane).
BackboneStructure build_backbone(std::span<const std::string> sequence, const TorsionSet& torsions,
                                 const ChainAnchor* anchor = nullptr, int first_number = 1);

// Standard dihedral a-b-c-d in (-pi, pi]. Throws NumericalError when either
// triple is collinear.
double dihedral(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d);

TorsionSet extract_torsions(const BackboneStructure& structure);

enum class BondKind { NH, CCA, CN };

inline constexpr BondKind kAllBondKinds[] = {BondKind::NH, BondKind::CCA, BondKind::CN};

std::string to_string(BondKind kind);
// Accepts "N-H", "NH", "HN", "C-CA", "CA-C", "C-N", "N-C" (case-insensitive).
BondKind parse_bond_kind(const std::string& text);

// One bond per row. N-H belongs to the residue owning the N; C-CA and C-N
// belong to the residue owning the carbonyl C.
struct BondId {
  BondKind kind = BondKind::NH;
  int residue_number = 0;
  friend bool operator==(const BondId&, const BondId&) = default;
  friend auto operator<=>(const BondId&, const BondId&) = default;
};

struct BondVector {
  BondId id;
  std::size_t residue_index = 0;  // position in the structure
  Vec3 v = Vec3::Zero();          // unit vector
};

using BondVectorSet = std::vector<BondVector>;

bool is_proline(const std::string& residue_name);

// Unit vectors of the peptide-plane bonds, plane by plane: for the plane
// between residues i and i + 1 these are C_i-CA_i, C_i-N_{i+1} and
// N_{i+1}-H_{i+1} (absent for proline). Vectors point from the first-named
// atom to the second. Kinds outside `kinds` are skipped.
BondVectorSet bond_vectors(const BackboneStructure& structure, std::span<const BondKind> kinds);

// Backbone (N, CA, C) RMSD after optimal superposition. Sizes must match.
double backbone_rmsd(const BackboneStructure& a, const BackboneStructure& b);

}  // namespace rdcbias
