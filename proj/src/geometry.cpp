#include "rdcbias/geometry.hpp"

#include <Eigen/Geometry>
#include <Eigen/LU>
#include <Eigen/SVD>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>

#include "rdcbias/errors.hpp"

namespace rdcbias {

namespace {

constexpr double kPi = std::numbers::pi;

// Parsons et al. natural-extension placement of d from (a, b, c).
Vec3 place_atom(const Vec3& a, const Vec3& b, const Vec3& c, double bond, double angle_rad,
                double torsion_rad) {
  const Vec3 bc = (c - b).normalized();
  const Vec3 n = (b - a).cross(bc).normalized();
  const Vec3 m = n.cross(bc);
  const double x = -bond * std::cos(angle_rad);
  const double y = bond * std::sin(angle_rad) * std::cos(torsion_rad);
  const double z = bond * std::sin(angle_rad) * std::sin(torsion_rad);
  return c + x * bc + y * m + z * n;
}

Vec3 amide_hydrogen(const Vec3& c_prev, const Vec3& n, const Vec3& ca) {
  const Vec3 u1 = (c_prev - n).normalized();
  const Vec3 u2 = (ca - n).normalized();
  return n - ideal::kBondNH * (u1 + u2).normalized();
}

bool within_tolerance(double actual, double target) {
  return std::abs(actual - target) <= 0.2 * target;
}

void check_bond(double actual, double target, const char* what, int residue_number) {
  if (!within_tolerance(actual, target)) {
    throw InputError(std::string(what) + " distance " + std::to_string(actual) +
                     " A at residue " + std::to_string(residue_number) +
                     " deviates more than 20% from " + std::to_string(target) + " A");
  }
}

std::string upper(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::toupper(ch)); });
  return s;
}

}  // namespace

double deg_to_rad(double deg) { return deg * kPi / 180.0; }
double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

double wrap_angle(double rad) {
  double r = std::remainder(rad, 2.0 * kPi);
  if (r <= -kPi) r += 2.0 * kPi;
  return r;
}

double angle_difference(double a, double b) { return wrap_angle(a - b); }

TorsionSet::TorsionSet(std::vector<TorsionLink> links) : links_(std::move(links)) {
  if (links_.empty()) throw InputError("torsion set must contain at least one link");
  for (auto& link : links_) {
    if (!std::isfinite(link.phi) || !std::isfinite(link.psi)) {
      throw InputError("torsion angles must be finite");
    }
    link.phi = wrap_angle(link.phi);
    link.psi = wrap_angle(link.psi);
  }
}

double TorsionSet::coordinate(std::size_t k) const {
  const auto& link = links_.at(k / 2);
  return (k % 2 == 0) ? link.psi : link.phi;
}

std::vector<double> TorsionSet::coordinates() const {
  std::vector<double> out;
  out.reserve(coordinate_count());
  for (const auto& link : links_) {
    out.push_back(link.psi);
    out.push_back(link.phi);
  }
  return out;
}

TorsionSet TorsionSet::from_coordinates(std::span<const double> coords) {
  if (coords.size() % 2 != 0) throw InputError("torsion coordinate count must be even");
  std::vector<TorsionLink> links(coords.size() / 2);
  for (std::size_t i = 0; i < links.size(); ++i) {
    links[i].psi = coords[2 * i];
    links[i].phi = coords[2 * i + 1];
  }
  return TorsionSet(std::move(links));
}

TorsionSet TorsionSet::shifted(std::size_t k, double delta) const {
  auto links = links_;
  auto& link = links.at(k / 2);
  if (k % 2 == 0) {
    link.psi += delta;
  } else {
    link.phi += delta;
  }
  return TorsionSet(std::move(links));
}

BackboneStructure::BackboneStructure(std::vector<BackboneResidue> residues)
    : residues_(std::move(residues)) {
  if (residues_.empty()) throw InputError("backbone structure has no residues");
  std::vector<Vec3> atoms;
  for (std::size_t i = 0; i < residues_.size(); ++i) {
    const auto& r = residues_[i];
    for (const Vec3* p : {&r.n, &r.ca, &r.c}) {
      if (!p->allFinite()) {
        throw InputError("non-finite coordinate at residue " + std::to_string(r.number));
      }
    }
    check_bond((r.ca - r.n).norm(), ideal::kBondNCa, "N-CA", r.number);
    check_bond((r.c - r.ca).norm(), ideal::kBondCaC, "CA-C", r.number);
    if (r.h) check_bond((*r.h - r.n).norm(), ideal::kBondNH, "N-H", r.number);
    if (i + 1 < residues_.size()) {
      check_bond((residues_[i + 1].n - r.c).norm(), ideal::kBondCN, "C-N", r.number);
    }
    atoms.push_back(r.n);
    atoms.push_back(r.ca);
    atoms.push_back(r.c);
    if (r.h) atoms.push_back(*r.h);
  }
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    for (std::size_t j = i + 1; j < atoms.size(); ++j) {
      if ((atoms[i] - atoms[j]).squaredNorm() < 1e-8) {
        throw InputError("two backbone atoms coincide");
      }
    }
  }
}

std::vector<std::string> BackboneStructure::sequence() const {
  std::vector<std::string> names;
  names.reserve(residues_.size());
  for (const auto& r : residues_) names.push_back(r.name);
  return names;
}

BackboneStructure BackboneStructure::slice(std::size_t first, std::size_t count) const {
  if (count == 0 || first + count > residues_.size()) {
    throw InputError("slice [" + std::to_string(first) + ", " + std::to_string(first + count) +
                     ") outside a chain of " + std::to_string(residues_.size()) + " residues");
  }
  return BackboneStructure(Unchecked{},
                           std::vector<BackboneResidue>(residues_.begin() + first,
                                                        residues_.begin() + first + count));
}

BackboneStructure BackboneStructure::with_amide_hydrogens() const {
  auto residues = residues_;
  for (std::size_t i = 1; i < residues.size(); ++i) {
    auto& r = residues[i];
    if (r.h || is_proline(r.name)) continue;
    r.h = amide_hydrogen(residues[i - 1].c, r.n, r.ca);
  }
  return BackboneStructure(Unchecked{}, std::move(residues));
}

ChainAnchor anchor_of(const BackboneResidue& residue) {
  return ChainAnchor{residue.n, residue.ca, residue.c};
}

BackboneStructure build_backbone(std::span<const std::string> sequence, const TorsionSet& torsions,
                                 const ChainAnchor* anchor, int first_number) {
  if (sequence.size() != torsions.size() + 1) {
    throw InputError("sequence of " + std::to_string(sequence.size()) + " residues needs " +
                     std::to_string(sequence.size() - 1) + " torsion links, got " +
                     std::to_string(torsions.size()));
  }
  const double ang_ncac = deg_to_rad(ideal::kAngleNCaC);
  const double ang_cacn = deg_to_rad(ideal::kAngleCaCN);
  const double ang_cnca = deg_to_rad(ideal::kAngleCNCa);
  const double omega = deg_to_rad(ideal::kOmega);

  Vec3 n0(0.0, 0.0, 0.0);
  Vec3 ca0(ideal::kBondNCa, 0.0, 0.0);
  Vec3 c0 = ca0 + ideal::kBondCaC * Vec3(-std::cos(ang_ncac), std::sin(ang_ncac), 0.0);
  if (anchor != nullptr) {
    const Vec3 e1 = (anchor->ca - anchor->n).normalized();
    Vec3 e2 = anchor->c - anchor->ca;
    e2 = (e2 - e2.dot(e1) * e1).normalized();
    Mat3 frame;
    frame.col(0) = e1;
    frame.col(1) = e2;
    frame.col(2) = e1.cross(e2);
    if (!frame.allFinite()) throw NumericalError("degenerate chain anchor");
    ca0 = anchor->n + frame * ca0;
    c0 = anchor->n + frame * c0;
    n0 = anchor->n;
  }

  std::vector<BackboneResidue> residues(sequence.size());
  residues[0] = BackboneResidue{sequence[0], first_number, n0, ca0, c0, std::nullopt};
  for (std::size_t i = 0; i + 1 < sequence.size(); ++i) {
    const auto& prev = residues[i];
    auto& next = residues[i + 1];
    next.name = sequence[i + 1];
    next.number = first_number + static_cast<int>(i) + 1;
    next.n = place_atom(prev.n, prev.ca, prev.c, ideal::kBondCN, ang_cacn, torsions[i].psi);
    next.ca = place_atom(prev.ca, prev.c, next.n, ideal::kBondNCa, ang_cnca, omega);
    next.c = place_atom(prev.c, next.n, next.ca, ideal::kBondCaC, ang_ncac, torsions[i].phi);
    if (!is_proline(next.name)) next.h = amide_hydrogen(prev.c, next.n, next.ca);
  }
  return BackboneStructure(BackboneStructure::Unchecked{}, std::move(residues));
}

double dihedral(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
  const Vec3 b1 = b - a;
  const Vec3 b2 = c - b;
  const Vec3 b3 = d - c;
  const Vec3 n1 = b1.cross(b2);
  const Vec3 n2 = b2.cross(b3);
  const double b2n = b2.norm();
  if (n1.norm() <= 1e-10 * b1.norm() * b2n || n2.norm() <= 1e-10 * b2n * b3.norm()) {
    throw NumericalError("collinear atoms: dihedral undefined");
  }
  const double x = n1.dot(n2);
  const double y = n1.cross(n2).dot(b2) / b2n;
  return wrap_angle(std::atan2(y, x));
}

TorsionSet extract_torsions(const BackboneStructure& structure) {
  if (structure.size() < 2) throw InputError("need at least two residues to extract torsions");
  std::vector<TorsionLink> links(structure.size() - 1);
  for (std::size_t i = 0; i + 1 < structure.size(); ++i) {
    const auto& r0 = structure[i];
    const auto& r1 = structure[i + 1];
    links[i].psi = dihedral(r0.n, r0.ca, r0.c, r1.n);
    links[i].phi = dihedral(r0.c, r1.n, r1.ca, r1.c);
  }
  return TorsionSet(std::move(links));
}

std::string to_string(BondKind kind) {
  switch (kind) {
    case BondKind::NH:
      return "N-H";
    case BondKind::CCA:
      return "C-CA";
    case BondKind::CN:
      return "C-N";
  }
  return "?";
}

BondKind parse_bond_kind(const std::string& text) {
  std::string t = upper(text);
  t.erase(std::remove_if(t.begin(), t.end(), [](char ch) { return ch == ' ' || ch == '\''; }),
          t.end());
  if (t == "N-H" || t == "NH" || t == "HN" || t == "H-N") return BondKind::NH;
  if (t == "C-CA" || t == "CA-C" || t == "CCA" || t == "CAC") return BondKind::CCA;
  if (t == "C-N" || t == "N-C" || t == "CN" || t == "NC") return BondKind::CN;
  throw InputError("unknown bond kind '" + text + "'");
}

bool is_proline(const std::string& residue_name) { return upper(residue_name) == "PRO"; }

BondVectorSet bond_vectors(const BackboneStructure& structure, std::span<const BondKind> kinds) {
  auto wanted = [&](BondKind k) { return std::find(kinds.begin(), kinds.end(), k) != kinds.end(); };
  auto unit = [](const Vec3& from, const Vec3& to, const BondId& id) {
    const Vec3 diff = to - from;
    const double len = diff.norm();
    if (!(len > 0.0)) {
      throw NumericalError("zero-length " + to_string(id.kind) + " bond at residue " +
                           std::to_string(id.residue_number));
    }
    return Vec3(diff / len);
  };

  BondVectorSet out;
  out.reserve(3 * structure.size());
  for (std::size_t i = 0; i + 1 < structure.size(); ++i) {
    const auto& r0 = structure[i];
    const auto& r1 = structure[i + 1];
    if (wanted(BondKind::CCA)) {
      BondId id{BondKind::CCA, r0.number};
      out.push_back({id, i, unit(r0.c, r0.ca, id)});
    }
    if (wanted(BondKind::CN)) {
      BondId id{BondKind::CN, r0.number};
      out.push_back({id, i, unit(r0.c, r1.n, id)});
    }
    if (wanted(BondKind::NH) && !is_proline(r1.name)) {
      BondId id{BondKind::NH, r1.number};
      if (!r1.h) {
        throw InputError("residue " + std::to_string(r1.number) + " has no amide hydrogen");
      }
      out.push_back({id, i + 1, unit(r1.n, *r1.h, id)});
    }
  }
  return out;
}

double backbone_rmsd(const BackboneStructure& a, const BackboneStructure& b) {
  if (a.size() != b.size()) throw InputError("RMSD needs structures of equal length");
  const auto count = static_cast<Eigen::Index>(3 * a.size());
  Eigen::Matrix3Xd p(3, count);
  Eigen::Matrix3Xd q(3, count);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto col = static_cast<Eigen::Index>(3 * i);
    p.col(col) = a[i].n;
    p.col(col + 1) = a[i].ca;
    p.col(col + 2) = a[i].c;
    q.col(col) = b[i].n;
    q.col(col + 1) = b[i].ca;
    q.col(col + 2) = b[i].c;
  }
  const Vec3 pc = p.rowwise().mean();
  const Vec3 qc = q.rowwise().mean();
  p.colwise() -= pc;
  q.colwise() -= qc;
  const Mat3 h = p * q.transpose();
  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 corr = Mat3::Identity();
  corr(2, 2) = (svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  const Mat3 rot = svd.matrixV() * corr * svd.matrixU().transpose();
  const double sq = (rot * p - q).squaredNorm();
  return std::sqrt(sq / static_cast<double>(count));
}

}  // namespace rdcbias
