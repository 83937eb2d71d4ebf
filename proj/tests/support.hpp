#pragma once

#include <Eigen/Geometry>

#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "rdcbias/geometry.hpp"
#include "rdcbias/tensor.hpp"

namespace test {

inline std::string data_path(const std::string& name) {
  return std::string(RDCBIAS_TEST_DATA) + "/" + name;
}

inline std::vector<std::string> residues(std::size_t n, const std::string& name = "ALA") {
  return std::vector<std::string>(n, name);
}

inline rdcbias::TorsionSet random_torsions(std::size_t links, std::mt19937_64& gen) {
  std::uniform_real_distribution<double> u(-std::numbers::pi, std::numbers::pi);
  std::vector<rdcbias::TorsionLink> out;
  for (std::size_t i = 0; i < links; ++i) out.push_back({u(gen), u(gen)});
  return rdcbias::TorsionSet(out);
}

// Torsions in the helical and extended basins, which never bring atoms of a
// short chain into contact.
inline rdcbias::TorsionSet protein_like_torsions(std::size_t links, std::mt19937_64& gen) {
  std::normal_distribution<double> n(0.0, 0.2);
  std::bernoulli_distribution helix(0.5);
  std::vector<rdcbias::TorsionLink> out;
  for (std::size_t i = 0; i < links; ++i) {
    const bool h = helix(gen);
    out.push_back({rdcbias::deg_to_rad(h ? -60.0 : -120.0) + n(gen),
                   rdcbias::deg_to_rad(h ? -45.0 : 130.0) + n(gen)});
  }
  return rdcbias::TorsionSet(out);
}

inline rdcbias::Mat3 random_rotation(std::mt19937_64& gen) {
  std::normal_distribution<double> n;
  Eigen::Vector4d q(n(gen), n(gen), n(gen), n(gen));
  q.normalize();
  return Eigen::Quaterniond(q(0), q(1), q(2), q(3)).toRotationMatrix();
}

inline rdcbias::SaupeTensor random_saupe(std::mt19937_64& gen, double scale = 1e-3) {
  std::normal_distribution<double> n;
  rdcbias::Mat3 m;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) m(i, j) = n(gen);
  m = 0.5 * (m + m.transpose()).eval();
  m -= m.trace() / 3.0 * rdcbias::Mat3::Identity();
  return rdcbias::SaupeTensor(m * scale);
}

}  // namespace test
