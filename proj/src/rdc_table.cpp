#include "rdcbias/rdc_table.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "rdcbias/errors.hpp"

namespace rdcbias {

namespace {

constexpr double kMu0Over4Pi = 1e-7;       // T m / A
constexpr double kPlanck = 6.62607015e-34;  // J s
constexpr double kGammaH = 267.522e6;       // rad / (s T)
constexpr double kGammaN = -27.116e6;
constexpr double kGammaC = 67.2828e6;

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::vector<std::string> split(std::string_view line, char delim) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t next = line.find(delim, pos);
    out.push_back(trim(line.substr(pos, next == std::string_view::npos ? line.npos : next - pos)));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return out;
}

enum class Column { Residue, Bond, Value, ValueHz, ValueNormalized, Uncertainty, Units, Name };

std::optional<Column> column_of(const std::string& header) {
  const std::string h = lower(header);
  if (h == "residue" || h == "residue_number" || h == "resid" || h == "res") return Column::Residue;
  if (h == "bond" || h == "bond_kind" || h == "type") return Column::Bond;
  if (h == "value" || h == "rdc" || h == "coupling") return Column::Value;
  if (h == "value_hz" || h == "rdc_hz") return Column::ValueHz;
  if (h == "value_normalized" || h == "d") return Column::ValueNormalized;
  if (h == "uncertainty" || h == "error" || h == "sigma") return Column::Uncertainty;
  if (h == "units" || h == "unit") return Column::Units;
  if (h == "residue_name" || h == "resname") return Column::Name;
  return std::nullopt;
}

bool parse_double(const std::string& text, double& out) {
  if (text.empty()) return false;
  try {
    std::size_t used = 0;
    out = std::stod(text, &used);
    return used == text.size() && std::isfinite(out);
  } catch (const std::exception&) {
    return false;
  }
}

bool parse_int(const std::string& text, int& out) {
  if (text.empty()) return false;
  try {
    std::size_t used = 0;
    out = std::stoi(text, &used);
    return used == text.size();
  } catch (const std::exception&) {
    return false;
  }
}

}  // namespace

double DmaxTable::dmax_from_constants(double gamma_product, double bond_length_angstrom) {
  if (!(bond_length_angstrom > 0.0)) throw InputError("bond length must be positive");
  const double r = bond_length_angstrom * 1e-10;
  return -kMu0Over4Pi * gamma_product * kPlanck /
         (2.0 * std::numbers::pi * std::numbers::pi * r * r * r);
}

DmaxTable DmaxTable::standard() {
  DmaxTable t;
  auto add = [&](BondKind kind, double gg, double r) {
    t.set(kind, {gg, r, dmax_from_constants(gg, r)});
  };
  add(BondKind::NH, kGammaN * kGammaH, 1.02);
  add(BondKind::CCA, kGammaC * kGammaC, 1.525);
  add(BondKind::CN, kGammaC * kGammaN, 1.329);
  return t;
}

void DmaxTable::set(BondKind kind, DmaxEntry entry) {
  if (!(entry.dmax_hz != 0.0) || !std::isfinite(entry.dmax_hz)) {
    throw InputError("D^max for " + to_string(kind) + " must be finite and nonzero");
  }
  entries_[kind] = entry;
}

void DmaxTable::set_dmax(BondKind kind, double dmax_hz) {
  DmaxEntry entry = contains(kind) ? entries_.at(kind) : DmaxEntry{};
  entry.dmax_hz = dmax_hz;
  set(kind, entry);
}

const DmaxEntry& DmaxTable::at(BondKind kind) const {
  const auto it = entries_.find(kind);
  if (it == entries_.end()) throw InputError("no D^max for bond kind " + to_string(kind));
  return it->second;
}

RdcDataset::RdcDataset(std::vector<RdcEntry> entries) : entries_(std::move(entries)) {
  std::vector<BondId> ids = this->ids();
  std::sort(ids.begin(), ids.end());
  const auto dup = std::adjacent_find(ids.begin(), ids.end());
  if (dup != ids.end()) {
    throw InputError("duplicate coupling for residue " + std::to_string(dup->residue_number) +
                     " bond " + to_string(dup->kind));
  }
}

const RdcEntry* RdcDataset::find(const BondId& id) const {
  for (const auto& e : entries_) {
    if (e.id == id) return &e;
  }
  return nullptr;
}

std::vector<BondId> RdcDataset::ids() const {
  std::vector<BondId> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.id);
  return out;
}

Eigen::VectorXd RdcDataset::couplings_for(const DesignMatrix& design) const {
  Eigen::VectorXd d(design.m());
  for (std::size_t i = 0; i < design.rows.size(); ++i) {
    const RdcEntry* e = find(design.rows[i]);
    if (!e) {
      throw InputError("no coupling for residue " + std::to_string(design.rows[i].residue_number) +
                       " bond " + to_string(design.rows[i].kind));
    }
    d(static_cast<Eigen::Index>(i)) = e->d;
  }
  return d;
}

void RdcDataset::check_against(const BackboneStructure& structure) const {
  std::string bad;
  for (const auto& e : entries_) {
    if (e.id.kind != BondKind::NH) continue;
    for (const auto& r : structure.residues()) {
      if (r.number == e.id.residue_number && is_proline(r.name)) {
        bad += (bad.empty() ? "" : ", ") + std::to_string(r.number);
      }
    }
  }
  if (!bad.empty()) throw InputError("N-H couplings given for proline residues: " + bad);
}

std::vector<RdcRecord> parse_rdc_records(std::string_view text, CouplingUnits default_units) {
  std::vector<std::string> lines;
  {
    std::size_t pos = 0;
    while (pos <= text.size()) {
      const std::size_t nl = text.find('\n', pos);
      lines.emplace_back(text.substr(pos, nl == text.npos ? text.npos : nl - pos));
      pos = nl == text.npos ? text.size() + 1 : nl + 1;
    }
  }
  if (!lines.empty() && lines[0].rfind("\xEF\xBB\xBF", 0) == 0) lines[0].erase(0, 3);

  std::size_t header_line = 0;
  while (header_line < lines.size()) {
    const std::string t = trim(lines[header_line]);
    if (!t.empty() && t[0] != '#') break;
    ++header_line;
  }
  if (header_line == lines.size()) throw InputError("RDC table has no header row");

  const std::string& header_text = lines[header_line];
  const char delim = header_text.find('\t') != std::string::npos ? '\t' : ',';
  const std::vector<std::string> header = split(header_text, delim);
  std::vector<std::optional<Column>> columns;
  std::map<Column, std::size_t> where;
  for (std::size_t i = 0; i < header.size(); ++i) {
    const auto col = column_of(header[i]);
    if (!col) throw InputError("RDC table: unknown column '" + header[i] + "'");
    if (where.count(*col)) throw InputError("RDC table: repeated column '" + header[i] + "'");
    where[*col] = i;
    columns.push_back(col);
  }
  if (!where.count(Column::Residue) || !where.count(Column::Bond)) {
    throw InputError("RDC table header needs residue and bond columns");
  }
  const int value_columns = static_cast<int>(where.count(Column::Value)) +
                            static_cast<int>(where.count(Column::ValueHz)) +
                            static_cast<int>(where.count(Column::ValueNormalized));
  if (value_columns != 1) {
    throw InputError("RDC table header needs exactly one of value, value_hz, value_normalized");
  }
  if (where.count(Column::Units) && !where.count(Column::Value)) {
    throw InputError("RDC table: units column requires a plain value column");
  }

  std::vector<RdcRecord> out;
  std::vector<std::string> errors;
  for (std::size_t ln = header_line + 1; ln < lines.size(); ++ln) {
    const std::string t = trim(lines[ln]);
    if (t.empty() || t[0] == '#') continue;
    const int line_no = static_cast<int>(ln) + 1;
    auto fail = [&](const std::string& why) {
      errors.push_back("line " + std::to_string(line_no) + ": " + why);
    };
    const std::vector<std::string> cells = split(lines[ln], delim);
    if (cells.size() != header.size()) {
      fail("expected " + std::to_string(header.size()) + " fields, found " +
           std::to_string(cells.size()));
      continue;
    }
    auto cell = [&](Column c) -> const std::string* {
      const auto it = where.find(c);
      return it == where.end() ? nullptr : &cells[it->second];
    };

    RdcRecord rec;
    rec.line = line_no;
    if (!parse_int(*cell(Column::Residue), rec.residue_number)) {
      fail("bad residue number '" + *cell(Column::Residue) + "'");
      continue;
    }
    try {
      rec.kind = parse_bond_kind(*cell(Column::Bond));
    } catch (const InputError&) {
      fail("unknown bond kind '" + *cell(Column::Bond) + "'");
      continue;
    }
    if (const auto* name = cell(Column::Name); name && !name->empty()) {
      rec.residue_name = *name;
      if (rec.kind == BondKind::NH && is_proline(*name)) {
        fail("proline " + std::to_string(rec.residue_number) + " has no amide N-H");
        continue;
      }
    }

    CouplingUnits units = default_units;
    const std::string* value = cell(Column::Value);
    if (const auto* v = cell(Column::ValueHz)) {
      value = v;
      units = CouplingUnits::Hz;
    } else if (const auto* vn = cell(Column::ValueNormalized)) {
      value = vn;
      units = CouplingUnits::Normalized;
    } else if (const auto* u = cell(Column::Units); u && !u->empty()) {
      const std::string lu = lower(*u);
      if (lu == "hz") {
        units = CouplingUnits::Hz;
      } else if (lu == "normalized" || lu == "norm" || lu == "none") {
        units = CouplingUnits::Normalized;
      } else {
        fail("unknown units '" + *u + "'");
        continue;
      }
    }
    double v = 0.0;
    if (!parse_double(*value, v)) {
      fail("bad coupling value '" + *value + "'");
      continue;
    }
    (units == CouplingUnits::Hz ? rec.value_hz : rec.value_normalized) = v;

    if (const auto* u = cell(Column::Uncertainty); u && !u->empty()) {
      double e = 0.0;
      if (!parse_double(*u, e) || e < 0.0) {
        fail("bad uncertainty '" + *u + "'");
        continue;
      }
      (units == CouplingUnits::Hz ? rec.uncertainty_hz : rec.uncertainty_normalized) = e;
    }
    out.push_back(std::move(rec));
  }

  if (!errors.empty()) {
    std::string msg = "RDC table rejected " + std::to_string(errors.size()) + " row(s):";
    for (const auto& e : errors) msg += "\n  " + e;
    throw InputError(msg);
  }
  if (out.empty()) throw InputError("RDC table has no data rows");
  return out;
}

RdcDataset normalize_records(const std::vector<RdcRecord>& records, const DmaxTable& dmax) {
  std::vector<RdcEntry> entries;
  entries.reserve(records.size());
  for (const auto& r : records) {
    if (r.value_hz.has_value() == r.value_normalized.has_value()) {
      throw InputError("line " + std::to_string(r.line) +
                       ": exactly one of value_hz and value_normalized must be set");
    }
    RdcEntry e;
    e.id = {r.kind, r.residue_number};
    if (r.value_hz) {
      const double scale = dmax.at(r.kind).dmax_hz;
      e.d = *r.value_hz / scale;
      if (r.uncertainty_hz) e.uncertainty = *r.uncertainty_hz / std::abs(scale);
    } else {
      e.d = *r.value_normalized;
      e.uncertainty = r.uncertainty_normalized;
    }
    entries.push_back(e);
  }
  return RdcDataset(std::move(entries));
}

RdcDataset parse_rdc_table(std::string_view text, const DmaxTable& dmax,
                           CouplingUnits default_units) {
  return normalize_records(parse_rdc_records(text, default_units), dmax);
}

double to_hz(double normalized, BondKind kind, const DmaxTable& dmax) {
  return normalized * dmax.at(kind).dmax_hz;
}

std::string write_rdc_table(const RdcDataset& data) {
  std::string out = "residue,bond,value,units\n";
  char buf[64];
  for (const auto& e : data.entries()) {
    std::snprintf(buf, sizeof buf, "%.17g", e.d);
    out += std::to_string(e.id.residue_number) + "," + to_string(e.id.kind) + "," + buf +
           ",normalized\n";
  }
  return out;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace rdcbias
