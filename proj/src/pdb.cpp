#include "rdcbias/pdb.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "rdcbias/errors.hpp"

namespace rdcbias {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  return std::string(s.substr(b, e - b));
}

std::string_view field(std::string_view line, std::size_t begin, std::size_t end) {
  if (begin >= line.size()) return {};
  return line.substr(begin, std::min(end, line.size()) - begin);
}

double parse_number(std::string_view text, int line_no, const char* what) {
  const std::string t = trim(text);
  try {
    std::size_t used = 0;
    const double v = std::stod(t, &used);
    if (used == t.size()) return v;
  } catch (const std::exception&) {
  }
  throw InputError("PDB line " + std::to_string(line_no) + ": bad " + what + " '" + t + "'");
}

struct AtomSlot {
  Vec3 x;
  double occupancy = -1.0;
};

struct ResidueAtoms {
  std::string name;
  int number = 0;
  std::map<std::string, AtomSlot> atoms;
};

}  // namespace

BackboneStructure parse_pdb_backbone(std::string_view text, const PdbOptions& options) {
  std::vector<ResidueAtoms> residues;
  std::optional<char> chain = options.chain;
  std::string last_key;
  bool in_model = false;
  bool seen_model = false;
  int line_no = 0;

  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    const std::string_view line =
        text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;

    const std::string record = trim(field(line, 0, 6));
    if (record == "MODEL") {
      if (seen_model) break;
      seen_model = in_model = true;
      continue;
    }
    if (record == "ENDMDL") {
      if (in_model) break;
      continue;
    }
    if (record != "ATOM") continue;
    if (line.size() < 54) {
      throw InputError("PDB line " + std::to_string(line_no) + ": ATOM record too short");
    }
    const char ch = line[21];
    if (!chain) chain = ch;
    if (ch != *chain) continue;

    const std::string atom = trim(field(line, 12, 16));
    const std::string res_name = trim(field(line, 17, 20));
    const std::string seq_text = trim(field(line, 22, 26));
    const char icode = line.size() > 26 ? line[26] : ' ';
    int number = 0;
    try {
      std::size_t used = 0;
      number = std::stoi(seq_text, &used);
      if (used != seq_text.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw InputError("PDB line " + std::to_string(line_no) + ": bad residue number '" +
                       seq_text + "'");
    }
    const Vec3 x(parse_number(field(line, 30, 38), line_no, "x coordinate"),
                 parse_number(field(line, 38, 46), line_no, "y coordinate"),
                 parse_number(field(line, 46, 54), line_no, "z coordinate"));
    const std::string occ_text = trim(field(line, 54, 60));
    const double occupancy =
        occ_text.empty() ? 1.0 : parse_number(occ_text, line_no, "occupancy");

    const std::string key = seq_text + icode + res_name;
    if (key != last_key) {
      if (options.residue_limit != 0 && residues.size() == options.residue_limit) break;
      residues.push_back({res_name, number, {}});
      last_key = key;
    }

    std::string slot;
    if (atom == "N" || atom == "CA" || atom == "C") {
      slot = atom;
    } else if (atom == "H" || atom == "HN") {
      slot = "H";
    } else {
      continue;
    }
    AtomSlot& s = residues.back().atoms[slot];
    if (occupancy > s.occupancy) {
      s.x = x;
      s.occupancy = occupancy;
    }
  }

  if (residues.empty()) throw InputError("PDB input has no ATOM records for the selected chain");

  std::vector<BackboneResidue> out;
  std::string incomplete;
  for (const auto& r : residues) {
    BackboneResidue br;
    br.name = r.name;
    br.number = r.number;
    bool complete = true;
    for (const char* name : {"N", "CA", "C"}) {
      if (!r.atoms.count(name)) complete = false;
    }
    if (!complete) {
      incomplete += (incomplete.empty() ? "" : ", ") + r.name + " " + std::to_string(r.number);
      continue;
    }
    br.n = r.atoms.at("N").x;
    br.ca = r.atoms.at("CA").x;
    br.c = r.atoms.at("C").x;
    if (auto it = r.atoms.find("H"); it != r.atoms.end()) br.h = it->second.x;
    out.push_back(std::move(br));
  }
  if (!incomplete.empty()) {
    throw InputError("residues missing backbone atoms: " + incomplete);
  }
  return BackboneStructure(std::move(out));
}

BackboneStructure read_pdb_backbone(const std::string& path, const PdbOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open PDB file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_pdb_backbone(ss.str(), options);
}

std::string write_pdb_backbone(const BackboneStructure& structure, char chain) {
  std::string out;
  char buf[96];
  int serial = 1;
  auto atom = [&](const char* name, const BackboneResidue& r, const Vec3& x, char element) {
    std::snprintf(buf, sizeof buf,
                  "ATOM  %5d  %-3s %3s %c%4d    %8.3f%8.3f%8.3f  1.00  0.00           %c\n",
                  serial++, name, r.name.c_str(), chain, r.number, x.x(), x.y(), x.z(), element);
    out += buf;
  };
  for (const auto& r : structure.residues()) {
    atom("N", r, r.n, 'N');
    atom("CA", r, r.ca, 'C');
    atom("C", r, r.c, 'C');
    if (r.h) atom("H", r, *r.h, 'H');
  }
  out += "END\n";
  return out;
}

}  // namespace rdcbias
