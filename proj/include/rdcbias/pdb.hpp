#pragma once

// Backbone extraction from fixed-column PDB ATOM records.

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

#include "rdcbias/geometry.hpp"

namespace rdcbias {

struct PdbOptions {
  std::optional<char> chain;     // default: chain of the first ATOM record
  std::size_t residue_limit = 0;  // keep the first n residues (0: all)
};

// Reads N, CA, C and amide H (H or HN) of the first model and chain. For
// alternate locations the highest-occupancy copy of each atom wins. Throws
// InputError for malformed records, residues lacking a backbone atom
// (listing their numbers) or an empty result.
BackboneStructure parse_pdb_backbone(std::string_view text, const PdbOptions& options = {});

BackboneStructure read_pdb_backbone(const std::string& path, const PdbOptions& options = {});

// ATOM records for N, CA, C and H.
std::string write_pdb_backbone(const BackboneStructure& structure, char chain = 'A');

}  // namespace rdcbias
