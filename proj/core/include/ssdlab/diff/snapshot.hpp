#pragma once

#include <filesystem>
#include <iosfwd>

#include "ssdlab/diff/optim.hpp"

namespace ssdlab::diff {

// Flat little-endian binary: magic "SSDP", version, count, then per record
// (name length, name bytes, rank, extents, float64 values). Value-exact.
void write_parameters(std::ostream& out, const ParameterSet& params);
ParameterSet read_parameters(std::istream& in);

void save_parameters(const std::filesystem::path& path, const ParameterSet& params);
ParameterSet load_parameters(const std::filesystem::path& path);

// Momentum buffers use the same record layout (names "velocity/<i>").
void write_sgd_state(std::ostream& out, const SgdState& state);
SgdState read_sgd_state(std::istream& in);

}  // namespace ssdlab::diff
