#pragma once

#include "nvsim/analysis.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

// Artifact I/O: CSV grids and traces, JSON metadata sidecars, optional
// 16-bit PGM rasters.  All floating-point output uses shortest round-trip
// formatting so identical runs produce byte-identical files.

namespace nvsim {

// Shortest round-trip decimal representation.
std::string format_double(double v);

// One row per cell: x,y,z,Mz_Hz,strain,sigma,amplitude,mask.
void write_strain_map_csv(const StrainMap& map, const std::string& path);
StrainMap read_strain_map_csv(const std::string& path);

void write_trace_csv(const Trace& t, const std::string& path,
                     const std::string& xName, const std::string& yName);

void write_allan_csv(const AllanResult& a, const std::string& path);

void write_json(const nlohmann::json& j, const std::string& path);
nlohmann::json read_json(const std::string& path);
std::string read_text(const std::string& path);

// FNV-1a 64-bit hash of the canonical config text, hex-encoded.
std::string config_hash(const std::string& text);

// Linear min..max normalization to 16-bit grayscale, masked cells black.
void write_pgm16(const StrainMap& map, const std::vector<double>& values,
                 const std::string& path);

// Strict-schema helper: throws listing any key not in `allowed`.
void require_keys(const nlohmann::json& obj,
                  const std::vector<std::string>& allowed,
                  const std::string& context);

}  // namespace nvsim
