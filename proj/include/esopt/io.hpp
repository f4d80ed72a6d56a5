#pragma once

#include "esopt/barriers.hpp"
#include "esopt/grid.hpp"
#include "esopt/hjb.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace esopt {

/// Shortest round-trip decimal representation.
std::string format_double(double x);

/// Long format s,q,nu1,t,V,mode,rate on every `time_stride`-th slice plus t = T.
void write_solution_csv(std::ostream& os, const ValueField& V, const PolicyField& policy, const ModelParams& p,
                        int time_stride = 1);

/// Compact binary dump of grid, values and modes; reload is exact.
void write_solution_binary(const std::filesystem::path& path, const ValueField& V, const PolicyField& policy);
SolveResult read_solution_binary(const std::filesystem::path& path);

/// q,nu1,t,buy_level,buy_status,sell_level,sell_status[,buy_smooth,sell_smooth]
void write_barriers_csv(std::ostream& os, const BarrierField& b);
/// Smoothed polynomials (degrees, box, coefficients, max deviation) as JSON.
std::string barriers_json(const BarrierField& b);

void write_nonparallelity_csv(std::ostream& os, const NonParallelityReport& r, const BarrierField& b);

std::uint64_t fnv1a64_file(const std::filesystem::path& path);

/// manifest.json listing the subcommand, seed, config, tool version and a
/// checksum for every file in `files` (paths relative to `dir`).
void write_manifest(const std::filesystem::path& dir, const std::string& subcommand, std::uint64_t seed,
                    const std::string& config_json, const std::vector<std::string>& files);

extern const char* const kToolVersion;

}  // namespace esopt
