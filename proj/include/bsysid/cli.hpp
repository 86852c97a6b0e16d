#pragma once

#include "bsysid/stats.hpp"

#include <iosfwd>
#include <string>

namespace bsysid::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitRuntime = 3;

/// Entry point of the `bsysid` tool: subcommands single, montecarlo, stream.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

struct IoSeries {
    VectorXd u;
    VectorXd y;
};

/// Reads the two-column "u,y" dataset format. Throws ConfigError citing the
/// line number of the first malformed row, or when no data rows are present.
IoSeries read_dataset(const std::string& path);

} // namespace bsysid::cli
