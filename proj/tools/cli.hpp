#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace casekit::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Runs one subcommand: synth, parse, index, search, sample-ljp, sample-fdm,
/// mask-lam, train, eval, export-embeddings, ablate.
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace casekit::cli
