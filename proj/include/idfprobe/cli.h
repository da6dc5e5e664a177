#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace idfprobe::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Runs one command. `args` excludes the program name, e.g.
/// {"idf", "build", "--corpus", "c.tsv", ...}. Results go to `out`, progress
/// and diagnostics to `err`. Returns 0 only when every requested output was
/// written and read back successfully; 2 for usage errors and missing
/// inputs; 1 for any other failure.
int Run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err);

int Main(int argc, char** argv);

}  // namespace idfprobe::cli
