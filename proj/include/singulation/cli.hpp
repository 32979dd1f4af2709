#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace singulation {

/// Subcommands: train | eval | gradcheck | modularity | serve.
/// Returns 0 on success, 2 on usage/config errors, 1 on runtime failure.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace singulation
