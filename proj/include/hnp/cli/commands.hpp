#pragma once

#include <string>
#include <vector>

namespace hnp::cli {

/// Entry point behind the `hnp` binary. Subcommands: gen-data, train, eval,
/// predict-curve, prop-test. Returns 0 on success, 1 on usage/config
/// errors, 2 when a property check reports FAIL.
int run_command(int argc, const char* const* argv);
int run_command(const std::vector<std::string>& args);

}  // namespace hnp::cli
