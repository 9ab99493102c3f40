#pragma once

#include <iosfwd>

namespace ddlasso::cli {

/// Exit codes shared by all subcommands.
enum ExitCode : int { kOk = 0, kFailure = 1, kBadInput = 2, kAllDegenerate = 3 };

/// Entry point for `ddlasso <fit|simulate|diagnose> ...`. Diagnostics go to
/// err; nothing is thrown.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ddlasso::cli
