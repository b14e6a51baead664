#pragma once

#include <iosfwd>

namespace cat {

/// Entry point of the `catir` tool. Results go to `out`, diagnostics only
/// to `err`. Returns the process exit code.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace cat
