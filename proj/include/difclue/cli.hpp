#pragma once
// Command-line front end: one subcommand per pipeline stage plus `run` and
// `report`. Exit codes: 0 success, 1 usage error, 2 stage failure.

#include <iosfwd>

namespace difclue {

int cli_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace difclue
