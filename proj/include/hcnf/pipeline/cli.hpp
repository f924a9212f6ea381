#pragma once

#include <ostream>

namespace hcnf::pipeline {

// Exit codes: 0 success, 1 user error (bad arguments, malformed or missing
// input, diverged training), 2 internal error.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace hcnf::pipeline
