#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace transeq::cli {

// Runs one command line (args excludes the program name). The report goes to
// --output or `out`; diagnostics go to `err`. Returns 0 when the command met
// its tolerances, 2 on flagged non-convergence and 1 on input errors.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace transeq::cli
