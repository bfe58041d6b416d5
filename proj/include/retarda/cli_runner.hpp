#pragma once

#include <iosfwd>
#include <string>

namespace retarda {

/// Executes one scenario config and writes its output files. Relative output
/// paths are resolved against out_dir. When check_results is set, the task's
/// built-in acceptance check runs after the computation and a failure turns
/// the return value into 4; otherwise returns 0. Config problems throw
/// validation_error (the message names the offending key), iteration
/// failures throw solver_error; the binary maps those to exit codes 2 and 3.
int run_scenario(const std::string& config_path, const std::string& out_dir, bool check_results,
                 std::ostream& log);

/// Identity battery over built-in fixtures: convolution identities, the
/// variation-of-constants cross-checks, Gronwall comparisons and the
/// fundamental-matrix oracles. Prints one line per item and a summary,
/// returns 0 iff every item passed. quick trims the grids so the battery
/// finishes in well under ten seconds; seed fixes the randomized fixtures.
/// The environment variable RETARDA_SELFTEST_TOL_SCALE (default 1) scales
/// every tolerance, which lets CI prove that failures are actually visible.
int self_test(bool quick, unsigned long long seed, std::ostream& log);

}  // namespace retarda
