#pragma once

// Process exit codes of the nlsls tool. Stable; listed in the README.

namespace nlsls::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 2,               ///< bad flags, unreadable or malformed config / solution file
  kInfeasible = 3,          ///< a QP subproblem (or the l1 relaxation) proved infeasibility
  kNotConverged = 4,        ///< iteration limit, QP failure or line-search failure
  kCertificationFailed = 5, ///< converged, but the restored solution did not certify
  kViolations = 6,          ///< validate found a constraint violation, tube exit or tau exceedance
  kStaleSolution = 7,       ///< solution file was produced from a different config, or is uncertified
  kInternal = 10,           ///< unexpected exception
};

}  // namespace nlsls::cli
