#pragma once

#include <iosfwd>

namespace covi::cli {

/// Entry point behind the `covi` binary. Verbs: train, eval, sweep,
/// equilibrium, selftest. Returns 0 on success, 2 on usage errors (unknown
/// flag or key, unreadable config) and 1 when the run itself fails.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace covi::cli
