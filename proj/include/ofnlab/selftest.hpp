#pragma once

#include <iosfwd>

namespace ofn {

/// Quick invariant suite for a built library: gradients, OFN, optimizers,
/// Polyak, srank, IQM, config round-trip. Prints one line per check and
/// returns the number of failures.
int run_selftest(std::ostream& out);

}  // namespace ofn
