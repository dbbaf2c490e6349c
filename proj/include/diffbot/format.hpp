#pragma once

#include <string>

namespace diffbot {

/// Shortest decimal text that round-trips to the same double. Traces and
/// tables use this so identical runs produce identical bytes.
std::string format_double(double value);

}  // namespace diffbot
