#pragma once

#include <string>
#include <string_view>

namespace gplab {

// Shortest decimal that round-trips the exact 64-bit value ("nan"/"inf" for
// non-finite). Used for every double written to CSV so outputs are
// byte-stable and lossless.
std::string fmt_double(double v);

// Strict full-string parses; throw std::invalid_argument on any leftover.
double parse_double(std::string_view s);
long long parse_int(std::string_view s);

}  // namespace gplab
