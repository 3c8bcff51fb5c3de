#ifndef TFORGE_NUMFMT_HPP
#define TFORGE_NUMFMT_HPP

#include <string>

namespace tforge {

/// Shortest round-trip decimal form; integral values in the exact-integer range print
/// without a fraction. Locale independent.
std::string format_number(double value);

/// Fixed notation with `decimals` digits after the point, rounded half away from zero.
/// Negative zero prints as positive.
std::string format_fixed(double value, int decimals);

}  // namespace tforge

#endif  // TFORGE_NUMFMT_HPP
