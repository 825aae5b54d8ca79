#pragma once

// Locale-independent number formatting and parsing helpers.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cetx {

/// Shortest representation that round-trips exactly ('.' decimal point).
std::string format_double(double v);
/// Fixed number of significant digits, for report tables.
std::string format_double(double v, int precision);

std::optional<double> parse_double(std::string_view s);
std::optional<std::uint64_t> parse_uint(std::string_view s);

std::string_view trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);

}  // namespace cetx
