#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace mcps::csv {

/// Shortest decimal form that round-trips to the same double.
std::string format(double value);

std::vector<std::string> split(std::string_view line, char sep = ',');
double parse_double(std::string_view field);

/// Joins fields with ',' and terminates with '\n'.
void write_row(std::ostream& out, const std::vector<std::string>& fields);

}  // namespace mcps::csv
