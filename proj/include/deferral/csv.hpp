#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace deferral::csv {

/// Quotes a field when it contains a comma, quote or newline.
std::string escape(std::string_view field);
void write_row(std::ostream& out, const std::vector<std::string>& fields);
/// Splits one CSV line, honouring double-quoted fields.
std::vector<std::string> split_line(std::string_view line);
/// Shortest text that parses back to the same double.
std::string format_double(double x);

}  // namespace deferral::csv
