#pragma once

#include <string>
#include <vector>

namespace reba::csv {

// Plain comma-separated rows; no quoting (field values in this project never
// contain commas). Doubles are written with 17 significant digits so tables
// round-trip losslessly.

std::vector<std::string> split_row(const std::string& line);

std::string format_double(double v);

double parse_double(const std::string& s);
int parse_int(const std::string& s);

} // namespace reba::csv
