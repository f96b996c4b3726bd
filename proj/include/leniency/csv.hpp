#pragma once

#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace leniency::csv {

// RFC 4180 table: a header row plus records. Quoted fields may contain
// commas, doubled quotes and line breaks.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Returns the column index for `name`, or -1.
  int column(std::string_view name) const;
};

Table read(std::istream& in);
Table read_file(const std::string& path);

// Quotes a field only when it needs quoting.
std::string escape(std::string_view field);
void write_row(std::ostream& out, const std::vector<std::string>& fields);

// Shortest round-trip decimal representation of a double.
std::string format_double(double v);

}  // namespace leniency::csv
