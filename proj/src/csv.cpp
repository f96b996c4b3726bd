#include "leniency/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "leniency/error.hpp"

namespace leniency::csv {

int Table::column(std::string_view name) const {
  for (std::size_t j = 0; j < header.size(); ++j)
    if (header[j] == name) return static_cast<int>(j);
  return -1;
}

namespace {

// Reads one record; returns false at end of input.
bool read_record(std::istream& in, std::vector<std::string>& out, std::size_t line_no) {
  out.clear();
  std::string field;
  bool in_quotes = false;
  bool any = false;
  bool field_was_quoted = false;
  char c;
  while (in.get(c)) {
    any = true;
    if (in_quotes) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field.push_back('"');
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    if (c == '"') {
      if (!field.empty() && !field_was_quoted)
        throw InputError("CSV line " + std::to_string(line_no) + ": stray quote inside unquoted field");
      in_quotes = true;
      field_was_quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(field));
      field.clear();
      field_was_quoted = false;
    } else if (c == '\r') {
      if (in.peek() == '\n') in.get(c);
      out.push_back(std::move(field));
      return true;
    } else if (c == '\n') {
      out.push_back(std::move(field));
      return true;
    } else {
      field.push_back(c);
    }
  }
  if (in_quotes)
    throw InputError("CSV line " + std::to_string(line_no) + ": unterminated quoted field");
  if (!any) return false;
  out.push_back(std::move(field));
  return true;
}

}  // namespace

Table read(std::istream& in) {
  Table t;
  std::vector<std::string> rec;
  std::size_t line = 1;
  if (!read_record(in, t.header, line))
    throw InputError("empty CSV input: no header row");
  while (read_record(in, rec, ++line)) {
    if (rec.size() == 1 && rec[0].empty()) continue;  // blank line
    if (rec.size() != t.header.size())
      throw InputError("CSV record " + std::to_string(t.rows.size() + 1) + " has " +
                       std::to_string(rec.size()) + " fields, header has " +
                       std::to_string(t.header.size()));
    t.rows.push_back(rec);
  }
  return t;
}

Table read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open data file: " + path);
  return read(in);
}

std::string escape(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

void write_row(std::ostream& out, const std::vector<std::string>& fields) {
  for (std::size_t j = 0; j < fields.size(); ++j) {
    if (j) out << ',';
    out << escape(fields[j]);
  }
  out << '\n';
}

std::string format_double(double v) {
  if (std::isnan(v)) return "NA";
  if (std::isinf(v)) return v > 0 ? "Inf" : "-Inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace leniency::csv
