#pragma once

#include <cctype>
#include <charconv>
#include <fstream>
#include <istream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace confpred {

//! Read a numeric CSV (comma separated, optional header row). Returns one
//! row per data line; empty input gives an empty result. Ragged rows and
//! non-numeric cells are reported with 1-based line/column positions.
inline std::vector<std::vector<double>> read_numeric_csv(std::istream& in,
                                                         bool has_header) {
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  std::size_t expected_cols = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (has_header && line_no == 1) continue;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    // skip blank lines
    bool blank = true;
    for (char c : line)
      if (!std::isspace(static_cast<unsigned char>(c))) blank = false;
    if (blank) continue;

    std::vector<double> row;
    std::size_t start = 0;
    std::size_t col = 0;
    while (start <= line.size()) {
      std::size_t comma = line.find(',', start);
      if (comma == std::string::npos) comma = line.size();
      ++col;
      std::size_t a = start, b = comma;
      while (a < b && std::isspace(static_cast<unsigned char>(line[a]))) ++a;
      while (b > a && std::isspace(static_cast<unsigned char>(line[b - 1])))
        --b;
      double value = 0.0;
      const auto res = std::from_chars(line.data() + a, line.data() + b, value);
      if (res.ec != std::errc{} || res.ptr != line.data() + b) {
        throw std::invalid_argument(
            "csv: line " + std::to_string(line_no) + ", column " +
            std::to_string(col) + ": cannot parse '" +
            line.substr(start, comma - start) + "' as a number");
      }
      row.push_back(value);
      start = comma + 1;
      if (comma == line.size()) break;
    }
    if (expected_cols == 0) expected_cols = row.size();
    if (row.size() != expected_cols) {
      throw std::invalid_argument(
          "csv: line " + std::to_string(line_no) + " has " +
          std::to_string(row.size()) + " columns, expected " +
          std::to_string(expected_cols));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::vector<std::vector<double>> read_numeric_csv_file(
    const std::string& path, bool has_header) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open file: " + path);
  return read_numeric_csv(in, has_header);
}

}  // namespace confpred
