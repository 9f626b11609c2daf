//
// Copyright 2026 HDMM Contributors.
// SPDX-License-Identifier: Apache-2.0
//

#include "hdmm/csv.hpp"

#include <charconv>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace hdmm {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    // Trim surrounding whitespace.
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    cells.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') cells.push_back("");
  return cells;
}

long parse_long(const std::string& s, bool& ok) {
  long value = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), value);
  ok = res.ec == std::errc{} && res.ptr == s.data() + s.size();
  return value;
}

}  // namespace

DataVector ingest_csv(const Schema& schema, std::istream& in) {
  schema.validate();
  const Index d = schema.dimensions();

  // Per-attribute value dictionaries.
  std::vector<std::map<std::string, Index>> dict(d);
  for (Index i = 0; i < d; ++i)
    for (std::size_t v = 0; v < schema.attributes[i].values.size(); ++v)
      dict[i][schema.attributes[i].values[v]] = static_cast<Index>(v);

  std::string line;
  if (!std::getline(in, line)) throw DomainError("csv: missing header row");
  const auto header = split_csv_line(line);
  std::vector<Index> column(d, -1);
  for (Index i = 0; i < d; ++i) {
    for (std::size_t c = 0; c < header.size(); ++c)
      if (header[c] == schema.attributes[i].name) column[i] = static_cast<Index>(c);
    if (column[i] < 0)
      throw DomainError("csv: missing column '" + schema.attributes[i].name + "'");
  }

  DataVector data{schema, Vector::Zero(schema.domain_size())};
  Index row_number = 0;
  while (std::getline(in, line)) {
    ++row_number;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    Index flat = 0;
    for (Index i = 0; i < d; ++i) {
      const auto& attr = schema.attributes[i];
      if (column[i] >= static_cast<Index>(cells.size()))
        throw DomainError("csv row " + std::to_string(row_number) +
                          ": missing value for '" + attr.name + "'");
      const std::string& cell = cells[column[i]];
      Index idx = -1;
      if (!attr.values.empty()) {
        auto it = dict[i].find(cell);
        if (it != dict[i].end()) idx = it->second;
      } else {
        bool ok = false;
        long v = parse_long(cell, ok);
        if (ok) {
          const long lo = attr.range ? attr.range->first : 0;
          if (v >= lo && v - lo < attr.size) idx = static_cast<Index>(v - lo);
        }
      }
      if (idx < 0)
        throw DomainError("csv row " + std::to_string(row_number) +
                          ": value '" + cell + "' not in the domain of '" +
                          attr.name + "'");
      flat = flat * attr.size + idx;  // row-major, schema order
    }
    data.counts[flat] += 1.0;
  }
  return data;
}

}  // namespace hdmm
