#pragma once

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "xspace/error.hpp"
#include "xspace/series.hpp"

namespace xspace {

namespace detail {

inline double parse_number(std::string_view tok, std::size_t line_no) {
  while (!tok.empty() && (tok.front() == ' ' || tok.front() == '\r')) tok.remove_prefix(1);
  while (!tok.empty() && (tok.back() == ' ' || tok.back() == '\r')) tok.remove_suffix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  require(ec == std::errc{} && ptr == tok.data() + tok.size() && !tok.empty(), Errc::non_numeric,
          "line " + std::to_string(line_no) + ": '" + std::string(tok) + "' is not a number");
  return v;
}

}  // namespace detail

/// Parses UCR-style text: one series per line, class label first, separated
/// by tabs or commas. Labels are remapped to 0..C-1 in ascending numeric order.
inline Dataset parse_ucr(std::istream& in, const std::string& source = "input") {
  std::vector<double> raw_labels;
  Dataset d;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const char sep = line.find('\t') != std::string::npos ? '\t' : ',';
    std::vector<double> fields;
    std::size_t start = 0;
    while (true) {
      const std::size_t end = line.find(sep, start);
      fields.push_back(detail::parse_number(std::string_view(line).substr(start, end - start), line_no));
      if (end == std::string::npos) break;
      start = end + 1;
    }
    require(fields.size() >= 2, Errc::ragged_rows, source + " line " + std::to_string(line_no) + " has no values");
    if (!d.samples.empty()) {
      require(fields.size() - 1 == d.samples.front().size(), Errc::ragged_rows,
              source + " line " + std::to_string(line_no) + " has " + std::to_string(fields.size() - 1) +
                  " values, expected " + std::to_string(d.samples.front().size()));
    }
    raw_labels.push_back(fields.front());
    Series s;
    s.values.assign(fields.begin() + 1, fields.end());
    s.name = source + ":" + std::to_string(line_no);
    d.samples.push_back(std::move(s));
  }
  require(!d.samples.empty(), Errc::empty_file, source + " contains no series");

  std::map<double, int> remap;
  for (double l : raw_labels) remap.emplace(l, 0);
  int next = 0;
  for (auto& [label, index] : remap) index = next++;
  for (std::size_t i = 0; i < d.samples.size(); ++i) d.samples[i].label = remap.at(raw_labels[i]);
  return d;
}

inline Dataset load_ucr_tsv(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), Errc::io_error, "cannot open " + path);
  return parse_ucr(in, path);
}

/// Writes the same layout back, tab-separated, with labels as integers.
inline void save_ucr_tsv(const Dataset& d, const std::string& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), Errc::io_error, "cannot write " + path);
  char buf[32];
  for (const auto& s : d.samples) {
    out << s.label.value_or(0);
    for (double v : s.values) {
      const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
      out << '\t' << std::string_view(buf, static_cast<std::size_t>(end - buf));
    }
    out << '\n';
  }
  require(static_cast<bool>(out), Errc::io_error, "failed writing " + path);
}

}  // namespace xspace
