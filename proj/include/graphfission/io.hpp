#pragma once

// Edge-list and signal file formats.
//
// Edge list: optional first non-comment line "n <count>", then one "u v"
// pair per line (0-indexed). Lines starting with '#' and blank lines are
// skipped. Without the header the node count is 1 + the largest index.
//
// Signal: CSV with header "node,value" and rows 0..n-1 in order, or one
// value per line with no header.

#include "graphfission/graph.hpp"

#include <charconv>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace graphfission {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

inline std::size_t parse_index(std::string_view token, std::size_t line_no) {
  std::size_t value = 0;
  const auto* end = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(token.data(), end, value);
  if (ec == std::errc::result_out_of_range)
    throw FormatError("line " + std::to_string(line_no) + ": index overflow '" +
                      std::string(token) + "'");
  if (ec != std::errc() || ptr != end)
    throw FormatError("line " + std::to_string(line_no) + ": expected a non-negative integer, got '" +
                      std::string(token) + "'");
  return value;
}

inline double parse_real(std::string_view token, std::size_t line_no) {
  const std::string copy(token);
  std::size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(copy, &used);
  } catch (const std::exception&) {
    throw FormatError("line " + std::to_string(line_no) + ": expected a number, got '" + copy + "'");
  }
  if (used != copy.size())
    throw FormatError("line " + std::to_string(line_no) + ": trailing characters in '" + copy + "'");
  return value;
}

inline std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    const std::size_t start = i;
    while (i < s.size() && s[i] != ' ' && s[i] != '\t') ++i;
    if (i > start) out.push_back(s.substr(start, i - start));
  }
  return out;
}

}  // namespace detail

inline Graph parse_graph(std::istream& in) {
  std::string raw;
  std::size_t line_no = 0;
  std::size_t declared = 0;
  bool have_header = false;
  bool seen_edge = false;
  std::size_t max_index = 0;
  std::vector<Edge> edges;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto line = detail::trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto tokens = detail::split_ws(line);
    if (!seen_edge && !have_header && tokens.size() == 2 && tokens[0] == "n") {
      declared = detail::parse_index(tokens[1], line_no);
      have_header = true;
      continue;
    }
    if (tokens.size() != 2)
      throw FormatError("line " + std::to_string(line_no) + ": expected 'u v'");
    const Edge e{detail::parse_index(tokens[0], line_no), detail::parse_index(tokens[1], line_no)};
    if (have_header && (e.u >= declared || e.v >= declared))
      throw FormatError("line " + std::to_string(line_no) + ": node index exceeds declared count " +
                        std::to_string(declared));
    max_index = std::max({max_index, e.u, e.v});
    edges.push_back(e);
    seen_edge = true;
  }
  const std::size_t n = have_header ? declared : (seen_edge ? max_index + 1 : 0);
  try {
    return Graph(n, std::move(edges));
  } catch (const std::invalid_argument& err) {
    throw FormatError(err.what());
  }
}

inline Graph read_graph(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open edge list '" + path + "'");
  return parse_graph(in);
}

inline void write_graph(std::ostream& out, const Graph& graph) {
  out << "n " << graph.node_count() << '\n';
  for (const auto& e : graph.edges()) out << e.u << ' ' << e.v << '\n';
}

inline void write_graph(const std::string& path, const Graph& graph) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write '" + path + "'");
  write_graph(out, graph);
}

/// `expected_size` of 0 skips the length check.
inline NodeSignal parse_signal(std::istream& in, std::size_t expected_size = 0,
                               SignalKind kind = SignalKind::continuous) {
  std::string raw;
  std::size_t line_no = 0;
  bool header_checked = false;
  bool csv = false;
  std::vector<double> values;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto line = detail::trim(raw);
    if (line.empty() || line.front() == '#') continue;
    if (!header_checked) {
      header_checked = true;
      if (line == "node,value") {
        csv = true;
        continue;
      }
    }
    if (csv) {
      const auto comma = line.find(',');
      if (comma == std::string_view::npos)
        throw FormatError("line " + std::to_string(line_no) + ": expected 'node,value'");
      const auto node = detail::parse_index(detail::trim(line.substr(0, comma)), line_no);
      if (node != values.size())
        throw FormatError("line " + std::to_string(line_no) + ": expected node " +
                          std::to_string(values.size()) + ", got " + std::to_string(node));
      values.push_back(detail::parse_real(detail::trim(line.substr(comma + 1)), line_no));
    } else {
      values.push_back(detail::parse_real(line, line_no));
    }
  }
  if (expected_size != 0 && values.size() != expected_size)
    throw FormatError("signal has " + std::to_string(values.size()) + " values, graph has " +
                      std::to_string(expected_size) + " nodes");
  NodeSignal s{Eigen::Map<Vector>(values.data(), static_cast<Eigen::Index>(values.size())), kind};
  if (kind == SignalKind::count) {
    for (double v : values)
      if (v < 0.0 || v != std::floor(v)) throw FormatError("count signal has non-count entry");
  }
  return s;
}

inline NodeSignal read_signal(const std::string& path, std::size_t expected_size = 0,
                              SignalKind kind = SignalKind::continuous) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open signal '" + path + "'");
  return parse_signal(in, expected_size, kind);
}

inline void write_signal(std::ostream& out, const Vector& values) {
  out << "node,value\n" << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (Eigen::Index i = 0; i < values.size(); ++i) out << i << ',' << values[i] << '\n';
}

inline void write_signal(const std::string& path, const Vector& values) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write '" + path + "'");
  write_signal(out, values);
}

/// n rows, one column per matrix column, with a header b0,b1,...
inline void write_matrix_csv(std::ostream& out, const Matrix& m, const std::string& prefix = "b") {
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (Eigen::Index c = 0; c < m.cols(); ++c) out << (c ? "," : "") << prefix << c;
  out << '\n';
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) out << (c ? "," : "") << m(r, c);
    out << '\n';
  }
}

}  // namespace graphfission
