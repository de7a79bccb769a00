#include "xattn/text_io.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <fmt/format.h>

#include "xattn/errors.hpp"
#include "xattn/model.hpp"

namespace xattn {

std::string format_double(double v) { return fmt::format("{}", v); }

namespace text {

void write_rows(std::ostream& out, const Matrix& m) {
  std::string line;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    line.clear();
    for (std::size_t c = 0; c < m.cols(); ++c) {
      if (c) line += ' ';
      line += format_double(m(r, c));
    }
    line += '\n';
    out << line;
  }
}

std::vector<double> parse_doubles(std::string_view line, std::string_view context) {
  std::vector<double> values;
  std::size_t k = 0;
  auto is_sep = [](char ch) { return ch == ' ' || ch == '\t' || ch == ',' || ch == '\r'; };
  while (k < line.size()) {
    while (k < line.size() && is_sep(line[k])) ++k;
    if (k >= line.size()) break;
    std::size_t end = k;
    while (end < line.size() && !is_sep(line[end])) ++end;
    const char* first = line.data() + k;
    const char* last = line.data() + end;
    if (*first == '+') ++first;
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last) {
      throw ParseError(fmt::format("{}: cannot parse '{}' as a number", context, line.substr(k, end - k)));
    }
    values.push_back(v);
    k = end;
  }
  return values;
}

std::string next_line(std::istream& in, std::string_view context) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError(fmt::format("{}: unexpected end of input", context));
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

Matrix read_rows(std::istream& in, std::size_t rows, std::size_t cols, std::string_view context) {
  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    std::string line;
    if (!std::getline(in, line)) {
      throw ParseError(fmt::format("{}: truncated, expected {} rows but found {}", context, rows, r));
    }
    const auto values = parse_doubles(line, context);
    if (values.size() != cols) {
      throw ParseError(fmt::format("{}: row {} has {} values, expected {}", context, r, values.size(), cols));
    }
    std::copy(values.begin(), values.end(), m.row(r).begin());
  }
  return m;
}

std::vector<std::string> split_words(std::string_view line) {
  std::vector<std::string> words;
  std::istringstream ss{std::string(line)};
  std::string w;
  while (ss >> w) words.push_back(w);
  return words;
}

void write_csv(std::ostream& out, const Matrix& m, const std::string& header) {
  if (!header.empty()) out << header << '\n';
  std::string line;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    line.clear();
    for (std::size_t c = 0; c < m.cols(); ++c) {
      if (c) line += ',';
      line += format_double(m(r, c));
    }
    line += '\n';
    out << line;
  }
}

Matrix read_csv(std::istream& in, std::string_view context) {
  std::vector<std::vector<double>> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    try {
      rows.push_back(parse_doubles(line, context));
    } catch (const ParseError&) {
      if (!first) throw;
    }
    first = false;
  }
  if (rows.empty()) throw ParseError(fmt::format("{}: no numeric rows", context));
  return Matrix::from_rows(rows);
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(fmt::format("cannot open '{}' for writing", path.string()));
  out << content;
  if (!out) throw std::runtime_error(fmt::format("failed writing '{}'", path.string()));
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(fmt::format("cannot open '{}' for reading", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace text
}  // namespace xattn
