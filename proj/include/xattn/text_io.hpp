#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "xattn/numerics.hpp"

namespace xattn::text {

/// Space-separated values of each row, one row per line.
void write_rows(std::ostream& out, const Matrix& m);

/// Parses whitespace- or comma-separated doubles; `context` names the source in errors.
std::vector<double> parse_doubles(std::string_view line, std::string_view context);

/// Reads the next line; throws ParseError mentioning `context` at end of input.
std::string next_line(std::istream& in, std::string_view context);

/// Reads `rows` lines of exactly `cols` values.
Matrix read_rows(std::istream& in, std::size_t rows, std::size_t cols, std::string_view context);

/// Splits on whitespace.
std::vector<std::string> split_words(std::string_view line);

/// Plain numeric CSV; an optional header line is written first when non-empty.
void write_csv(std::ostream& out, const Matrix& m, const std::string& header = {});
/// Reads a numeric CSV, skipping a first line that does not parse as numbers.
Matrix read_csv(std::istream& in, std::string_view context);

void write_file(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

}  // namespace xattn::text
