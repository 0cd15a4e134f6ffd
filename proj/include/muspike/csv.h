/**
 * @file csv.h
 * @brief Minimal comma-separated reading and writing (RFC 4180 quoting).
 */
#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace muspike::csv {

using Row = std::vector<std::string>;

std::string escape(std::string_view field);
std::string join(const Row& row);
/// Parses every record; a trailing newline does not produce an empty row.
std::vector<Row> parse(std::string_view text);

/// Shortest text that reads back to the same double ("NA" when absent).
std::string format_number(std::optional<double> v);
std::optional<double> parse_number(std::string_view s);

}  // namespace muspike::csv
