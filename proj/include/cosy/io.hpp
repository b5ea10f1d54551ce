#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace cosy::io {

struct CsvRow {
  std::size_t line = 0;  // 1-based physical line where the record starts
  std::vector<std::string> fields;
};

// RFC-4180 reader. Accepts LF or CRLF line endings, skips blank lines, and
// rejects a leading byte-order mark, unterminated quotes and stray quotes
// inside unquoted fields (MalformedRow with the line number).
std::vector<CsvRow> parse_csv(std::string_view text);

// Quotes a field when it contains a comma, quote, CR or LF.
std::string csv_field(std::string_view value);
std::string csv_line(const std::vector<std::string>& fields);

bool is_valid_utf8(std::string_view text);

std::string read_file(const std::filesystem::path& path);

// Writes to a temporary sibling and renames over `path`, so readers never
// observe a partially written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

}  // namespace cosy::io
