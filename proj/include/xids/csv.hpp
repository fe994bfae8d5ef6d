// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace xids {

/// Streaming RFC-4180 reader: quoted fields, doubled quotes, embedded
/// newlines, CRLF or LF line endings. A UTF-8 BOM at the start is skipped.
class CsvReader {
 public:
  explicit CsvReader(std::istream& in);

  /// Reads the next record into `fields`. Returns false at end of input.
  /// Throws DataError on an unterminated quoted field.
  bool next(std::vector<std::string>& fields);

  /// 1-based physical line on which the last returned record started.
  std::size_t line() const { return record_line_; }

 private:
  std::istream& in_;
  std::size_t line_ = 1;
  std::size_t record_line_ = 0;
  bool first_ = true;
};

/// Quotes a field when it contains a comma, quote, CR, or LF.
std::string csv_escape(std::string_view field);

void write_csv_row(std::ostream& out, const std::vector<std::string>& fields);

}  // namespace xids
