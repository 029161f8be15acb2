#pragma once

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <string>
#include <vector>

namespace se::io {

/// Shortest decimal text that reads back to exactly `v`; "nan" and
/// "inf"/"-inf" for non-finite values.
std::string format_double(double v);

/// Comma-separated writer; creates parent directories and throws DataError
/// when the file cannot be written.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);
  CsvWriter& cell(const std::string& text);
  CsvWriter& cell(double v);
  CsvWriter& cell(std::size_t v);
  void end_row();
  void close();

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  bool row_started_ = false;
};

/// Splits one CSV line on commas; fields are not quoted.
std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace se::io
