#include "se/io/csv.hpp"

#include <charconv>
#include <cmath>

#include "se/errors.hpp"

namespace se::io {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw DataError("cannot format number");
  return std::string(buf, end);
}

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header) : path_(path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  out_.open(path, std::ios::binary | std::ios::trunc);
  if (!out_) throw DataError("cannot open " + path.string() + " for writing");
  for (const auto& h : header) cell(h);
  end_row();
}

CsvWriter& CsvWriter::cell(const std::string& text) {
  if (row_started_) out_ << ',';
  out_ << text;
  row_started_ = true;
  return *this;
}

CsvWriter& CsvWriter::cell(double v) { return cell(format_double(v)); }

CsvWriter& CsvWriter::cell(std::size_t v) { return cell(std::to_string(v)); }

void CsvWriter::end_row() {
  out_ << '\n';
  row_started_ = false;
}

void CsvWriter::close() {
  out_.close();
  if (!out_) throw DataError("failed writing " + path_.string());
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string current;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(std::move(current));
      current.clear();
    } else if (c != '\r') {
      current.push_back(c);
    }
  }
  fields.push_back(std::move(current));
  return fields;
}

}  // namespace se::io
