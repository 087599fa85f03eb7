#include "lis/io.hpp"

#include <charconv>
#include <sstream>
#include <system_error>

namespace lis {

std::string format_double(double value) {
  char buffer[40];
  const auto result = std::to_chars(buffer, buffer + sizeof(buffer), value);
  return std::string(buffer, result.ptr);
}

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
    : out_(path), columns_(header.size()) {
  if (!out_) throw numerical_error("cannot open CSV for writing: " + path.string());
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i > 0) out_ << ',';
    out_ << header[i];
  }
  out_ << '\n';
}

void CsvWriter::row(std::span<const double> values) {
  require(values.size() == columns_, "CSV row width does not match header");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i > 0) out_ << ',';
    out_ << format_double(values[i]);
  }
  out_ << '\n';
}

void CsvWriter::row(const Vec& values) {
  row(std::span<const double>(values.data(), static_cast<std::size_t>(values.size())));
}

void CsvWriter::row(std::initializer_list<double> values) {
  row(std::span<const double>(values.begin(), values.size()));
}

void CsvWriter::raw_row(const std::vector<std::string>& cells) {
  require(cells.size() == columns_, "CSV row width does not match header");
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i > 0) out_ << ',';
    out_ << cells[i];
  }
  out_ << '\n';
}

void write_matrix_csv(const std::filesystem::path& path, const Mat& matrix,
                      const std::vector<std::string>& header) {
  CsvWriter writer(path, header);
  for (Eigen::Index i = 0; i < matrix.rows(); ++i) {
    Vec row = matrix.row(i);
    writer.row(row);
  }
}

Mat read_matrix_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw numerical_error("cannot open CSV for reading: " + path.string());
  std::string line;
  std::getline(in, line);  // header
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(std::stod(cell));
    rows.push_back(std::move(cells));
  }
  if (rows.empty()) return Mat(0, 0);
  Mat out(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i].size() == rows.front().size(), "ragged CSV: " + path.string());
    for (std::size_t j = 0; j < rows[i].size(); ++j) out(i, j) = rows[i][j];
  }
  return out;
}

std::uint64_t fnv1a64(std::span<const char> bytes) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (char c : bytes) {
    hash ^= static_cast<unsigned char>(c);
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

std::string file_content_hash(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  char buffer[17];
  std::snprintf(buffer, sizeof(buffer), "%016llx",
                static_cast<unsigned long long>(fnv1a64(std::span<const char>(text.data(), text.size()))));
  return std::string(buffer);
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw numerical_error("cannot open file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw numerical_error("cannot open file for writing: " + path.string());
  out << text;
}

}  // namespace lis
