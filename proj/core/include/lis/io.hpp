#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "lis/common.hpp"

namespace lis {

// Shortest round-trip decimal form, locale independent. All CSV output goes
// through this so reruns with identical seeds are byte-identical.
std::string format_double(double value);

// Minimal CSV writer: one header row, then data rows.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);

  void row(std::span<const double> values);
  void row(const Vec& values);
  void row(std::initializer_list<double> values);
  void raw_row(const std::vector<std::string>& cells);

 private:
  std::ofstream out_;
  std::size_t columns_;
};

void write_matrix_csv(const std::filesystem::path& path, const Mat& matrix,
                      const std::vector<std::string>& header);

// Reads a numeric CSV written by write_matrix_csv / CsvWriter (header skipped).
Mat read_matrix_csv(const std::filesystem::path& path);

// FNV-1a 64-bit content hash, hex encoded; used in run manifests.
std::uint64_t fnv1a64(std::span<const char> bytes);
std::string file_content_hash(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace lis
