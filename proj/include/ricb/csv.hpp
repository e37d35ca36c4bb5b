#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace ricb {

// Numeric table with a header row. Cells are plain comma-separated values
// without quoting.
struct CsvTable
{
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

struct TextTable
{
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const;
};

CsvTable read_csv(const std::filesystem::path& path);
TextTable read_text_csv(const std::filesystem::path& path);
void write_csv(const CsvTable& table, const std::filesystem::path& path);
void write_text_csv(const TextTable& table, const std::filesystem::path& path);

// Shortest representation that parses back to the same double.
std::string format_double(double v);
double parse_double(const std::string& s);

} // namespace ricb
