#include "ricb/csv.hpp"

#include "ricb/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace ricb {

namespace {

std::vector<std::string> split_line(const std::string& line)
{
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ','))
    out.push_back(cell);
  if (!line.empty() && line.back() == ',')
    out.emplace_back();
  return out;
}

std::string strip(std::string s)
{
  while (!s.empty() && (s.back() == '\r' || s.back() == ' '))
    s.pop_back();
  std::size_t b = 0;
  while (b < s.size() && s[b] == ' ')
    ++b;
  return s.substr(b);
}

std::ifstream open_text(const std::filesystem::path& path)
{
  std::ifstream in(path);
  if (!in)
    throw IoError("cannot open " + path.string());
  return in;
}

} // namespace

std::size_t TextTable::column(const std::string& name) const
{
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end())
    throw FormatError("missing column '" + name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

double parse_double(const std::string& raw)
{
  const std::string s = strip(raw);
  double v = 0.0;
  const auto* b = s.data();
  const auto* e = s.data() + s.size();
  auto [p, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || p != e)
    throw FormatError("not a number: '" + s + "'");
  return v;
}

std::string format_double(double v)
{
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc())
    throw InvalidArgument("cannot format double");
  return std::string(buf, p);
}

TextTable read_text_csv(const std::filesystem::path& path)
{
  std::ifstream in = open_text(path);
  TextTable t;
  std::string line;
  if (!std::getline(in, line))
    throw FormatError(path.string() + ": empty file");
  for (auto& h : split_line(line))
    t.header.push_back(strip(h));
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (strip(line).empty())
      continue;
    auto cells = split_line(line);
    if (cells.size() != t.header.size())
      throw FormatError(path.string() + ":" + std::to_string(lineno) +
                        ": expected " + std::to_string(t.header.size()) +
                        " fields, got " + std::to_string(cells.size()));
    for (auto& c : cells)
      c = strip(c);
    t.rows.push_back(std::move(cells));
  }
  return t;
}

CsvTable read_csv(const std::filesystem::path& path)
{
  TextTable text = read_text_csv(path);
  CsvTable t;
  t.header = std::move(text.header);
  t.rows.reserve(text.rows.size());
  for (std::size_t i = 0; i < text.rows.size(); ++i) {
    std::vector<double> r;
    r.reserve(text.rows[i].size());
    for (const auto& c : text.rows[i]) {
      try {
        r.push_back(parse_double(c));
      } catch (const FormatError& e) {
        throw FormatError(path.string() + ":" + std::to_string(i + 2) + ": " +
                          e.what());
      }
    }
    t.rows.push_back(std::move(r));
  }
  return t;
}

void write_text_csv(const TextTable& table, const std::filesystem::path& path)
{
  std::ofstream out(path);
  if (!out)
    throw IoError("cannot write " + path.string());
  auto emit = [&](const std::vector<std::string>& cells) {
    for (std::size_t j = 0; j < cells.size(); ++j)
      out << (j ? "," : "") << cells[j];
    out << '\n';
  };
  emit(table.header);
  for (const auto& r : table.rows)
    emit(r);
  if (!out)
    throw IoError("short write to " + path.string());
}

void write_csv(const CsvTable& table, const std::filesystem::path& path)
{
  TextTable t;
  t.header = table.header;
  for (const auto& r : table.rows) {
    std::vector<std::string> cells;
    cells.reserve(r.size());
    for (double v : r)
      cells.push_back(format_double(v));
    t.rows.push_back(std::move(cells));
  }
  write_text_csv(t, path);
}

} // namespace ricb
