#pragma once

// Small CSV reader/writer: comma separated, double-quoted fields, first row
// is the header.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace schoolmerge::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::optional<std::size_t> column(const std::string& name) const;
  std::size_t require_column(const std::string& name) const;
};

Table parse(const std::string& text);
Table read_file(const std::filesystem::path& path);
std::string read_text(const std::filesystem::path& path);

std::string escape(const std::string& field);
std::string join(const std::vector<std::string>& fields);

// Shortest decimal form that round-trips, so output is stable across runs.
std::string number(double value);

double to_double(const std::string& field, const std::string& where);

void write_file(const std::filesystem::path& path, const std::string& contents);

}  // namespace schoolmerge::csv
