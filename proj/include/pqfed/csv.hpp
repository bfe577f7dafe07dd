#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace pqfed {

/// Shortest round-trip decimal representation of a double.
std::string format_double(double v);

/// Rectangular string table with a fixed column order; the unit every report
/// CSV is rendered from.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  bool empty() const { return rows.empty(); }
};

std::string to_csv(const Table& table);
void write_table_csv(const std::filesystem::path& path, const Table& table);
Table read_table_csv(const std::filesystem::path& path);

/// FNV-1a over a file's bytes, for manifest content hashes.
uint64_t hash_file(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

std::vector<std::string> split(const std::string& line, char sep);
std::string trim(const std::string& s);

}  // namespace pqfed
