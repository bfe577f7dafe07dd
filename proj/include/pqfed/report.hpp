#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "pqfed/config.hpp"
#include "pqfed/csv.hpp"

namespace pqfed {

/// Record of one CLI run: config hash, emitted artifacts with content hashes,
/// input data hashes, and per-stage wall-clock. Written as manifest.txt (kept
/// out of the CSV set so timing noise never touches data artifacts).
struct RunManifest {
  uint64_t config_hash = 0;
  std::vector<std::pair<std::string, uint64_t>> artifacts;
  std::vector<std::pair<std::string, uint64_t>> inputs;
  std::vector<std::pair<std::string, double>> stage_seconds;

  void add_artifact(const std::filesystem::path& path);
  void add_input(const std::filesystem::path& path);
  void write(const std::filesystem::path& path) const;
};

/// Writes each named table as CSV under `dir`, appends the artifacts to the
/// manifest, and renders a plain-text summary (best row per algorithm for
/// tables with an accuracy column).
void render_report(const std::filesystem::path& dir,
                   const std::vector<std::pair<std::string, Table>>& tables,
                   RunManifest& manifest);

std::string summarize_tables(const std::vector<std::pair<std::string, Table>>& tables);

}  // namespace pqfed
