#include "pqfed/report.hpp"

#include <algorithm>
#include <sstream>

#include "pqfed/error.hpp"

namespace pqfed {

void RunManifest::add_artifact(const std::filesystem::path& path) {
  artifacts.push_back({path.string(), hash_file(path)});
}

void RunManifest::add_input(const std::filesystem::path& path) {
  inputs.push_back({path.string(), hash_file(path)});
}

void RunManifest::write(const std::filesystem::path& path) const {
  std::ostringstream out;
  out << "config_hash=" << config_hash << '\n';
  for (const auto& [p, h] : inputs) out << "input " << p << " hash=" << h << '\n';
  for (const auto& [p, h] : artifacts) out << "artifact " << p << " hash=" << h << '\n';
  for (const auto& [stage, s] : stage_seconds) {
    out << "stage " << stage << " seconds=" << format_double(s) << '\n';
  }
  write_text_file(path, out.str());
}

std::string summarize_tables(const std::vector<std::pair<std::string, Table>>& tables) {
  std::ostringstream out;
  for (const auto& [name, table] : tables) {
    out << name << ": " << table.rows.size() << " rows\n";
    const auto acc_it = std::find(table.columns.begin(), table.columns.end(), "accuracy");
    const auto algo_it = std::find(table.columns.begin(), table.columns.end(), "algorithm");
    if (acc_it == table.columns.end() || algo_it == table.columns.end()) continue;
    const size_t acc = static_cast<size_t>(acc_it - table.columns.begin());
    const size_t algo = static_cast<size_t>(algo_it - table.columns.begin());
    std::vector<std::string> algos;
    for (const auto& row : table.rows) {
      if (std::find(algos.begin(), algos.end(), row[algo]) == algos.end()) {
        algos.push_back(row[algo]);
      }
    }
    for (const auto& a : algos) {
      const std::vector<std::string>* best = nullptr;
      for (const auto& row : table.rows) {
        if (row[algo] != a) continue;
        if (!best || std::stod(row[acc]) > std::stod((*best)[acc])) best = &row;
      }
      if (best) {
        out << "  best " << a << ":";
        for (size_t c = 0; c < table.columns.size(); ++c) {
          out << ' ' << table.columns[c] << '=' << (*best)[c];
        }
        out << '\n';
      }
    }
  }
  return out.str();
}

void render_report(const std::filesystem::path& dir,
                   const std::vector<std::pair<std::string, Table>>& tables,
                   RunManifest& manifest) {
  if (tables.empty()) throw PreconditionError("render_report needs at least one table");
  std::filesystem::create_directories(dir);
  for (const auto& [name, table] : tables) {
    const auto path = dir / (name + ".csv");
    write_table_csv(path, table);
    manifest.add_artifact(path);
  }
  const auto summary_path = dir / "summary.txt";
  write_text_file(summary_path, summarize_tables(tables));
  manifest.add_artifact(summary_path);
}

}  // namespace pqfed
