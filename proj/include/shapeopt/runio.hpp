#pragma once

#include <map>
#include <string>
#include <vector>

#include "shapeopt/descent.hpp"

namespace shapeopt {

void write_records_csv(const std::vector<IterateRecord>& records, const std::string& path);
std::vector<IterateRecord> read_records_csv(const std::string& path);

void write_boundary_csv(const std::vector<Vec2>& loop, const std::string& path);

/// key=value lines, keys in insertion order.
using KeyValues = std::vector<std::pair<std::string, std::string>>;
void write_key_values(const KeyValues& kv, const std::string& path);
std::map<std::string, std::string> read_key_values(const std::string& path);

/// Full run directory: records.csv, boundary_iter_<k>.csv, final_mesh.txt,
/// summary.txt and, when density dumps are requested, per-iteration overlays.
void write_run_directory(const RunResult& run, const std::string& dir);

}  // namespace shapeopt
