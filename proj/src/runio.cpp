#include "shapeopt/runio.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace shapeopt {

void write_records_csv(const std::vector<IterateRecord>& records, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  std::fprintf(f, "iter,Jeps,tracking,fenchel_value,gbar_norm,grad_norm,step,quality,remeshed\n");
  for (const auto& r : records) {
    std::fprintf(f, "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d\n", r.iter, r.jeps,
                 r.tracking, r.fenchel_value, r.gbar_norm, r.grad_norm, r.step, r.quality,
                 r.remeshed ? 1 : 0);
  }
  std::fclose(f);
}

std::vector<IterateRecord> read_records_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  std::getline(in, line);  // header
  std::vector<IterateRecord> records;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    IterateRecord r;
    int remeshed = 0;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    ss >> r.iter >> r.jeps >> r.tracking >> r.fenchel_value >> r.gbar_norm >> r.grad_norm >>
        r.step >> r.quality >> remeshed;
    if (!ss) throw std::runtime_error("bad record row in " + path);
    r.remeshed = remeshed != 0;
    records.push_back(r);
  }
  return records;
}

void write_boundary_csv(const std::vector<Vec2>& loop, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  std::fprintf(f, "x,y\n");
  for (const Vec2& p : loop) std::fprintf(f, "%.17g,%.17g\n", p.x, p.y);
  std::fclose(f);
}

void write_key_values(const KeyValues& kv, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  for (const auto& [key, value] : kv) std::fprintf(f, "%s=%s\n", key.c_str(), value.c_str());
  std::fclose(f);
}

std::map<std::string, std::string> read_key_values(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::runtime_error("bad key=value line in " + path);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

void write_run_directory(const RunResult& run, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  write_records_csv(run.records, dir + "/records.csv");
  for (std::size_t k = 0; k < run.gamma_history.size(); ++k) {
    const std::string path = dir + "/boundary_iter_" + std::to_string(k) + ".csv";
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");
    std::fprintf(f, "x,y,density\n");
    const auto& loop = run.gamma_history[k];
    const auto& density = run.density_history[k];
    for (std::size_t i = 0; i < loop.size(); ++i) {
      std::fprintf(f, "%.17g,%.17g,%.17g\n", loop[i].x, loop[i].y,
                   i < static_cast<std::size_t>(density.size()) ? density[i] : 0.0);
    }
    std::fclose(f);
  }
  if (run.final_mesh) save_mesh(*run.final_mesh, dir + "/final_mesh.txt");

  char buf[64];
  KeyValues kv;
  auto put = [&](const char* key, double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    kv.emplace_back(key, buf);
  };
  kv.emplace_back("converged", run.converged ? "1" : "0");
  kv.emplace_back("iterations", std::to_string(run.records.empty() ? 0 : run.records.back().iter));
  put("jeps", run.jeps);
  put("tracking", run.tracking);
  put("gbar_norm", run.gbar_norm);
  write_key_values(kv, dir + "/summary.txt");
}

}  // namespace shapeopt
