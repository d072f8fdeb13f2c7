// Command-line driver for the low-regret shape-identification pipeline:
// nominal runs, low-regret runs, epsilon sweeps, the stress-data regret
// study, and the finite-difference gradient gate.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "shapeopt/errors.hpp"
#include "shapeopt/shapegrad.hpp"
#include "shapeopt/experiments.hpp"
#include "shapeopt/runio.hpp"

namespace fs = std::filesystem;
using namespace shapeopt;

namespace {

struct Options {
  std::string mode = "nominal";
  std::string target = "circle";
  std::string eps = "8,4,2,1,0.5,0.25,0.225,0.125,0.0625";
  std::string g_bounds = "-0.2,0.2";
  double alpha = 0.0;  // 0 = proportional to the boundary spacing
  double sigma = 0.998;
  double tol = 1e-7;
  int max_iter = 2000;
  std::string out;
  bool coarse = false;
  int threads = 1;
  bool verify = false;
};

std::vector<double> parse_csv_doubles(const std::string& csv) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos < csv.size()) {
    const std::size_t comma = csv.find(',', pos);
    const std::string token = csv.substr(pos, comma == std::string::npos ? comma : comma - pos);
    if (!token.empty()) {
      std::size_t used = 0;
      const double v = std::stod(token, &used);
      if (used != token.size()) throw ConfigError("bad number in list: " + token);
      out.push_back(v);
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  if (out.empty()) throw ConfigError("empty number list");
  return out;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string eps_dir_name(double eps) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "eps_%g", eps);
  return buf;
}

struct Pipeline {
  Options opt;
  std::string root;  // <out>/<target>
  TargetSpec spec;
  Resolutions res;
  RegretParams params;
  std::vector<double> eps_list;
  Problem problem;

  void write_snapshot(const std::string& dir) const {
    KeyValues kv;
    kv.emplace_back("mode", opt.mode);
    kv.emplace_back("target", opt.target);
    kv.emplace_back("eps", "\"" + opt.eps + "\"");
    kv.emplace_back("g-bounds", "\"" + opt.g_bounds + "\"");
    kv.emplace_back("alpha", format_double(params.alpha));
    kv.emplace_back("sigma", format_double(params.sigma));
    kv.emplace_back("tol", format_double(params.tol));
    kv.emplace_back("max-iter", std::to_string(params.max_iter));
    kv.emplace_back("out", opt.out);
    kv.emplace_back("coarse", opt.coarse ? "true" : "false");
    kv.emplace_back("threads", std::to_string(opt.threads));
    kv.emplace_back("verify", opt.verify ? "true" : "false");
    write_key_values(kv, dir + "/config.snapshot");
  }

  void persist_run(const RunResult& run, const std::string& dir) const {
    fs::create_directories(dir);
    write_snapshot(dir);
    write_run_directory(run, dir);
    save_field(run.u_d_final, "u_d", dir + "/u_d.txt");
  }

  RunResult run_nominal_fresh(const std::string& dir) {
    Objective objective;
    objective.mode = ObjectiveMode::Nominal;
    const RunResult run = optimize(problem, params, objective);
    persist_run(run, dir);

    SystemWorkspace ws(run.final_mesh);
    const auto f = make_field(run.final_mesh, problem.f);
    const auto gd = make_trace(run.final_mesh, BoundaryLabel::Sigma, problem.g_d);
    const auto state = solve_state(ws, f, gd, run.u_d_final);
    NominalData nominal;
    nominal.jtilde = eval_Jtilde(state, run.u_d_final);
    nominal.flux_sigma = state_flux_on_sigma(ws, state, run.u_d_final);
    save_trace_csv(nominal.flux_sigma, dir + "/nominal_flux_sigma.csv");
    write_key_values({{"jtilde", format_double(nominal.jtilde)},
                      {"converged", run.converged ? "1" : "0"}},
                     dir + "/nominal.txt");
    return run;
  }

  NominalData ensure_nominal() {
    const std::string dir = root + "/nominal";
    const std::string flux_csv = dir + "/nominal_flux_sigma.csv";
    const std::string meta = dir + "/nominal.txt";
    if (!fs::exists(flux_csv) || !fs::exists(meta)) {
      std::printf("[regret_shape] nominal cache missing; running the nominal problem\n");
      run_nominal_fresh(dir);
    }
    NominalData nominal;
    nominal.flux_sigma = load_trace_csv(problem.mesh0, BoundaryLabel::Sigma, flux_csv);
    nominal.jtilde = std::stod(read_key_values(meta).at("jtilde"));
    return nominal;
  }

  std::vector<SweepEntry> load_or_run_sweep() {
    problem.nominal = ensure_nominal();
    std::vector<SweepEntry> entries;
    bool all_cached = true;
    for (double eps : eps_list) {
      if (!fs::exists(root + "/" + eps_dir_name(eps) + "/final_mesh.txt") ||
          !fs::exists(root + "/" + eps_dir_name(eps) + "/u_d.txt")) {
        all_cached = false;
        break;
      }
    }
    if (all_cached) {
      for (double eps : eps_list) {
        const std::string dir = root + "/" + eps_dir_name(eps);
        SweepEntry entry;
        entry.eps = eps;
        RunResult run;
        run.final_mesh = load_mesh(dir + "/final_mesh.txt");
        run.u_d_final = load_field(run.final_mesh, dir + "/u_d.txt");
        run.final_gamma = loop_polyline(*run.final_mesh, BoundaryLabel::GammaPhi);
        const auto summary = read_key_values(dir + "/summary.txt");
        run.converged = summary.at("converged") == "1";
        run.jeps = std::stod(summary.at("jeps"));
        run.tracking = std::stod(summary.at("tracking"));
        run.gbar_norm = std::stod(summary.at("gbar_norm"));
        entry.result = std::move(run);
        entries.push_back(std::move(entry));
      }
      return entries;
    }
    entries = epsilon_sweep(problem, eps_list, params, opt.threads);
    for (const auto& entry : entries) {
      if (entry.result) persist_run(*entry.result, root + "/" + eps_dir_name(entry.eps));
    }
    write_sweep_table(entries, root + "/sweep_table.csv");
    return entries;
  }

  ReportInputs report_inputs(const std::vector<SweepEntry>& sweep) {
    ReportInputs inputs;
    inputs.target = opt.target;
    inputs.gamma_d = hidden_boundary_curve(spec.hidden_boundary, res.n_gamma_d).sample();
    const std::string nominal_mesh = root + "/nominal/final_mesh.txt";
    if (fs::exists(nominal_mesh)) {
      inputs.gamma_nominal = loop_polyline(*load_mesh(nominal_mesh), BoundaryLabel::GammaPhi);
    }
    for (const auto& entry : sweep) {
      if (entry.result) inputs.gamma_eps.emplace_back(entry.eps, entry.result->final_gamma);
    }
    return inputs;
  }

  // transformed-domain derivative versus the boundary integral at the
  // initial shape, enabled by --verify
  void volumetric_cross_check(const std::optional<NominalData>& nominal, double eps) const {
    SystemWorkspace ws(problem.mesh0);
    const auto f = make_field(problem.mesh0, problem.f);
    const auto gd = make_trace(problem.mesh0, BoundaryLabel::Sigma, problem.g_d);
    const auto state = solve_state(ws, f, gd, problem.u_d);
    BoundaryTrace gbar = constant_trace(problem.mesh0, BoundaryLabel::Sigma, 0.0);
    if (nominal) {
      RegretParams local = params;
      local.eps = eps;
      gbar = eval_Jeps(ws, state, problem.u_d, *nominal, local).gbar;
    }
    const auto adjoint = solve_adjoint(ws, state, problem.u_d, gbar);
    const auto density = gradient_density(ws, state, adjoint, problem.u_d, f);
    const auto direction = traction_extend(ws, density, params.alpha);
    const double boundary_form = directional_derivative(problem.mesh0, density, direction);
    const double volume_form =
        volumetric_derivative(problem.mesh0, state, adjoint, problem.u_d, f, direction);
    const double rel = std::abs(volume_form - boundary_form) /
                       std::max(1e-300, std::abs(boundary_form));
    std::printf("[regret_shape] derivative cross-check at the initial shape: boundary=%.6e "
                "volumetric=%.6e rel diff=%.2e (gate 5e-2)\n",
                boundary_form, volume_form, rel);
  }

  int run_mode() {
    fs::create_directories(root);
    if (opt.mode == "nominal") {
      if (opt.verify) volumetric_cross_check(std::nullopt, 0.5);
      const RunResult run = run_nominal_fresh(root + "/nominal");
      std::printf("[regret_shape] nominal: converged=%d iters=%d jtilde=%.6g\n", run.converged,
                  run.records.back().iter, run.tracking);
      return 0;
    }
    if (opt.mode == "lowregret") {
      if (eps_list.size() != 1) throw ConfigError("mode lowregret expects a single --eps value");
      problem.nominal = ensure_nominal();
      if (opt.verify) volumetric_cross_check(problem.nominal, eps_list[0]);
      Objective objective;
      objective.mode = ObjectiveMode::LowRegret;
      objective.eps = eps_list[0];
      const RunResult run = optimize(problem, params, objective);
      persist_run(run, root + "/" + eps_dir_name(eps_list[0]));
      std::printf("[regret_shape] eps=%g: converged=%d iters=%d Jeps=%.6g gbar=%.6g\n",
                  eps_list[0], run.converged, run.records.back().iter, run.jeps, run.gbar_norm);
      return 0;
    }
    if (opt.mode == "sweep") {
      const auto entries = load_or_run_sweep();
      write_sweep_table(entries, root + "/sweep_table.csv");
      emit_report(report_inputs(entries), root);
      int failures = 0;
      for (const auto& entry : entries) {
        if (!entry.result) {
          ++failures;
          std::fprintf(stderr, "[regret_shape] eps=%g failed: %s\n", entry.eps,
                       entry.error.c_str());
        }
      }
      std::printf("[regret_shape] sweep finished, %d/%zu runs ok\n",
                  static_cast<int>(entries.size()) - failures, entries.size());
      return failures == 0 ? 0 : 1;
    }
    if (opt.mode == "regret-study") {
      const auto sweep = load_or_run_sweep();
      std::vector<int> i_range;
      for (int i = 1; i <= 10; ++i) i_range.push_back(i);
      const auto study = regret_study(problem, sweep, i_range, params, opt.threads);
      write_regret_table(study, root + "/regret_table.csv");
      ReportInputs inputs = report_inputs(sweep);
      inputs.study = &study;
      emit_report(inputs, root);
      int failures = 0;
      for (const auto& cell : study.cells) {
        if (!cell.error.empty()) ++failures;
      }
      std::printf("[regret_shape] regret study finished, %zu cells, %d failed\n",
                  study.cells.size(), failures);
      return failures == 0 ? 0 : 1;
    }
    if (opt.mode == "verify-gradient") {
      problem.nominal = ensure_nominal();
      const double eps = eps_list.size() == 1 ? eps_list[0] : 0.5;
      const auto check = verify_gradient(problem, params, eps, {0, 20, 60}, 5);
      for (const auto& e : check.entries) {
        std::printf("iterate %d direction %d: best_rel_err=%.3e at t=%.3e, slope=%.2f over %gx\n",
                    e.iterate, e.direction, e.best_rel_err, e.best_t, e.slope, e.decade_span);
      }
      std::printf("[regret_shape] gradient verification %s\n", check.pass ? "PASSED" : "FAILED");
      return check.pass ? 0 : 1;
    }
    throw ConfigError("unknown mode: " + opt.mode);
  }
};

}  // namespace

int main(int argc, char** argv) {
  Options opt;
  CLI::App app{"low-regret shape identification on a deformable annulus"};
  app.set_config("--config", "", "flat key=value configuration file");
  app.add_option("--mode", opt.mode,
                 "nominal | lowregret | sweep | regret-study | verify-gradient");
  app.add_option("--target", opt.target, "circle | arrowhead");
  app.add_option("--eps", opt.eps, "epsilon value or comma-separated list");
  app.add_option("--g-bounds", opt.g_bounds, "box bounds for the missing data, as a,b");
  app.add_option("--alpha", opt.alpha, "traction regularization (0 = boundary-spacing scaled)");
  app.add_option("--sigma", opt.sigma, "step-scaling base in (0,1)");
  app.add_option("--tol", opt.tol, "stopping tolerance");
  app.add_option("--max-iter", opt.max_iter, "iteration limit");
  app.add_option("--out", opt.out, "output root (default $REGRET_SHAPE_OUT or ./runs)");
  app.add_flag("--coarse", opt.coarse, "halve all boundary resolutions");
  app.add_option("--threads", opt.threads, "parallel scenario workers");
  app.add_flag("--verify", opt.verify, "enable the volumetric derivative cross-check output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (opt.out.empty()) {
      const char* env = std::getenv("REGRET_SHAPE_OUT");
      opt.out = env && *env ? env : "runs";
    }
    Pipeline pipeline;
    pipeline.opt = opt;
    pipeline.spec = TargetSpec{target_from_name(opt.target), 2};
    pipeline.res = opt.coarse ? Resolutions{}.coarsened() : Resolutions{};
    pipeline.eps_list = parse_csv_doubles(opt.eps);
    pipeline.root = opt.out + "/" + opt.target;

    const auto bounds = parse_csv_doubles(opt.g_bounds);
    if (bounds.size() != 2) throw ConfigError("--g-bounds expects two values a,b");

    pipeline.problem = make_problem(pipeline.spec, pipeline.res);
    pipeline.params.g_a = bounds[0];
    pipeline.params.g_b = bounds[1];
    pipeline.params.sigma = opt.sigma;
    pipeline.params.tol = opt.tol;
    pipeline.params.max_iter = opt.max_iter;
    pipeline.params.alpha =
        opt.alpha > 0.0 ? opt.alpha : default_alpha(*pipeline.problem.mesh0);
    pipeline.params.validate();

    return pipeline.run_mode();
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "[regret_shape] configuration error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "[regret_shape] runtime failure: %s\n", e.what());
    return 1;
  }
}
