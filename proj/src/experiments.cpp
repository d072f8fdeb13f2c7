#include "shapeopt/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <mutex>
#include <numbers>
#include <random>
#include <thread>

#include "shapeopt/errors.hpp"

namespace shapeopt {

namespace {
constexpr double kPi = std::numbers::pi;
}

const char* target_name(TargetKind kind) {
  return kind == TargetKind::Circle ? "circle" : "arrowhead";
}

TargetKind target_from_name(const std::string& name) {
  if (name == "circle") return TargetKind::Circle;
  if (name == "arrowhead") return TargetKind::Arrowhead;
  throw ConfigError("unknown target: " + name);
}

Resolutions Resolutions::coarsened() const {
  Resolutions r;
  r.n_sigma = std::max(8, n_sigma / 2);
  r.n_omega_outer = std::max(8, n_omega_outer / 2);
  r.n_omega_inner = std::max(8, n_omega_inner / 2);
  r.n_gamma = std::max(8, n_gamma / 2);
  r.n_gamma_d = std::max(8, n_gamma_d / 2);
  return r;
}

double default_source(Vec2) { return 1.0; }

double default_dirichlet(Vec2 p) {
  return 0.1 * std::cos(2.0 * kPi * p.x) * std::sin(2.0 * kPi * p.y);
}

BoundaryCurve hidden_boundary_curve(TargetKind kind, int samples) {
  if (kind == TargetKind::Circle) {
    return BoundaryCurve::circle({0.1, 0.0}, 0.25, samples);
  }
  return BoundaryCurve::arrowhead(samples);
}

MeshPtr make_working_mesh(const Resolutions& res) {
  return build_annulus(
      {BoundaryCurve::circle({0, 0}, 2.0, res.n_sigma), BoundaryLabel::Sigma},
      {{BoundaryCurve::circle({0, 0}, 1.75, res.n_omega_outer), BoundaryLabel::OmegaOuter},
       {BoundaryCurve::circle({0, 0}, 1.0, res.n_omega_inner), BoundaryLabel::OmegaInner}},
      {BoundaryCurve::circle({0, 0}, 0.75, res.n_gamma), BoundaryLabel::GammaPhi});
}

MeshPtr make_target_mesh(const TargetSpec& spec, const Resolutions& res) {
  const int m = spec.resolution_multiplier;
  if (m < 1) throw ConfigError("resolution multiplier must be >= 1");
  return build_annulus(
      {BoundaryCurve::circle({0, 0}, 2.0, m * res.n_sigma), BoundaryLabel::Sigma},
      {{BoundaryCurve::circle({0, 0}, 1.75, m * res.n_omega_outer), BoundaryLabel::OmegaOuter},
       {BoundaryCurve::circle({0, 0}, 1.0, m * res.n_omega_inner), BoundaryLabel::OmegaInner}},
      {hidden_boundary_curve(spec.hidden_boundary, m * res.n_gamma_d), BoundaryLabel::GammaD});
}

ScalarField make_target(const TargetSpec& spec, const Resolutions& res, const MeshPtr& working,
                        const std::function<double(Vec2)>& f,
                        const std::function<double(Vec2)>& g_d) {
  const MeshPtr target_mesh = make_target_mesh(spec, res);
  const auto source = make_field(target_mesh, f);
  const auto gd = make_trace(target_mesh, BoundaryLabel::Sigma, g_d);
  const auto v = solve_dirichlet(target_mesh, source,
                                 {{BoundaryLabel::Sigma, 0.0, &gd},
                                  {BoundaryLabel::GammaD, 0.0, nullptr}});
  return interpolate(v, working);
}

Problem make_problem(const TargetSpec& spec, const Resolutions& res) {
  Problem problem;
  problem.mesh0 = make_working_mesh(res);
  problem.f = default_source;
  problem.g_d = default_dirichlet;
  problem.u_d = make_target(spec, res, problem.mesh0, default_source, default_dirichlet);
  return problem;
}

BoundaryTrace make_gdelta(int i, const MeshPtr& mesh) {
  if (i < 1 || i > 10) throw IndexOutOfRange("gdelta index must lie in [1, 10]");
  const double denom = 30.0 * (1.0 - 0.099 * i);
  return make_trace(mesh, BoundaryLabel::Sigma, [denom](Vec2 p) {
    const double raw = p.x * p.y / denom +
                       0.02 * std::cos(4.0 * kPi * p.x) * std::cos(4.0 * kPi * p.y);
    return std::min(0.2, std::max(-0.2, raw));
  });
}

RegretStudyResult regret_study(const Problem& problem, const std::vector<SweepEntry>& sweep,
                               const std::vector<int>& i_range, const RegretParams& params,
                               int threads) {
  RegretStudyResult study;
  study.i_range = i_range;
  for (const auto& entry : sweep) study.eps_list.push_back(entry.eps);

  // per-i optimizations under the fixed stress data
  std::vector<RunResult> opt_runs(i_range.size());
  std::vector<std::string> opt_errors(i_range.size());
  {
    std::mutex next_mutex;
    std::size_t next = 0;
    auto worker = [&]() {
      for (;;) {
        std::size_t idx;
        {
          std::lock_guard<std::mutex> lock(next_mutex);
          if (next >= i_range.size()) return;
          idx = next++;
        }
        try {
          Objective objective;
          objective.mode = ObjectiveMode::FixedDelta;
          objective.g_delta = make_gdelta(i_range[idx], problem.mesh0).values;
          opt_runs[idx] = optimize(problem, params, objective);
        } catch (const std::exception& e) {
          opt_errors[idx] = e.what();
        }
      }
    };
    const int n_workers = std::max(1, std::min<int>(threads, static_cast<int>(i_range.size())));
    if (n_workers == 1) {
      worker();
    } else {
      std::vector<std::thread> pool;
      for (int t = 0; t < n_workers; ++t) pool.emplace_back(worker);
      for (auto& th : pool) th.join();
    }
  }

  for (std::size_t ii = 0; ii < i_range.size(); ++ii) {
    for (const auto& entry : sweep) {
      RegretStudyCell cell;
      cell.i = i_range[ii];
      cell.eps = entry.eps;
      if (!opt_errors[ii].empty()) {
        cell.error = "fixed-delta run failed: " + opt_errors[ii];
      } else if (!entry.result) {
        cell.error = "sweep run failed: " + entry.error;
      } else {
        try {
          const MeshPtr mesh_eps = entry.result->final_mesh;
          const auto g_delta = make_gdelta(cell.i, mesh_eps);
          const auto f = make_field(mesh_eps, problem.f);
          const auto gd = make_trace(mesh_eps, BoundaryLabel::Sigma, problem.g_d);
          cell.j_opt = opt_runs[ii].tracking;
          cell.j_lowregret =
              eval_J_with_delta(mesh_eps, g_delta, entry.result->u_d_final, f, gd);
          cell.diff = cell.j_lowregret - cell.j_opt;
        } catch (const std::exception& e) {
          cell.error = e.what();
        }
      }
      study.cells.push_back(std::move(cell));
    }
  }
  return study;
}

void write_regret_table(const RegretStudyResult& study, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  std::fprintf(f, "i,eps,J_opt,J_lowregret,diff\n");
  for (const auto& cell : study.cells) {
    if (!cell.error.empty()) continue;
    std::fprintf(f, "%d,%.17g,%.17g,%.17g,%.17g\n", cell.i, cell.eps, cell.j_opt,
                 cell.j_lowregret, cell.diff);
  }
  std::fclose(f);
}

void write_sweep_table(const std::vector<SweepEntry>& sweep, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  std::fprintf(f, "eps,Jeps,tracking,gbar_norm,converged\n");
  for (const auto& entry : sweep) {
    if (!entry.result) continue;
    std::fprintf(f, "%.17g,%.17g,%.17g,%.17g,%d\n", entry.eps, entry.result->jeps,
                 entry.result->tracking, entry.result->gbar_norm,
                 entry.result->converged ? 1 : 0);
  }
  std::fclose(f);
}

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
                          "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

void svg_polyline(std::FILE* f, const std::vector<Vec2>& pts, const char* color, double width) {
  std::fprintf(f, "<polyline fill=\"none\" stroke=\"%s\" stroke-width=\"%g\" points=\"", color,
               width);
  for (const Vec2& p : pts) std::fprintf(f, "%.6f,%.6f ", p.x, -p.y);
  if (!pts.empty()) std::fprintf(f, "%.6f,%.6f", pts[0].x, -pts[0].y);
  std::fprintf(f, "\"/>\n");
}

}  // namespace

void emit_report(const ReportInputs& inputs, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const std::string svg_path = out_dir + "/boundaries_" + inputs.target + ".svg";
  std::FILE* f = std::fopen(svg_path.c_str(), "w");
  if (!f) throw std::runtime_error("cannot open " + svg_path + " for writing");
  std::fprintf(f, "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"-2.2 -2.2 4.4 4.4\" "
                  "width=\"720\" height=\"720\">\n");
  std::fprintf(f, "<rect x=\"-2.2\" y=\"-2.2\" width=\"4.4\" height=\"4.4\" fill=\"white\"/>\n");
  double y_legend = -2.05;
  auto legend = [&](const char* text, const char* color) {
    std::fprintf(f,
                 "<text x=\"-2.1\" y=\"%.3f\" font-size=\"0.09\" fill=\"%s\">%s</text>\n",
                 y_legend, color, text);
    y_legend += 0.12;
  };
  if (!inputs.gamma_d.empty()) {
    svg_polyline(f, inputs.gamma_d, "black", 0.012);
    legend("Gamma_d", "black");
  }
  if (inputs.gamma_nominal) {
    svg_polyline(f, *inputs.gamma_nominal, kPalette[0], 0.008);
    legend("Gamma(nominal)", kPalette[0]);
  }
  int color = 1;
  for (const auto& [eps, loop] : inputs.gamma_eps) {
    const char* c = kPalette[color % 10];
    svg_polyline(f, loop, c, 0.006);
    char text[64];
    std::snprintf(text, sizeof text, "Gamma(eps=%g)", eps);
    legend(text, c);
    ++color;
  }
  std::fprintf(f, "</svg>\n");
  std::fclose(f);

  if (inputs.study) {
    write_regret_table(*inputs.study, out_dir + "/regret_table.csv");
  }
}

}  // namespace shapeopt
namespace shapeopt {

namespace {

DeformationField fourier_direction(const SystemWorkspace& ws, std::mt19937& rng) {
  const auto& loop = ws.mesh()->loop(BoundaryLabel::GammaPhi);
  std::normal_distribution<double> dist(0.0, 1.0);
  double ax[4], bx[4], ay[4], by[4];
  for (int m = 0; m < 4; ++m) {
    ax[m] = dist(rng);
    bx[m] = dist(rng);
    ay[m] = dist(rng);
    by[m] = dist(rng);
  }
  std::vector<Vec2> values(loop.size());
  for (std::size_t i = 0; i < loop.size(); ++i) {
    const Vec2 p = ws.mesh()->nodes[loop[i]];
    const double theta = std::atan2(p.y, p.x);
    Vec2 v{0.0, 0.0};
    for (int m = 0; m < 4; ++m) {
      v.x += ax[m] * std::cos(m * theta) + bx[m] * std::sin(m * theta);
      v.y += ay[m] * std::cos(m * theta) + by[m] * std::sin(m * theta);
    }
    values[i] = 0.25 * v;
  }
  return extend_gamma_field(ws, values);
}

}  // namespace

GradientCheckResult verify_gradient(const Problem& problem, const RegretParams& params, double eps,
                                    const std::vector<int>& iterates, int directions,
                                    unsigned seed) {
  if (!problem.nominal) throw ConfigError("verify_gradient requires the nominal cache");
  GradientCheckResult result;
  result.pass = true;

  RegretParams local = params;
  local.eps = eps;
  Objective lr;
  lr.mode = ObjectiveMode::LowRegret;
  lr.eps = eps;

  for (int iterate : iterates) {
    MeshPtr mesh = problem.mesh0;
    ScalarField u_d = problem.u_d;
    if (iterate > 0) {
      RegretParams run_params = local;
      run_params.max_iter = iterate;
      run_params.tol = 1e-300;  // visit exactly this iterate
      const RunResult run = optimize(problem, run_params, lr);
      mesh = run.final_mesh;
      u_d = run.u_d_final;
    }

    SystemWorkspace ws(mesh);
    const ScalarField f = make_field(mesh, problem.f);
    const BoundaryTrace gd = make_trace(mesh, BoundaryLabel::Sigma, problem.g_d);
    const StatePair state = solve_state(ws, f, gd, u_d);
    const JepsBreakdown breakdown = eval_Jeps(ws, state, u_d, *problem.nominal, local);
    const AdjointPair adjoint = solve_adjoint(ws, state, u_d, breakdown.gbar);
    const GradientDensity density = gradient_density(ws, state, adjoint, u_d, f);

    auto eval_jeps_at = [&](const MeshPtr& moved) {
      SystemWorkspace wsm(moved);
      ScalarField u_d_here{moved, u_d.values};
      const StatePair sm = solve_state(wsm, make_field(moved, problem.f),
                                       make_trace(moved, BoundaryLabel::Sigma, problem.g_d),
                                       u_d_here);
      NominalData nominal_here = *problem.nominal;
      nominal_here.flux_sigma.node_ids = moved->loop(BoundaryLabel::Sigma);
      return eval_Jeps(wsm, sm, u_d_here, nominal_here, local).jeps;
    };

    std::mt19937 rng(seed + 1000 * iterate);
    for (int dir = 0; dir < directions; ++dir) {
      const DeformationField d = fourier_direction(ws, rng);
      GradientCheckEntry entry;
      entry.iterate = iterate;
      entry.direction = dir;
      entry.analytic = directional_derivative(mesh, density, d);

      std::vector<double> ts, errs;
      for (double t = 0.16; t >= 1.5e-4; t *= 0.5) {
        double fd;
        try {
          const double jp = eval_jeps_at(displace(mesh, d, t));
          const double jm = eval_jeps_at(displace(mesh, d, -t));
          fd = (jp - jm) / (2.0 * t);
        } catch (const ElementInversion&) {
          continue;  // step too large for this direction
        }
        const double rel = std::abs(entry.analytic - fd) /
                           std::max({std::abs(fd), std::abs(entry.analytic), 1e-30});
        ts.push_back(t);
        errs.push_back(std::max(rel, 1e-16));
        if (rel < entry.best_rel_err) {
          entry.best_rel_err = rel;
          entry.best_t = t;
        }
      }
      // longest initial window of (weakly) decreasing error, then its
      // least-squares slope in log-log coordinates
      std::size_t window = 1;
      while (window < errs.size() && errs[window] <= errs[window - 1] * 1.05) ++window;
      if (window >= 2) {
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (std::size_t j = 0; j < window; ++j) {
          const double x = std::log(ts[j]), y = std::log(errs[j]);
          sx += x;
          sy += y;
          sxx += x * x;
          sxy += x * y;
        }
        const double denom = window * sxx - sx * sx;
        entry.slope = denom != 0.0 ? (window * sxy - sx * sy) / denom : 0.0;
        entry.decade_span = ts[0] / ts[window - 1];
      }
      if (!(entry.best_rel_err <= 2e-2) || !(entry.slope >= 0.8) || !(entry.decade_span >= 10.0)) {
        result.pass = false;
      }
      result.entries.push_back(entry);
    }
  }
  return result;
}

}  // namespace shapeopt
