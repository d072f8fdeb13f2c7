#include "shapeopt/descent.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <thread>

#include "shapeopt/errors.hpp"
#include <cstdio>

namespace shapeopt {

namespace {

constexpr double kStepMin = 1e-6;
constexpr double kStepMax = 1e4;
constexpr double kRemeshQuality = 0.2;
constexpr double kRemeshArea = 1e-6;
constexpr double kMaxSpacingRatio = 4.0;
constexpr double kMoveFraction = 0.5;  // max boundary motion per step, in local spacings
constexpr int kMaxHalvings = 10;

double gamma_spacing_ratio(const Mesh& mesh) {
  const auto& loop = mesh.loop(BoundaryLabel::GammaPhi);
  double hmin = std::numeric_limits<double>::max(), hmax = 0.0;
  for (std::size_t i = 0; i < loop.size(); ++i) {
    const double h = norm(mesh.nodes[loop[(i + 1) % loop.size()]] - mesh.nodes[loop[i]]);
    hmin = std::min(hmin, h);
    hmax = std::max(hmax, h);
  }
  return hmin > 0.0 ? hmax / hmin : std::numeric_limits<double>::max();
}

// node arclengths of a closed polyline, starting at 0; size n+1 with the
// perimeter appended
std::vector<double> loop_arclengths(const std::vector<Vec2>& pts) {
  std::vector<double> s(pts.size() + 1, 0.0);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    s[i + 1] = s[i] + norm(pts[(i + 1) % pts.size()] - pts[i]);
  }
  return s;
}

// periodic linear interpolation of nodal vectors from one arclength grid
// onto another (same underlying curve, so the perimeters agree)
std::vector<Vec2> interp_periodic(const std::vector<double>& s_old,
                                  const std::vector<Vec2>& v_old,
                                  const std::vector<double>& s_new) {
  const std::size_t n_old = v_old.size();
  const std::size_t n_new = s_new.size() - 1;
  const double total = s_old[n_old];
  std::vector<Vec2> out(n_new);
  std::size_t seg = 0;
  for (std::size_t j = 0; j < n_new; ++j) {
    double target = std::min(s_new[j] / s_new[n_new] * total, total);
    while (seg + 1 < n_old && s_old[seg + 1] <= target) ++seg;
    const double span = s_old[seg + 1] - s_old[seg];
    const double t = span > 0.0 ? (target - s_old[seg]) / span : 0.0;
    const Vec2 a = v_old[seg];
    const Vec2 b = v_old[(seg + 1) % n_old];
    out[j] = a + t * (b - a);
  }
  return out;
}

// relative round-trip error of the arclength transfer
double transfer_error(const std::vector<double>& s_old, const std::vector<Vec2>& v_old,
                      const std::vector<double>& s_new) {
  const auto forward = interp_periodic(s_old, v_old, s_new);
  const auto back = interp_periodic(s_new, forward, s_old);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < v_old.size(); ++i) {
    num += dot(back[i] - v_old[i], back[i] - v_old[i]);
    den += dot(v_old[i], v_old[i]);
  }
  return den > 0.0 ? std::sqrt(num / den) : 0.0;
}

std::vector<Vec2> gamma_values(const Mesh& mesh, const std::vector<Vec2>& field) {
  const auto& loop = mesh.loop(BoundaryLabel::GammaPhi);
  std::vector<Vec2> out(loop.size());
  for (std::size_t i = 0; i < loop.size(); ++i) out[i] = field[loop[i]];
  return out;
}

Eigen::VectorXd gamma_lumped_mass(const MeshPtr& mesh) {
  return lumped_loop_mass(constant_trace(mesh, BoundaryLabel::GammaPhi, 0.0));
}

double gamma_l2_norm(const std::vector<Vec2>& values, const Eigen::VectorXd& mass) {
  double acc = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) acc += mass[i] * dot(values[i], values[i]);
  return std::sqrt(std::max(0.0, acc));
}

struct Evaluation {
  StatePair state;
  ScalarField f;
  double objective = 0.0;
  double tracking = 0.0;
  double fenchel_value = 0.0;
  double gbar_norm = 0.0;
  BoundaryTrace adjoint_bc;  // gbar (or gstar) driving the q solve
  bool needs_q = false;
};

Evaluation evaluate(const SystemWorkspace& ws, const Problem& problem, const ScalarField& u_d,
                    const RegretParams& params, const Objective& objective) {
  const MeshPtr& mesh = ws.mesh();
  const ScalarField f = make_field(mesh, problem.f);
  BoundaryTrace g_sigma = make_trace(mesh, BoundaryLabel::Sigma, problem.g_d);
  if (objective.mode == ObjectiveMode::FixedDelta) {
    if (!objective.g_delta || objective.g_delta->size() != g_sigma.size()) {
      throw ConfigError("fixed-delta objective requires g_delta on the Sigma loop");
    }
    g_sigma.values += *objective.g_delta;
  }

  Evaluation ev{solve_state(ws, f, g_sigma, u_d), f};
  ev.adjoint_bc = constant_trace(mesh, BoundaryLabel::Sigma, 0.0);
  switch (objective.mode) {
    case ObjectiveMode::Nominal:
    case ObjectiveMode::FixedDelta: {
      ev.tracking = eval_Jtilde(ev.state, u_d);
      ev.objective = ev.tracking;
      break;
    }
    case ObjectiveMode::LowRegret: {
      RegretParams local = params;
      local.eps = objective.eps;
      const JepsBreakdown breakdown = eval_Jeps(ws, ev.state, u_d, *problem.nominal, local);
      ev.objective = breakdown.jeps;
      ev.tracking = breakdown.tracking;
      ev.fenchel_value = breakdown.fenchel_value;
      ev.gbar_norm = breakdown.gbar_norm;
      ev.adjoint_bc = breakdown.gbar;
      ev.needs_q = true;
      break;
    }
    case ObjectiveMode::NoRegret: {
      RegretParams local = params;
      local.eps = objective.eps;
      const JstarBreakdown breakdown = eval_Jstar(ws, ev.state, u_d, *problem.nominal, local);
      ev.objective = breakdown.jstar;
      ev.tracking = breakdown.tracking;
      ev.fenchel_value = breakdown.linear_term;
      ev.adjoint_bc = breakdown.gstar;
      ev.needs_q = true;
      break;
    }
  }
  return ev;
}

}  // namespace

double bb_step(int k, const std::vector<Vec2>& phi_prev2, const std::vector<Vec2>& phi_prev1,
               const std::vector<Vec2>& dphi_prev2, const std::vector<Vec2>& dphi_prev1,
               const Eigen::VectorXd& gamma_mass, double sigma_base, bool* degenerate) {
  if (k < 2) throw std::invalid_argument("bb_step requires k >= 2");
  const std::size_t n = phi_prev1.size();
  if (phi_prev2.size() != n || dphi_prev1.size() != n || dphi_prev2.size() != n ||
      gamma_mass.size() != static_cast<Eigen::Index>(n)) {
    throw std::invalid_argument("bb_step snapshots must live on one Gamma node set");
  }
  double sp = 0.0, ss = 0.0, yy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 dphi = phi_prev1[i] - phi_prev2[i];
    const Vec2 dgrad = dphi_prev1[i] - dphi_prev2[i];
    sp += gamma_mass[i] * dot(dphi, dgrad);
    ss += gamma_mass[i] * dot(dphi, dphi);
    yy += gamma_mass[i] * dot(dgrad, dgrad);
  }
  if (degenerate) *degenerate = false;
  const bool odd = (k % 2) != 0;
  const double denom = odd ? yy : sp;
  const double numer = odd ? sp : ss;
  const double scale = std::pow(sigma_base, k);
  // near-orthogonality test, relative so that late tiny increments with a
  // healthy quotient keep stepping
  if (std::abs(denom) < 1e-14 * std::max({ss, yy, 1e-300})) {
    if (degenerate) *degenerate = true;
    return kStepMin;
  }
  // the raw quotient flips sign because the stored directions are descent
  // directions, not gradients; the magnitude is the usual two-point step
  return std::clamp(scale * std::abs(numer / denom), kStepMin, kStepMax);
}

RunResult optimize(const Problem& problem, const RegretParams& params, const Objective& objective) {
  params.validate();
  if ((objective.mode == ObjectiveMode::LowRegret || objective.mode == ObjectiveMode::NoRegret) &&
      !problem.nominal) {
    throw ConfigError("low-regret objectives require the nominal cache");
  }

  MeshPtr mesh = problem.mesh0;
  ScalarField u_d = problem.u_d;
  std::vector<Vec2> cumulative(mesh->num_nodes(), Vec2{0.0, 0.0});

  RunResult run;
  std::vector<Vec2> phi_prev1, dphi_prev1;  // Gamma snapshots of the previous iterate
  double previous_objective = 0.0;
  double last_step = 0.0;
  bool last_remeshed = false;

  for (int k = 0; k <= params.max_iter; ++k) {
    SystemWorkspace ws(mesh);
    Evaluation ev = evaluate(ws, problem, u_d, params, objective);

    AdjointPair adjoint{ev.state.w, zero_field(mesh)};
    if (ev.needs_q) adjoint = solve_adjoint(ws, ev.state, u_d, ev.adjoint_bc);

    const GradientDensity density = gradient_density(ws, ev.state, adjoint, u_d, ev.f);
    const DeformationField direction = traction_extend(ws, density, params.alpha);

    const Eigen::VectorXd mass = gamma_lumped_mass(mesh);
    const std::vector<Vec2> dphi_gamma = gamma_values(*mesh, direction.values);
    const double grad_norm = gamma_l2_norm(dphi_gamma, mass);

    IterateRecord rec;
    rec.iter = k;
    rec.jeps = ev.objective;
    rec.tracking = ev.tracking;
    rec.fenchel_value = ev.fenchel_value;
    rec.gbar_norm = ev.gbar_norm;
    rec.grad_norm = grad_norm;
    rec.step = last_step;
    rec.quality = quality(*mesh).min_quality;
    rec.remeshed = last_remeshed;
    last_remeshed = false;
    if (!std::isfinite(ev.objective) || !std::isfinite(grad_norm)) {
      throw NonFiniteObjective("iterate " + std::to_string(k) + ": objective " +
                               std::to_string(ev.objective) + ", grad_norm " +
                               std::to_string(grad_norm));
    }
    run.records.push_back(rec);
    run.gamma_history.push_back(loop_polyline(*mesh, BoundaryLabel::GammaPhi));
    run.density_history.push_back(density.on_gamma.values);

    if (k >= 1) {
      const double test = std::max(std::abs(ev.objective - previous_objective), grad_norm);
      if (test < params.tol) {
        run.converged = true;
      }
    }
    previous_objective = ev.objective;
    if (run.converged || k == params.max_iter) {
      run.final_mesh = mesh;
      run.u_d_final = u_d;
      run.final_gamma = run.gamma_history.back();
      run.cumulative_displacement = cumulative;
      run.jeps = ev.objective;
      run.tracking = ev.tracking;
      run.gbar_norm = ev.gbar_norm;
      break;
    }

    const std::vector<Vec2> phi_gamma = gamma_values(*mesh, cumulative);
    double t = 0.5;
    if (k >= 1) {
      if (phi_prev1.empty()) {
        // history was reset by a lossy boundary transfer; keep the last step
        t = std::clamp(last_step > 0.0 ? last_step : 0.5, kStepMin, kStepMax);
      } else {
        t = bb_step(k + 1, phi_prev1, phi_gamma, dphi_prev1, dphi_gamma, mass, params.sigma);
      }
    }
    // mesh-motion trust region: no boundary node moves more than half a spacing
    {
      double g_max = 0.0;
      for (const Vec2& v : dphi_gamma) g_max = std::max(g_max, norm(v));
      const double mean_h = loop_perimeter(*mesh, BoundaryLabel::GammaPhi) /
                            static_cast<double>(dphi_gamma.size());
      if (g_max > 0.0) t = std::max(kStepMin, std::min(t, kMoveFraction * mean_h / g_max));
    }

    MeshPtr moved;
    for (int attempt = 0;; ++attempt) {
      try {
        moved = displace(mesh, direction, t);
        break;
      } catch (const ElementInversion&) {
        if (attempt >= kMaxHalvings) {
          throw MeshingFailure("step halving exhausted at iterate " + std::to_string(k));
        }
        t *= 0.5;
      }
    }
    for (int i = 0; i < mesh->num_nodes(); ++i) cumulative[i] = cumulative[i] + t * direction.values[i];
    last_step = t;

    phi_prev1 = phi_gamma;
    dphi_prev1 = dphi_gamma;

    const MeshQuality mq = quality(*moved);
    const double spacing_ratio = gamma_spacing_ratio(*moved);
    if (mq.min_quality < kRemeshQuality || mq.min_area < kRemeshArea ||
        spacing_ratio > kMaxSpacingRatio) {
      // Equalize the Gamma vertices along the unchanged polyline, then
      // rebuild the inner band. Snapshots move to the new vertices by
      // arclength interpolation; the BB history resets if that transfer
      // is too lossy.
      const std::vector<Vec2> old_poly = loop_polyline(*moved, BoundaryLabel::GammaPhi);
      const std::vector<Vec2> new_poly =
          resample_polyline(old_poly, static_cast<int>(old_poly.size()));
      auto mutated = std::make_shared<Mesh>(*moved);
      const auto& gamma_loop = mutated->loop(BoundaryLabel::GammaPhi);
      for (std::size_t i = 0; i < gamma_loop.size(); ++i) {
        mutated->nodes[gamma_loop[i]] = new_poly[i];
      }
      std::vector<int> node_map;
      const MeshPtr fresh = remesh(mutated, &node_map);

      ScalarField u_d_new = zero_field(fresh);
      std::vector<Vec2> cumulative_new(fresh->num_nodes(), Vec2{0.0, 0.0});
      for (int i = 0; i < moved->num_nodes(); ++i) {
        if (node_map[i] < 0) continue;
        u_d_new.values[node_map[i]] = u_d.values[i];
        cumulative_new[node_map[i]] = cumulative[i];
      }
      const std::vector<double> s_old = loop_arclengths(old_poly);
      const std::vector<double> s_new = loop_arclengths(new_poly);
      const auto& fresh_loop = fresh->loop(BoundaryLabel::GammaPhi);
      const std::vector<Vec2> cum_gamma = interp_periodic(s_old, gamma_values(*moved, cumulative), s_new);
      for (std::size_t i = 0; i < fresh_loop.size(); ++i) {
        cumulative_new[fresh_loop[i]] = cum_gamma[i];
      }
      if (!phi_prev1.empty()) {
        const double err = std::max(transfer_error(s_old, phi_prev1, s_new),
                                    transfer_error(s_old, dphi_prev1, s_new));
        if (err > 0.01) {
          phi_prev1.clear();
          dphi_prev1.clear();
        } else {
          phi_prev1 = interp_periodic(s_old, phi_prev1, s_new);
          dphi_prev1 = interp_periodic(s_old, dphi_prev1, s_new);
        }
      }
      u_d = std::move(u_d_new);
      cumulative = std::move(cumulative_new);
      moved = fresh;
      last_remeshed = true;
    }
    mesh = moved;
  }
  return run;
}

std::vector<SweepEntry> epsilon_sweep(const Problem& problem, const std::vector<double>& eps_list,
                                      const RegretParams& params, int threads) {
  std::vector<SweepEntry> entries(eps_list.size());
  for (std::size_t i = 0; i < eps_list.size(); ++i) entries[i].eps = eps_list[i];

  std::mutex next_mutex;
  std::size_t next = 0;
  auto worker = [&]() {
    for (;;) {
      std::size_t idx;
      {
        std::lock_guard<std::mutex> lock(next_mutex);
        if (next >= entries.size()) return;
        idx = next++;
      }
      Objective objective;
      objective.mode = ObjectiveMode::LowRegret;
      objective.eps = entries[idx].eps;
      try {
        entries[idx].result = optimize(problem, params, objective);
      } catch (const std::exception& e) {
        entries[idx].error = e.what();
      }
    }
  };
  const int n_workers = std::max(1, std::min<int>(threads, static_cast<int>(entries.size())));
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(n_workers);
    for (int i = 0; i < n_workers; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  return entries;
}

}  // namespace shapeopt
