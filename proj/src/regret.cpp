#include "shapeopt/regret.hpp"

#include <algorithm>
#include <cmath>

#include "shapeopt/errors.hpp"

namespace shapeopt {

double default_alpha(const Mesh& mesh) {
  const auto& loop = mesh.loop(BoundaryLabel::GammaPhi);
  return 0.01 * loop_perimeter(mesh, BoundaryLabel::GammaPhi) / static_cast<double>(loop.size());
}

void RegretParams::validate() const {
  if (!(eps > 0.0)) throw ConfigError("eps must be positive");
  if (!(g_a < 0.0 && 0.0 < g_b)) throw ConfigError("box bounds must satisfy g_a < 0 < g_b");
  if (!(alpha > 0.0)) throw ConfigError("alpha must be positive");
  if (!(sigma > 0.0 && sigma < 1.0)) throw ConfigError("sigma must lie in (0,1)");
  if (!(tol > 0.0)) throw ConfigError("tol must be positive");
  if (max_iter <= 0) throw ConfigError("max_iter must be positive");
}

BoundaryTrace project_box(const BoundaryTrace& y, double eps, double g_a, double g_b) {
  if (!(eps > 0.0)) throw ConfigError("eps must be positive");
  BoundaryTrace out = y;
  for (int i = 0; i < out.size(); ++i) {
    out.values[i] = std::clamp(y.values[i] / eps, g_a, g_b);
  }
  return out;
}

FenchelResult fenchel(const BoundaryTrace& y, const RegretParams& params) {
  FenchelResult result;
  result.maximizer = project_box(y, params.eps, params.g_a, params.g_b);
  if (y.values.isZero(0.0)) {
    // exact short-circuit keeps the nominal self-test free of 0/eps noise
    result.value = 0.0;
    result.maximizer_norm = 0.0;
    return result;
  }
  const Eigen::VectorXd m = lumped_loop_mass(y);
  const auto& g = result.maximizer.values;
  result.value = (m.array() * g.array() * (y.values.array() - 0.5 * params.eps * g.array())).sum();
  result.maximizer_norm = std::sqrt(std::max(0.0, (m.array() * g.array().square()).sum()));
  return result;
}

double eval_Jtilde(const StatePair& state, const ScalarField& u_d) {
  ScalarField diff{state.u.mesh, state.u.values - u_d.values};
  return 0.5 * l2_norm_sq(diff, Region::OmegaOnly);
}

JepsBreakdown eval_Jeps(const SystemWorkspace& ws, const StatePair& state, const ScalarField& u_d,
                        const NominalData& nominal, const RegretParams& params) {
  JepsBreakdown out;
  out.tracking = eval_Jtilde(state, u_d);
  BoundaryTrace gap = state_flux_on_sigma(ws, state, u_d);
  gap.values = nominal.flux_sigma.values - gap.values;
  const FenchelResult fr = fenchel(gap, params);
  out.fenchel_value = fr.value;
  out.gbar_norm = fr.maximizer_norm;
  out.gbar = fr.maximizer;
  out.jeps = out.tracking - nominal.jtilde + fr.value;
  return out;
}

JstarBreakdown eval_Jstar(const SystemWorkspace& ws, const StatePair& state, const ScalarField& u_d,
                          const NominalData& nominal, const RegretParams& params) {
  JstarBreakdown out;
  out.tracking = eval_Jtilde(state, u_d);
  BoundaryTrace gap = state_flux_on_sigma(ws, state, u_d);
  gap.values = nominal.flux_sigma.values - gap.values;
  out.gstar = gap;
  for (int i = 0; i < gap.size(); ++i) {
    out.gstar.values[i] = gap.values[i] < 0.0 ? params.g_a : params.g_b;
  }
  out.linear_term = trace_dot(gap, out.gstar);
  out.jstar = out.tracking - nominal.jtilde + out.linear_term;
  return out;
}

double eval_J_with_delta(const MeshPtr& mesh, const BoundaryTrace& g_delta, const ScalarField& u_d,
                         const ScalarField& f, const BoundaryTrace& g_d) {
  SystemWorkspace ws(mesh);
  BoundaryTrace g_total = g_d;
  g_total.values += g_delta.values;
  const StatePair state = solve_state(ws, f, g_total, u_d);
  return eval_Jtilde(state, u_d);
}

}  // namespace shapeopt
