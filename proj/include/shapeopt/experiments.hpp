#pragma once

#include <map>
#include <optional>

#include "shapeopt/descent.hpp"

namespace shapeopt {

enum class TargetKind { Circle, Arrowhead };
const char* target_name(TargetKind kind);
TargetKind target_from_name(const std::string& name);

struct TargetSpec {
  TargetKind hidden_boundary = TargetKind::Circle;
  int resolution_multiplier = 2;  // hidden-boundary meshes are finer than the inversion mesh
};

struct Resolutions {
  int n_sigma = 160;
  int n_omega_outer = 140;
  int n_omega_inner = 120;
  int n_gamma = 100;
  int n_gamma_d = 80;

  Resolutions coarsened() const;
};

double default_source(Vec2 p);     // f = 1
double default_dirichlet(Vec2 p);  // g_d = 0.1 cos(2 pi x1) sin(2 pi x2)

BoundaryCurve hidden_boundary_curve(TargetKind kind, int samples);
MeshPtr make_working_mesh(const Resolutions& res);
MeshPtr make_target_mesh(const TargetSpec& spec, const Resolutions& res);

/// Solves the hidden-boundary problem on a dedicated finer mesh and
/// interpolates the solution onto the working mesh (only omega matters).
ScalarField make_target(const TargetSpec& spec, const Resolutions& res, const MeshPtr& working,
                        const std::function<double(Vec2)>& f,
                        const std::function<double(Vec2)>& g_d);

/// Study problem (unit source, reference Dirichlet data, target from the hidden boundary) on a
/// fresh working mesh; nominal data left unset.
Problem make_problem(const TargetSpec& spec, const Resolutions& res);

/// Stress family of missing data, i in 1..10, clamped into [-0.2, 0.2].
BoundaryTrace make_gdelta(int i, const MeshPtr& mesh);

struct RegretStudyCell {
  int i = 0;
  double eps = 0.0;
  double j_opt = 0.0;        // J_delta^i at its own minimizer
  double j_lowregret = 0.0;  // J_delta^i at the low-regret deformation
  double diff = 0.0;
  std::string error;
};

struct RegretStudyResult {
  std::vector<int> i_range;
  std::vector<double> eps_list;
  std::vector<RegretStudyCell> cells;  // row-major over (i, eps)
};

/// Per-i fixed-data optimizations plus evaluations of the low-regret
/// deformations under each stress datum. Failures are recorded per cell.
RegretStudyResult regret_study(const Problem& problem, const std::vector<SweepEntry>& sweep,
                               const std::vector<int>& i_range, const RegretParams& params,
                               int threads = 1);

void write_regret_table(const RegretStudyResult& study, const std::string& path);
void write_sweep_table(const std::vector<SweepEntry>& sweep, const std::string& path);

struct ReportInputs {
  std::string target;
  std::vector<Vec2> gamma_d;
  std::optional<std::vector<Vec2>> gamma_nominal;
  std::vector<std::pair<double, std::vector<Vec2>>> gamma_eps;
  const RegretStudyResult* study = nullptr;
};

/// Boundary overlays as hand-rolled SVG plus the CSV tables.
void emit_report(const ReportInputs& inputs, const std::string& out_dir);

struct GradientCheckEntry {
  int iterate = 0;
  int direction = 0;
  double analytic = 0.0;
  double best_rel_err = 1e300;
  double best_t = 0.0;
  double slope = 0.0;        // log-log decrease rate over the monotone window
  double decade_span = 0.0;  // t-ratio covered by that window
};

struct GradientCheckResult {
  std::vector<GradientCheckEntry> entries;
  bool pass = false;
};

/// Central finite differences of J_eps under admissible displacements versus
/// the boundary-integral derivative, at several iterates of a low-regret run.
GradientCheckResult verify_gradient(const Problem& problem, const RegretParams& params, double eps,
                                    const std::vector<int>& iterates, int directions,
                                    unsigned seed = 17);

}  // namespace shapeopt
