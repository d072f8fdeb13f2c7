#pragma once

#include <functional>
#include <optional>
#include <string>

#include "shapeopt/regret.hpp"
#include "shapeopt/shapegrad.hpp"

namespace shapeopt {

enum class ObjectiveMode { Nominal, LowRegret, FixedDelta, NoRegret };

struct Objective {
  ObjectiveMode mode = ObjectiveMode::Nominal;
  double eps = 0.5;                            // LowRegret / NoRegret
  std::optional<Eigen::VectorXd> g_delta;      // FixedDelta: values in Sigma loop order
};

struct IterateRecord {
  int iter = 0;
  double jeps = 0.0;  // objective value of the active mode
  double tracking = 0.0;
  double fenchel_value = 0.0;
  double gbar_norm = 0.0;
  double grad_norm = 0.0;  // L2(Gamma) norm of the descent direction
  double step = 0.0;       // step that produced this iterate (0 for iterate 0)
  double quality = 0.0;
  bool remeshed = false;
};

struct RunResult {
  MeshPtr final_mesh;
  ScalarField u_d_final;  // target re-indexed onto the final mesh
  std::vector<Vec2> final_gamma;
  std::vector<std::vector<Vec2>> gamma_history;  // polyline per iterate
  std::vector<Eigen::VectorXd> density_history;  // gradient density per iterate
  std::vector<Vec2> cumulative_displacement;     // on final mesh nodes
  std::vector<IterateRecord> records;
  bool converged = false;
  double jeps = 0.0;
  double tracking = 0.0;
  double gbar_norm = 0.0;
};

struct Problem {
  MeshPtr mesh0;
  std::function<double(Vec2)> f;
  std::function<double(Vec2)> g_d;
  ScalarField u_d;                     // on mesh0, carried across remeshes
  std::optional<NominalData> nominal;  // required for LowRegret / NoRegret
};

/// Weighted two-point step: sigma^k times the BB1 (k odd) or BB2 (k even)
/// quotient of the last two Gamma-restricted snapshots, clamped to
/// [1e-6, 1]. A vanishing denominator degenerates to the lower clamp.
double bb_step(int k, const std::vector<Vec2>& phi_prev2, const std::vector<Vec2>& phi_prev1,
               const std::vector<Vec2>& dphi_prev2, const std::vector<Vec2>& dphi_prev1,
               const Eigen::VectorXd& gamma_mass, double sigma_base, bool* degenerate = nullptr);

RunResult optimize(const Problem& problem, const RegretParams& params, const Objective& objective);

struct SweepEntry {
  double eps = 0.0;
  std::optional<RunResult> result;
  std::string error;  // nonempty when the run aborted
};

/// Independent low-regret runs per epsilon sharing the nominal cache.
std::vector<SweepEntry> epsilon_sweep(const Problem& problem, const std::vector<double>& eps_list,
                                      const RegretParams& params, int threads = 1);

}  // namespace shapeopt
