#pragma once

#include "shapeopt/system.hpp"

namespace shapeopt {

struct RegretParams {
  double eps = 0.5;
  double g_a = -0.2;
  double g_b = 0.2;
  double alpha = 5e-4;   // traction regularization
  double sigma = 0.998;  // step-scaling base
  double tol = 1e-7;
  int max_iter = 2000;

  void validate() const;
};

/// Default traction regularization scale: proportional to the
/// free-boundary spacing.
double default_alpha(const Mesh& mesh);

struct FenchelResult {
  double value = 0.0;
  BoundaryTrace maximizer;      // gbar
  double maximizer_norm = 0.0;  // L2(Sigma) norm of gbar
};

/// Pointwise clamp of y/eps into [g_a, g_b].
BoundaryTrace project_box(const BoundaryTrace& y, double eps, double g_a, double g_b);

/// Value and maximizer of sup_g <y,g> - eps/2 |g|^2 over the box traces.
/// L2(Sigma) pairings use the lumped loop mass, which makes the pointwise
/// clamp the exact discrete maximizer.
FenchelResult fenchel(const BoundaryTrace& y, const RegretParams& params);

double eval_Jtilde(const StatePair& state, const ScalarField& u_d);

struct NominalData {
  double jtilde = 0.0;          // Jtilde at the nominal deformation
  BoundaryTrace flux_sigma;     // normal derivative of w at the nominal deformation
};

struct JepsBreakdown {
  double jeps = 0.0;
  double tracking = 0.0;       // Jtilde at the current deformation
  double fenchel_value = 0.0;
  double gbar_norm = 0.0;
  BoundaryTrace gbar;
};

JepsBreakdown eval_Jeps(const SystemWorkspace& ws, const StatePair& state, const ScalarField& u_d,
                        const NominalData& nominal, const RegretParams& params);

struct JstarBreakdown {
  double jstar = 0.0;
  double tracking = 0.0;
  double linear_term = 0.0;
  BoundaryTrace gstar;  // bang-bang maximizer (ties resolve to g_b)
};

JstarBreakdown eval_Jstar(const SystemWorkspace& ws, const StatePair& state, const ScalarField& u_d,
                          const NominalData& nominal, const RegretParams& params);

/// Tracking cost of the state driven by g_d + g_delta on Sigma.
double eval_J_with_delta(const MeshPtr& mesh, const BoundaryTrace& g_delta, const ScalarField& u_d,
                         const ScalarField& f, const BoundaryTrace& g_d);

}  // namespace shapeopt
