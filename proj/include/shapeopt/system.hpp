#pragma once

#include "shapeopt/fem.hpp"

namespace shapeopt {

/// Full state u (u = g on Sigma, 0 on the free boundary) and the flux
/// carrier w (zero on the whole boundary).
struct StatePair {
  ScalarField u;
  ScalarField w;
};

/// Adjoint pair: p vanishes on the whole boundary, q is harmonic with
/// q = gbar on Sigma.
struct AdjointPair {
  ScalarField p;
  ScalarField q;
};

/// One stiffness assembly and one factorization per mesh serve the state,
/// the flux carrier and both adjoint solves (identical constraint set).
class SystemWorkspace {
 public:
  explicit SystemWorkspace(MeshPtr mesh);

  const MeshPtr& mesh() const { return mesh_; }
  const SparseMat& stiffness() const { return stiffness_; }
  const DirichletSolver& dirichlet() const { return solver_; }
  const std::vector<BoundaryLabel>& boundary_labels() const { return boundary_labels_; }

 private:
  MeshPtr mesh_;
  SparseMat stiffness_;
  std::vector<BoundaryLabel> boundary_labels_;
  DirichletSolver solver_;
};

/// One-way coupled solve: u first, then w driven by (u - u_d) on omega.
StatePair solve_state(const SystemWorkspace& ws, const ScalarField& f,
                      const BoundaryTrace& g_sigma, const ScalarField& u_d);
StatePair solve_state(const MeshPtr& mesh, const ScalarField& f, const BoundaryTrace& g_sigma,
                      const ScalarField& u_d);

/// Reverse one-way coupling: q first (harmonic, q = gbar on Sigma), then p.
AdjointPair solve_adjoint(const SystemWorkspace& ws, const StatePair& state,
                          const ScalarField& u_d, const BoundaryTrace& gbar);
AdjointPair solve_adjoint(const MeshPtr& mesh, const StatePair& state, const ScalarField& u_d,
                          const BoundaryTrace& gbar);

/// Normal derivative of w on Sigma, recovered variationally.
BoundaryTrace state_flux_on_sigma(const SystemWorkspace& ws, const StatePair& state,
                                  const ScalarField& u_d);

}  // namespace shapeopt
