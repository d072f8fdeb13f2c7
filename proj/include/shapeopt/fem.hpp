#pragma once

#include <Eigen/Sparse>
#include <functional>
#include <string>
#include <vector>

#include "shapeopt/geometry.hpp"

namespace shapeopt {

using SparseMat = Eigen::SparseMatrix<double>;

/// Nodal P1 field on a mesh.
struct ScalarField {
  MeshPtr mesh;
  Eigen::VectorXd values;
};

/// Ordered per-node values along one boundary loop. `node_ids` follows the
/// mesh loop order; `arclength` starts at 0 and is strictly increasing;
/// `perimeter` closes the loop.
struct BoundaryTrace {
  BoundaryLabel label = BoundaryLabel::Sigma;
  std::vector<int> node_ids;
  std::vector<double> arclength;
  double perimeter = 0.0;
  Eigen::VectorXd values;

  int size() const { return static_cast<int>(node_ids.size()); }
};

struct BoundaryCondition {
  BoundaryLabel label;
  double constant = 0.0;
  const BoundaryTrace* trace = nullptr;  // overrides constant when set
};

enum class Region { All, OmegaOnly };

SparseMat assemble_stiffness(const Mesh& mesh);

/// Consistent P1 load vector for a nodal source (exact for P1 sources,
/// degree-2 quadrature otherwise).
Eigen::VectorXd assemble_load(const Mesh& mesh, const Eigen::VectorXd& source);
/// Same, restricted to the frozen omega elements.
Eigen::VectorXd assemble_load_omega(const Mesh& mesh, const Eigen::VectorXd& source);

/// Symmetric elimination of Dirichlet constraints plus an SPD direct solve
/// with an iterative fallback; reusable across right-hand sides.
class DirichletSolver {
 public:
  DirichletSolver(MeshPtr mesh, const SparseMat& matrix, const std::vector<BoundaryLabel>& constrained_loops);

  /// load: full-length load vector; bc_values: full-length vector whose
  /// constrained entries carry the prescribed nodal values.
  Eigen::VectorXd solve(const Eigen::VectorXd& load, const Eigen::VectorXd& bc_values) const;

  const std::vector<char>& constrained() const { return constrained_; }

 private:
  MeshPtr mesh_;
  std::vector<char> constrained_;
  std::vector<int> free_index_;  // node -> reduced index or -1
  std::vector<int> free_nodes_;
  SparseMat k_ff_;
  SparseMat k_fc_;  // free x all, columns of constrained nodes only
  Eigen::SimplicialLDLT<SparseMat> ldlt_;
  bool factor_ok_ = false;
};

Eigen::VectorXd apply_boundary_conditions(const Mesh& mesh, const std::vector<BoundaryCondition>& bcs);

ScalarField solve_dirichlet(const MeshPtr& mesh, const ScalarField& source,
                            const std::vector<BoundaryCondition>& bcs);

/// Discrete harmonic extension of Sigma data over a hold-all disk mesh.
ScalarField lift_harmonic(const MeshPtr& disk_mesh, const BoundaryTrace& g);

double l2_norm_sq(const ScalarField& field, Region region);
double l2_norm(const ScalarField& field, Region region);

/// Variationally consistent normal derivative on one loop: solves the loop
/// mass-matrix system for the trace lambda with <lambda, psi> = a(w, psi) - (load, psi).
BoundaryTrace boundary_flux(const MeshPtr& mesh, const ScalarField& w, const Eigen::VectorXd& load,
                            BoundaryLabel label, const SparseMat* stiffness = nullptr);
BoundaryTrace flux_on_sigma(const MeshPtr& mesh, const ScalarField& w, const ScalarField& source);

ScalarField interpolate(const ScalarField& src, const MeshPtr& dst_mesh);

// --- boundary trace utilities ----------------------------------------------

BoundaryTrace make_trace(const MeshPtr& mesh, BoundaryLabel label,
                         const std::function<double(Vec2)>& fn);
BoundaryTrace constant_trace(const MeshPtr& mesh, BoundaryLabel label, double value);

/// Lumped (trapezoidal) loop mass weights aligned with the trace ordering.
Eigen::VectorXd lumped_loop_mass(const BoundaryTrace& trace);
/// Consistent P1 loop mass matrix in loop-position indexing.
SparseMat loop_mass_matrix(const BoundaryTrace& trace);

double trace_dot(const BoundaryTrace& a, const BoundaryTrace& b);
double trace_norm(const BoundaryTrace& a);

ScalarField make_field(const MeshPtr& mesh, const std::function<double(Vec2)>& fn);
ScalarField zero_field(const MeshPtr& mesh);

void save_field(const ScalarField& field, const std::string& name, const std::string& path);
ScalarField load_field(const MeshPtr& mesh, const std::string& path);
void save_trace_csv(const BoundaryTrace& trace, const std::string& path);
BoundaryTrace load_trace_csv(const MeshPtr& mesh, BoundaryLabel label, const std::string& path);

}  // namespace shapeopt
