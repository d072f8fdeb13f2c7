#include "shapeopt/system.hpp"

namespace shapeopt {

SystemWorkspace::SystemWorkspace(MeshPtr mesh)
    : mesh_(std::move(mesh)),
      stiffness_(assemble_stiffness(*mesh_)),
      boundary_labels_(mesh_->domain_boundary_labels()),
      solver_(mesh_, stiffness_, boundary_labels_) {}

StatePair solve_state(const SystemWorkspace& ws, const ScalarField& f,
                      const BoundaryTrace& g_sigma, const ScalarField& u_d) {
  const Mesh& mesh = *ws.mesh();
  Eigen::VectorXd bc = Eigen::VectorXd::Zero(mesh.num_nodes());
  for (int i = 0; i < g_sigma.size(); ++i) bc[g_sigma.node_ids[i]] = g_sigma.values[i];

  ScalarField u{ws.mesh(), ws.dirichlet().solve(assemble_load(mesh, f.values), bc)};

  const Eigen::VectorXd load_w = assemble_load_omega(mesh, u.values - u_d.values);
  ScalarField w{ws.mesh(), ws.dirichlet().solve(load_w, Eigen::VectorXd::Zero(mesh.num_nodes()))};
  return {std::move(u), std::move(w)};
}

StatePair solve_state(const MeshPtr& mesh, const ScalarField& f, const BoundaryTrace& g_sigma,
                      const ScalarField& u_d) {
  return solve_state(SystemWorkspace(mesh), f, g_sigma, u_d);
}

AdjointPair solve_adjoint(const SystemWorkspace& ws, const StatePair& state,
                          const ScalarField& u_d, const BoundaryTrace& gbar) {
  const Mesh& mesh = *ws.mesh();
  // the q trace must pair with +gbar for the boundary formula to be the
  // derivative of the penalized objective (finite differences agree)
  Eigen::VectorXd bc = Eigen::VectorXd::Zero(mesh.num_nodes());
  for (int i = 0; i < gbar.size(); ++i) bc[gbar.node_ids[i]] = gbar.values[i];

  ScalarField q{ws.mesh(), ws.dirichlet().solve(Eigen::VectorXd::Zero(mesh.num_nodes()), bc)};

  const Eigen::VectorXd load_p =
      assemble_load_omega(mesh, q.values + state.u.values - u_d.values);
  ScalarField p{ws.mesh(), ws.dirichlet().solve(load_p, Eigen::VectorXd::Zero(mesh.num_nodes()))};
  return {std::move(p), std::move(q)};
}

AdjointPair solve_adjoint(const MeshPtr& mesh, const StatePair& state, const ScalarField& u_d,
                          const BoundaryTrace& gbar) {
  return solve_adjoint(SystemWorkspace(mesh), state, u_d, gbar);
}

BoundaryTrace state_flux_on_sigma(const SystemWorkspace& ws, const StatePair& state,
                                  const ScalarField& u_d) {
  const Eigen::VectorXd load_w = assemble_load_omega(*ws.mesh(), state.u.values - u_d.values);
  return boundary_flux(ws.mesh(), state.w, load_w, BoundaryLabel::Sigma, &ws.stiffness());
}

}  // namespace shapeopt
