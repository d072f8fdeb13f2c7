#pragma once

#include "shapeopt/system.hpp"

namespace shapeopt {

/// Scalar shape-gradient density per GammaPhi node.
struct GradientDensity {
  BoundaryTrace on_gamma;
};

/// Boundary density  1/2 chi_omega |u-u_d|^2 + grad u . grad p + grad w . grad q
/// at the free-boundary nodes. The fields vanish on the free boundary, so
/// the gradient products reduce to products of normal derivatives, which
/// are recovered variationally; f is the source driving u.
GradientDensity gradient_density(const SystemWorkspace& ws, const StatePair& state,
                                 const AdjointPair& adjoint, const ScalarField& u_d,
                                 const ScalarField& f);

/// Robin-Dirichlet extension of -density * nu from GammaPhi into the volume,
/// multiplied by the radial cutoff so the result vanishes on omega-bar and Sigma.
DeformationField traction_extend(const SystemWorkspace& ws, const GradientDensity& density,
                                 double alpha);

/// Boundary-integral directional derivative: trapezoidal rule of
/// density * (d . nu) over the GammaPhi polyline.
double directional_derivative(const MeshPtr& mesh, const GradientDensity& density,
                              const DeformationField& d);

/// Transformed-domain (volumetric) form of the derivative; verification
/// path only, compared against the boundary form in tests.
double volumetric_derivative(const MeshPtr& mesh, const StatePair& state,
                             const AdjointPair& adjoint, const ScalarField& u_d,
                             const ScalarField& f, const DeformationField& theta);

/// Unit outward normals (with respect to the domain) at the nodes of a loop,
/// ordered like the mesh loop.
std::vector<Vec2> loop_outward_normals(const Mesh& mesh, BoundaryLabel label);

/// C1 radial cutoff: 1 for r <= 0.9, 0 for r >= 1, quintic ramp between.
double cutoff_chi(double r);

/// Zeroes the field on Sigma and omega-bar and applies the radial cutoff
/// elsewhere; makes any nodal field admissible for displace().
void apply_admissibility_cutoff(DeformationField& field);

/// Harmonic extension of prescribed GammaPhi nodal vectors (zero on Sigma),
/// followed by the admissibility cutoff. Used to build test directions.
DeformationField extend_gamma_field(const SystemWorkspace& ws,
                                    const std::vector<Vec2>& gamma_values);

}  // namespace shapeopt
