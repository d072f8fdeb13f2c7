#include "shapeopt/shapegrad.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "shapeopt/errors.hpp"

namespace shapeopt {

namespace {

struct ElementData {
  double area;
  Vec2 grad[3];
};

ElementData element_data(const Mesh& mesh, int t) {
  const auto& tri = mesh.triangles[t];
  const Vec2 a = mesh.nodes[tri[0]], b = mesh.nodes[tri[1]], c = mesh.nodes[tri[2]];
  const double two_area = cross(b - a, c - a);
  ElementData d;
  d.area = 0.5 * two_area;
  d.grad[0] = {(b.y - c.y) / two_area, (c.x - b.x) / two_area};
  d.grad[1] = {(c.y - a.y) / two_area, (a.x - c.x) / two_area};
  d.grad[2] = {(a.y - b.y) / two_area, (b.x - a.x) / two_area};
  return d;
}

Vec2 element_gradient(const ElementData& d, const Eigen::VectorXd& v,
                      const std::array<int, 3>& tri) {
  Vec2 g{0.0, 0.0};
  for (int i = 0; i < 3; ++i) g = g + v[tri[i]] * d.grad[i];
  return g;
}

// edge -> adjacent triangle count/one representative
std::map<std::pair<int, int>, int> edge_triangle(const Mesh& mesh) {
  std::map<std::pair<int, int>, int> out;
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto& tri = mesh.triangles[t];
    for (int e = 0; e < 3; ++e) {
      const int a = tri[e], b = tri[(e + 1) % 3];
      out[a < b ? std::pair{a, b} : std::pair{b, a}] = t;
    }
  }
  return out;
}

}  // namespace

std::vector<Vec2> loop_outward_normals(const Mesh& mesh, BoundaryLabel label) {
  const auto& loop = mesh.loop(label);
  const int n = static_cast<int>(loop.size());
  const auto edge_map = edge_triangle(mesh);
  std::vector<Vec2> edge_normal(n);
  std::vector<double> edge_len(n);
  for (int i = 0; i < n; ++i) {
    const int a = loop[i], b = loop[(i + 1) % n];
    const Vec2 pa = mesh.nodes[a], pb = mesh.nodes[b];
    const Vec2 tangent = pb - pa;
    edge_len[i] = norm(tangent);
    Vec2 nrm{tangent.y / edge_len[i], -tangent.x / edge_len[i]};
    const auto it = edge_map.find(a < b ? std::pair{a, b} : std::pair{b, a});
    if (it == edge_map.end()) throw std::invalid_argument("loop edge missing from triangulation");
    const auto& tri = mesh.triangles[it->second];
    int third = tri[0];
    for (int v : tri) {
      if (v != a && v != b) third = v;
    }
    const Vec2 mid = 0.5 * (pa + pb);
    if (dot(nrm, mesh.nodes[third] - mid) > 0.0) nrm = -1.0 * nrm;
    edge_normal[i] = nrm;
  }
  std::vector<Vec2> node_normal(n);
  for (int i = 0; i < n; ++i) {
    const int prev = (i + n - 1) % n;
    Vec2 nrm = edge_len[prev] * edge_normal[prev] + edge_len[i] * edge_normal[i];
    const double len = norm(nrm);
    node_normal[i] = len > 0.0 ? (1.0 / len) * nrm : Vec2{0.0, 0.0};
  }
  return node_normal;
}

GradientDensity gradient_density(const SystemWorkspace& ws, const StatePair& state,
                                 const AdjointPair& adjoint, const ScalarField& u_d,
                                 const ScalarField& f) {
  const Mesh& mesh = *ws.mesh();
  const auto& loop = mesh.loop(BoundaryLabel::GammaPhi);
  const int n = static_cast<int>(loop.size());

  // u, w, p and q all vanish on the free boundary, so their gradients there
  // are normal; recover the normal derivatives variationally (the loop
  // mass-matrix solve), which is what keeps the FD gate under 2e-2.
  const Eigen::VectorXd load_u = assemble_load(mesh, f.values);
  const Eigen::VectorXd load_w = assemble_load_omega(mesh, state.u.values - u_d.values);
  const Eigen::VectorXd load_p =
      assemble_load_omega(mesh, adjoint.q.values + state.u.values - u_d.values);
  const Eigen::VectorXd load_q = Eigen::VectorXd::Zero(mesh.num_nodes());
  const SparseMat* k = &ws.stiffness();
  const auto du = boundary_flux(ws.mesh(), state.u, load_u, BoundaryLabel::GammaPhi, k);
  const auto dw = boundary_flux(ws.mesh(), state.w, load_w, BoundaryLabel::GammaPhi, k);
  const auto dp = boundary_flux(ws.mesh(), adjoint.p, load_p, BoundaryLabel::GammaPhi, k);
  const auto dq = boundary_flux(ws.mesh(), adjoint.q, load_q, BoundaryLabel::GammaPhi, k);

  GradientDensity density;
  density.on_gamma = constant_trace(ws.mesh(), BoundaryLabel::GammaPhi, 0.0);
  for (int i = 0; i < n; ++i) {
    const int id = loop[i];
    double tracking_term = 0.0;
    if (mesh.omegabar_node[id]) {
      const double diff = state.u.values[id] - u_d.values[id];
      tracking_term = 0.5 * diff * diff;
    }
    density.on_gamma.values[i] =
        tracking_term + du.values[i] * dp.values[i] + dw.values[i] * dq.values[i];
  }
  return density;
}

DeformationField traction_extend(const SystemWorkspace& ws, const GradientDensity& density,
                                 double alpha) {
  if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be positive");
  const Mesh& mesh = *ws.mesh();
  const auto& loop = mesh.loop(BoundaryLabel::GammaPhi);
  const int n = static_cast<int>(loop.size());
  const std::vector<Vec2> normals = loop_outward_normals(mesh, BoundaryLabel::GammaPhi);

  // alpha * K + boundary mass on GammaPhi
  SparseMat system = alpha * ws.stiffness();
  {
    std::vector<Eigen::Triplet<double>> triplets;
    for (int i = 0; i < n; ++i) {
      const int a = loop[i], b = loop[(i + 1) % n];
      const double h = norm(mesh.nodes[b] - mesh.nodes[a]);
      triplets.emplace_back(a, a, h / 3.0);
      triplets.emplace_back(b, b, h / 3.0);
      triplets.emplace_back(a, b, h / 6.0);
      triplets.emplace_back(b, a, h / 6.0);
    }
    SparseMat gamma_mass(mesh.num_nodes(), mesh.num_nodes());
    gamma_mass.setFromTriplets(triplets.begin(), triplets.end());
    system += gamma_mass;
  }

  DirichletSolver solver(ws.mesh(), system, {BoundaryLabel::Sigma});

  // loads: -integral of density * nu_c * psi over GammaPhi, edge-exact with
  // the P1 density and per-edge normals
  Eigen::VectorXd load_x = Eigen::VectorXd::Zero(mesh.num_nodes());
  Eigen::VectorXd load_y = Eigen::VectorXd::Zero(mesh.num_nodes());
  for (int i = 0; i < n; ++i) {
    const int j = (i + 1) % n;
    const int a = loop[i], b = loop[j];
    const Vec2 pa = mesh.nodes[a], pb = mesh.nodes[b];
    const double h = norm(pb - pa);
    Vec2 nrm{(pb - pa).y / h, -(pb - pa).x / h};
    // orient like the node normals
    if (dot(nrm, normals[i] + normals[j]) < 0.0) nrm = -1.0 * nrm;
    const double da = density.on_gamma.values[i];
    const double db = density.on_gamma.values[j];
    load_x[a] -= nrm.x * h * (da / 3.0 + db / 6.0);
    load_x[b] -= nrm.x * h * (da / 6.0 + db / 3.0);
    load_y[a] -= nrm.y * h * (da / 3.0 + db / 6.0);
    load_y[b] -= nrm.y * h * (da / 6.0 + db / 3.0);
  }

  const Eigen::VectorXd zero_bc = Eigen::VectorXd::Zero(mesh.num_nodes());
  const Eigen::VectorXd gx = solver.solve(load_x, zero_bc);
  const Eigen::VectorXd gy = solver.solve(load_y, zero_bc);

  DeformationField field{ws.mesh(), std::vector<Vec2>(mesh.num_nodes())};
  for (int i = 0; i < mesh.num_nodes(); ++i) field.values[i] = {gx[i], gy[i]};

  // screened smoothing of the boundary trace along the polyline: damps
  // node-scale sawtooth that the flux recovery injects, well below the
  // shape scales that drive the descent
  {
    Eigen::VectorXd h(n), lumped(n);
    double mean_h = 0.0;
    for (int i = 0; i < n; ++i) {
      h[i] = norm(mesh.nodes[loop[(i + 1) % n]] - mesh.nodes[loop[i]]);
      mean_h += h[i] / n;
    }
    const double beta = 0.4 * mean_h * mean_h;
    std::vector<Eigen::Triplet<double>> triplets;
    for (int i = 0; i < n; ++i) {
      const int prev = (i + n - 1) % n;
      lumped[i] = 0.5 * (h[prev] + h[i]);
      triplets.emplace_back(i, i, lumped[i] + beta * (1.0 / h[prev] + 1.0 / h[i]));
      triplets.emplace_back(i, (i + 1) % n, -beta / h[i]);
      triplets.emplace_back(i, prev, -beta / h[prev]);
    }
    SparseMat smoother(n, n);
    smoother.setFromTriplets(triplets.begin(), triplets.end());
    Eigen::SimplicialLDLT<SparseMat> ldlt(smoother);
    if (ldlt.info() != Eigen::Success) throw SolveFailure("trace smoothing factorization failed");
    Eigen::VectorXd vx(n), vy(n);
    for (int i = 0; i < n; ++i) {
      vx[i] = lumped[i] * field.values[loop[i]].x;
      vy[i] = lumped[i] * field.values[loop[i]].y;
    }
    const Eigen::VectorXd sx = ldlt.solve(vx);
    const Eigen::VectorXd sy = ldlt.solve(vy);
    for (int i = 0; i < n; ++i) field.values[loop[i]] = {sx[i], sy[i]};
  }
  apply_admissibility_cutoff(field);
  return field;
}

double directional_derivative(const MeshPtr& mesh, const GradientDensity& density,
                              const DeformationField& d) {
  const auto& loop = mesh->loop(BoundaryLabel::GammaPhi);
  const int n = static_cast<int>(loop.size());
  const std::vector<Vec2> normals = loop_outward_normals(*mesh, BoundaryLabel::GammaPhi);
  std::vector<double> integrand(n);
  for (int i = 0; i < n; ++i) {
    integrand[i] = density.on_gamma.values[i] * dot(d.values[loop[i]], normals[i]);
  }
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const int j = (i + 1) % n;
    const double h = norm(mesh->nodes[loop[j]] - mesh->nodes[loop[i]]);
    acc += 0.5 * h * (integrand[i] + integrand[j]);
  }
  return acc;
}

double volumetric_derivative(const MeshPtr& mesh, const StatePair& state,
                             const AdjointPair& adjoint, const ScalarField& u_d,
                             const ScalarField& f, const DeformationField& theta) {
  double acc = 0.0;
  for (int t = 0; t < mesh->num_triangles(); ++t) {
    const auto& tri = mesh->triangles[t];
    const ElementData d = element_data(*mesh, t);
    // Dtheta[r][c] = d theta_r / d x_c, constant on the element
    double dth[2][2] = {{0, 0}, {0, 0}};
    for (int i = 0; i < 3; ++i) {
      const Vec2 th = theta.values[tri[i]];
      dth[0][0] += th.x * d.grad[i].x;
      dth[0][1] += th.x * d.grad[i].y;
      dth[1][0] += th.y * d.grad[i].x;
      dth[1][1] += th.y * d.grad[i].y;
    }
    const double div_theta = dth[0][0] + dth[1][1];
    // A-dot = Dtheta + Dtheta^T - I div(theta)
    const double adot[2][2] = {
        {2.0 * dth[0][0] - div_theta, dth[0][1] + dth[1][0]},
        {dth[0][1] + dth[1][0], 2.0 * dth[1][1] - div_theta}};

    const Vec2 gu = element_gradient(d, state.u.values, tri);
    const Vec2 gw = element_gradient(d, state.w.values, tri);
    const Vec2 gp = element_gradient(d, adjoint.p.values, tri);
    const Vec2 gq = element_gradient(d, adjoint.q.values, tri);
    auto apply = [&](const Vec2 g) {
      return Vec2{adot[0][0] * g.x + adot[0][1] * g.y, adot[1][0] * g.x + adot[1][1] * g.y};
    };
    acc += d.area * (dot(apply(gu), gp) + dot(apply(gw), gq));

    // element mass quadratic forms: int_T a b = area/12 * sum_{i,j} a_i b_j (1 + delta_ij)
    auto mass_pair = [&](auto&& va, auto&& vb) {
      double s = 0.0;
      for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
          s += va(i) * vb(j) * ((i == j) ? 2.0 : 1.0);
        }
      }
      return d.area / 12.0 * s;
    };
    auto at = [&](const Eigen::VectorXd& v) { return [&v, &tri](int i) { return v[tri[i]]; }; };
    auto diff_at = [&](int i) { return state.u.values[tri[i]] - u_d.values[tri[i]]; };

    double bracket = mass_pair(at(f.values), at(adjoint.p.values));
    if (mesh->omega_element[t]) {
      bracket += 0.5 * mass_pair(diff_at, diff_at);
      bracket += mass_pair(diff_at, at(adjoint.q.values));
    }
    acc += div_theta * bracket;

    // grad f . theta term, exact for the P1 interpolant of f
    const Vec2 gf = element_gradient(d, f.values, tri);
    auto theta_x = [&](int i) { return theta.values[tri[i]].x; };
    auto theta_y = [&](int i) { return theta.values[tri[i]].y; };
    acc += gf.x * mass_pair(theta_x, at(adjoint.p.values));
    acc += gf.y * mass_pair(theta_y, at(adjoint.p.values));
  }
  return acc;
}

double cutoff_chi(double r) {
  if (r <= 0.9) return 1.0;
  if (r >= 1.0 - 1e-12) return 0.0;
  const double t = (r - 0.9) / 0.1;
  const double s = t * t * t * (t * (6.0 * t - 15.0) + 10.0);
  return 1.0 - s;
}

void apply_admissibility_cutoff(DeformationField& field) {
  const Mesh& mesh = *field.mesh;
  for (int i = 0; i < mesh.num_nodes(); ++i) {
    if (mesh.node_labels[i] == BoundaryLabel::Sigma || mesh.omegabar_node[i]) {
      field.values[i] = {0.0, 0.0};
      continue;
    }
    const double chi = cutoff_chi(norm(mesh.nodes[i]));
    if (chi == 0.0) {
      field.values[i] = {0.0, 0.0};
    } else if (chi != 1.0) {
      field.values[i] = chi * field.values[i];
    }
  }
}

DeformationField extend_gamma_field(const SystemWorkspace& ws,
                                    const std::vector<Vec2>& gamma_values) {
  const Mesh& mesh = *ws.mesh();
  const auto& loop = mesh.loop(BoundaryLabel::GammaPhi);
  if (gamma_values.size() != loop.size()) {
    throw std::invalid_argument("gamma_values size mismatch");
  }
  Eigen::VectorXd bc_x = Eigen::VectorXd::Zero(mesh.num_nodes());
  Eigen::VectorXd bc_y = Eigen::VectorXd::Zero(mesh.num_nodes());
  for (std::size_t i = 0; i < loop.size(); ++i) {
    bc_x[loop[i]] = gamma_values[i].x;
    bc_y[loop[i]] = gamma_values[i].y;
  }
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(mesh.num_nodes());
  const Eigen::VectorXd gx = ws.dirichlet().solve(zero, bc_x);
  const Eigen::VectorXd gy = ws.dirichlet().solve(zero, bc_y);
  DeformationField field{ws.mesh(), std::vector<Vec2>(mesh.num_nodes())};
  for (int i = 0; i < mesh.num_nodes(); ++i) field.values[i] = {gx[i], gy[i]};
  apply_admissibility_cutoff(field);
  return field;
}

}  // namespace shapeopt
