#include "shapeopt/fem.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "shapeopt/errors.hpp"

namespace shapeopt {

namespace {

struct ElementGeometry {
  double area;
  Vec2 grad[3];  // gradients of the three hat functions
};

ElementGeometry element_geometry(const Mesh& mesh, int t) {
  const auto& tri = mesh.triangles[t];
  const Vec2 a = mesh.nodes[tri[0]], b = mesh.nodes[tri[1]], c = mesh.nodes[tri[2]];
  const double two_area = cross(b - a, c - a);
  ElementGeometry g;
  g.area = 0.5 * two_area;
  g.grad[0] = {(b.y - c.y) / two_area, (c.x - b.x) / two_area};
  g.grad[1] = {(c.y - a.y) / two_area, (a.x - c.x) / two_area};
  g.grad[2] = {(a.y - b.y) / two_area, (b.x - a.x) / two_area};
  return g;
}

Eigen::VectorXd mass_load(const Mesh& mesh, const Eigen::VectorXd& source, bool omega_only) {
  Eigen::VectorXd load = Eigen::VectorXd::Zero(mesh.num_nodes());
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    if (omega_only && !mesh.omega_element[t]) continue;
    const auto& tri = mesh.triangles[t];
    const double area = mesh.signed_area(t);
    const double f0 = source[tri[0]], f1 = source[tri[1]], f2 = source[tri[2]];
    load[tri[0]] += area / 12.0 * (2.0 * f0 + f1 + f2);
    load[tri[1]] += area / 12.0 * (f0 + 2.0 * f1 + f2);
    load[tri[2]] += area / 12.0 * (f0 + f1 + 2.0 * f2);
  }
  return load;
}

}  // namespace

SparseMat assemble_stiffness(const Mesh& mesh) {
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(9 * mesh.num_triangles());
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const ElementGeometry g = element_geometry(mesh, t);
    const auto& tri = mesh.triangles[t];
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        triplets.emplace_back(tri[i], tri[j], g.area * dot(g.grad[i], g.grad[j]));
      }
    }
  }
  SparseMat k(mesh.num_nodes(), mesh.num_nodes());
  k.setFromTriplets(triplets.begin(), triplets.end());
  k.makeCompressed();
  return k;
}

Eigen::VectorXd assemble_load(const Mesh& mesh, const Eigen::VectorXd& source) {
  return mass_load(mesh, source, false);
}

Eigen::VectorXd assemble_load_omega(const Mesh& mesh, const Eigen::VectorXd& source) {
  return mass_load(mesh, source, true);
}

DirichletSolver::DirichletSolver(MeshPtr mesh, const SparseMat& matrix,
                                 const std::vector<BoundaryLabel>& constrained_loops)
    : mesh_(std::move(mesh)) {
  const int n = mesh_->num_nodes();
  constrained_.assign(n, 0);
  for (BoundaryLabel label : constrained_loops) {
    for (int id : mesh_->loop(label)) constrained_[id] = 1;
  }
  free_index_.assign(n, -1);
  for (int i = 0; i < n; ++i) {
    if (!constrained_[i]) {
      free_index_[i] = static_cast<int>(free_nodes_.size());
      free_nodes_.push_back(i);
    }
  }
  const int nf = static_cast<int>(free_nodes_.size());
  std::vector<Eigen::Triplet<double>> ff, fc;
  for (int col = 0; col < matrix.outerSize(); ++col) {
    for (SparseMat::InnerIterator it(matrix, col); it; ++it) {
      const int r = static_cast<int>(it.row());
      const int c = static_cast<int>(it.col());
      if (constrained_[r]) continue;
      if (constrained_[c]) {
        fc.emplace_back(free_index_[r], c, it.value());
      } else {
        ff.emplace_back(free_index_[r], free_index_[c], it.value());
      }
    }
  }
  k_ff_.resize(nf, nf);
  k_ff_.setFromTriplets(ff.begin(), ff.end());
  k_ff_.makeCompressed();
  k_fc_.resize(nf, n);
  k_fc_.setFromTriplets(fc.begin(), fc.end());
  k_fc_.makeCompressed();
  ldlt_.compute(k_ff_);
  factor_ok_ = ldlt_.info() == Eigen::Success;
}

Eigen::VectorXd DirichletSolver::solve(const Eigen::VectorXd& load,
                                       const Eigen::VectorXd& bc_values) const {
  const int n = mesh_->num_nodes();
  Eigen::VectorXd constrained_vals = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < n; ++i) {
    if (constrained_[i]) constrained_vals[i] = bc_values[i];
  }
  const int nf = static_cast<int>(free_nodes_.size());
  Eigen::VectorXd rhs(nf);
  for (int i = 0; i < nf; ++i) rhs[i] = load[free_nodes_[i]];
  rhs -= k_fc_ * constrained_vals;

  Eigen::VectorXd x_free;
  const double rhs_norm = std::max(rhs.norm(), 1e-300);
  bool good = false;
  if (factor_ok_) {
    x_free = ldlt_.solve(rhs);
    good = (k_ff_ * x_free - rhs).norm() <= 1e-10 * rhs_norm;
  }
  if (!good) {
    Eigen::ConjugateGradient<SparseMat, Eigen::Lower | Eigen::Upper> cg;
    cg.setTolerance(1e-12);
    cg.setMaxIterations(20 * nf + 100);
    cg.compute(k_ff_);
    if (factor_ok_) {
      x_free = cg.solveWithGuess(rhs, x_free);
    } else {
      x_free = cg.solve(rhs);
    }
    if ((k_ff_ * x_free - rhs).norm() > 1e-10 * rhs_norm) {
      throw SolveFailure("linear solver stagnated");
    }
  }

  Eigen::VectorXd x = constrained_vals;
  for (int i = 0; i < nf; ++i) x[free_nodes_[i]] = x_free[i];
  return x;
}

Eigen::VectorXd apply_boundary_conditions(const Mesh& mesh, const std::vector<BoundaryCondition>& bcs) {
  Eigen::VectorXd values = Eigen::VectorXd::Zero(mesh.num_nodes());
  for (const auto& bc : bcs) {
    const auto& loop = mesh.loop(bc.label);
    if (bc.trace) {
      if (bc.trace->node_ids != loop) {
        throw std::invalid_argument("boundary trace does not match the mesh loop");
      }
      for (int i = 0; i < bc.trace->size(); ++i) values[loop[i]] = bc.trace->values[i];
    } else {
      for (int id : loop) values[id] = bc.constant;
    }
  }
  return values;
}

ScalarField solve_dirichlet(const MeshPtr& mesh, const ScalarField& source,
                            const std::vector<BoundaryCondition>& bcs) {
  const auto domain_labels = mesh->domain_boundary_labels();
  std::vector<BoundaryLabel> given;
  for (const auto& bc : bcs) given.push_back(bc.label);
  for (BoundaryLabel label : domain_labels) {
    if (std::find(given.begin(), given.end(), label) == given.end()) {
      throw std::invalid_argument(std::string("missing boundary condition on ") + label_name(label));
    }
  }
  const SparseMat k = assemble_stiffness(*mesh);
  DirichletSolver solver(mesh, k, domain_labels);
  const Eigen::VectorXd load = assemble_load(*mesh, source.values);
  const Eigen::VectorXd bc_values = apply_boundary_conditions(*mesh, bcs);
  return {mesh, solver.solve(load, bc_values)};
}

ScalarField lift_harmonic(const MeshPtr& disk_mesh, const BoundaryTrace& g) {
  std::vector<BoundaryCondition> bcs{{g.label, 0.0, &g}};
  return solve_dirichlet(disk_mesh, zero_field(disk_mesh), bcs);
}

double l2_norm_sq(const ScalarField& field, Region region) {
  const Mesh& mesh = *field.mesh;
  double acc = 0.0;
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    if (region == Region::OmegaOnly && !mesh.omega_element[t]) continue;
    const auto& tri = mesh.triangles[t];
    const double area = mesh.signed_area(t);
    const double u0 = field.values[tri[0]], u1 = field.values[tri[1]], u2 = field.values[tri[2]];
    acc += area / 6.0 * (u0 * u0 + u1 * u1 + u2 * u2 + u0 * u1 + u1 * u2 + u2 * u0);
  }
  return acc;
}

double l2_norm(const ScalarField& field, Region region) {
  return std::sqrt(std::max(0.0, l2_norm_sq(field, region)));
}

BoundaryTrace boundary_flux(const MeshPtr& mesh, const ScalarField& w, const Eigen::VectorXd& load,
                            BoundaryLabel label, const SparseMat* stiffness) {
  const SparseMat k = stiffness ? *stiffness : assemble_stiffness(*mesh);
  const Eigen::VectorXd residual = k * w.values - load;
  BoundaryTrace trace = constant_trace(mesh, label, 0.0);
  Eigen::VectorXd rhs(trace.size());
  for (int i = 0; i < trace.size(); ++i) rhs[i] = residual[trace.node_ids[i]];
  const SparseMat m = loop_mass_matrix(trace);
  Eigen::SimplicialLDLT<SparseMat> ldlt(m);
  if (ldlt.info() != Eigen::Success) throw SolveFailure("loop mass factorization failed");
  trace.values = ldlt.solve(rhs);
  return trace;
}

BoundaryTrace flux_on_sigma(const MeshPtr& mesh, const ScalarField& w, const ScalarField& source) {
  return boundary_flux(mesh, w, assemble_load(*mesh, source.values), BoundaryLabel::Sigma);
}

ScalarField interpolate(const ScalarField& src, const MeshPtr& dst_mesh) {
  const Mesh& mesh = *src.mesh;
  // background bins over the source mesh
  Vec2 lo{1e300, 1e300}, hi{-1e300, -1e300};
  for (const Vec2& p : mesh.nodes) {
    lo.x = std::min(lo.x, p.x);
    lo.y = std::min(lo.y, p.y);
    hi.x = std::max(hi.x, p.x);
    hi.y = std::max(hi.y, p.y);
  }
  const int nbins = std::max(4, static_cast<int>(std::sqrt(static_cast<double>(mesh.num_triangles()))));
  const double bx = std::max(hi.x - lo.x, 1e-12) / nbins;
  const double by = std::max(hi.y - lo.y, 1e-12) / nbins;
  std::vector<std::vector<int>> bins(static_cast<std::size_t>(nbins) * nbins);
  auto bin_range = [&](Vec2 a, Vec2 b) {
    const int ix0 = std::clamp(static_cast<int>((a.x - lo.x) / bx), 0, nbins - 1);
    const int iy0 = std::clamp(static_cast<int>((a.y - lo.y) / by), 0, nbins - 1);
    const int ix1 = std::clamp(static_cast<int>((b.x - lo.x) / bx), 0, nbins - 1);
    const int iy1 = std::clamp(static_cast<int>((b.y - lo.y) / by), 0, nbins - 1);
    return std::array<int, 4>{ix0, iy0, ix1, iy1};
  };
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto& tri = mesh.triangles[t];
    Vec2 a{1e300, 1e300}, b{-1e300, -1e300};
    for (int v : tri) {
      a.x = std::min(a.x, mesh.nodes[v].x);
      a.y = std::min(a.y, mesh.nodes[v].y);
      b.x = std::max(b.x, mesh.nodes[v].x);
      b.y = std::max(b.y, mesh.nodes[v].y);
    }
    const auto r = bin_range(a, b);
    for (int ix = r[0]; ix <= r[2]; ++ix) {
      for (int iy = r[1]; iy <= r[3]; ++iy) bins[ix * nbins + iy].push_back(t);
    }
  }

  ScalarField out{dst_mesh, Eigen::VectorXd::Zero(dst_mesh->num_nodes())};
  for (int i = 0; i < dst_mesh->num_nodes(); ++i) {
    const Vec2 p = dst_mesh->nodes[i];
    const int ix = std::clamp(static_cast<int>((p.x - lo.x) / bx), 0, nbins - 1);
    const int iy = std::clamp(static_cast<int>((p.y - lo.y) / by), 0, nbins - 1);
    bool found = false;
    double best_violation = 1e300;
    double best_value = 0.0;
    for (int t : bins[ix * nbins + iy]) {
      const auto& tri = mesh.triangles[t];
      const Vec2 a = mesh.nodes[tri[0]], b2 = mesh.nodes[tri[1]], c = mesh.nodes[tri[2]];
      const double two_area = cross(b2 - a, c - a);
      const double l0 = cross(b2 - p, c - p) / two_area;
      const double l1 = cross(c - p, a - p) / two_area;
      const double l2 = 1.0 - l0 - l1;
      const double violation = -std::min({l0, l1, l2});
      if (violation <= best_violation) {
        best_violation = violation;
        best_value = l0 * src.values[tri[0]] + l1 * src.values[tri[1]] + l2 * src.values[tri[2]];
      }
      if (violation <= 1e-9) {
        found = true;
        out.values[i] = best_value;
        break;
      }
    }
    if (!found) {
      // snap tolerance: accept the best candidate if barely outside
      if (best_violation <= 1e-9) {
        out.values[i] = best_value;
      } else {
        throw PointOutsideMesh("interpolation point outside source mesh");
      }
    }
  }
  return out;
}

BoundaryTrace make_trace(const MeshPtr& mesh, BoundaryLabel label,
                         const std::function<double(Vec2)>& fn) {
  BoundaryTrace trace;
  trace.label = label;
  trace.node_ids = mesh->loop(label);
  const int n = trace.size();
  trace.arclength.resize(n);
  trace.values.resize(n);
  double s = 0.0;
  for (int i = 0; i < n; ++i) {
    trace.arclength[i] = s;
    trace.values[i] = fn(mesh->nodes[trace.node_ids[i]]);
    s += norm(mesh->nodes[trace.node_ids[(i + 1) % n]] - mesh->nodes[trace.node_ids[i]]);
  }
  trace.perimeter = s;
  return trace;
}

BoundaryTrace constant_trace(const MeshPtr& mesh, BoundaryLabel label, double value) {
  return make_trace(mesh, label, [value](Vec2) { return value; });
}

Eigen::VectorXd lumped_loop_mass(const BoundaryTrace& trace) {
  const int n = trace.size();
  Eigen::VectorXd m(n);
  for (int i = 0; i < n; ++i) {
    const double s_prev = (i == 0) ? trace.perimeter - trace.arclength[n - 1] : trace.arclength[i] - trace.arclength[i - 1];
    const double s_next = (i == n - 1) ? trace.perimeter - trace.arclength[n - 1] : trace.arclength[i + 1] - trace.arclength[i];
    m[i] = 0.5 * (s_prev + s_next);
  }
  return m;
}

SparseMat loop_mass_matrix(const BoundaryTrace& trace) {
  const int n = trace.size();
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(4 * n);
  for (int i = 0; i < n; ++i) {
    const int j = (i + 1) % n;
    const double h = (i == n - 1) ? trace.perimeter - trace.arclength[n - 1]
                                  : trace.arclength[i + 1] - trace.arclength[i];
    triplets.emplace_back(i, i, h / 3.0);
    triplets.emplace_back(j, j, h / 3.0);
    triplets.emplace_back(i, j, h / 6.0);
    triplets.emplace_back(j, i, h / 6.0);
  }
  SparseMat m(n, n);
  m.setFromTriplets(triplets.begin(), triplets.end());
  m.makeCompressed();
  return m;
}

double trace_dot(const BoundaryTrace& a, const BoundaryTrace& b) {
  if (a.size() != b.size()) throw std::invalid_argument("trace size mismatch");
  const Eigen::VectorXd m = lumped_loop_mass(a);
  return (m.array() * a.values.array() * b.values.array()).sum();
}

double trace_norm(const BoundaryTrace& a) { return std::sqrt(std::max(0.0, trace_dot(a, a))); }

ScalarField make_field(const MeshPtr& mesh, const std::function<double(Vec2)>& fn) {
  ScalarField f{mesh, Eigen::VectorXd(mesh->num_nodes())};
  for (int i = 0; i < mesh->num_nodes(); ++i) f.values[i] = fn(mesh->nodes[i]);
  return f;
}

ScalarField zero_field(const MeshPtr& mesh) {
  return {mesh, Eigen::VectorXd::Zero(mesh->num_nodes())};
}

void save_field(const ScalarField& field, const std::string& name, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  std::fprintf(f, "field %d %s\n", static_cast<int>(field.values.size()), name.c_str());
  for (int i = 0; i < field.values.size(); ++i) std::fprintf(f, "%.17g\n", field.values[i]);
  std::fclose(f);
}

ScalarField load_field(const MeshPtr& mesh, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string word, name;
  int n = 0;
  in >> word >> n >> name;
  if (!in || n != mesh->num_nodes()) throw std::runtime_error("field size mismatch in " + path);
  ScalarField f{mesh, Eigen::VectorXd(n)};
  for (int i = 0; i < n; ++i) in >> f.values[i];
  if (!in) throw std::runtime_error("truncated field file " + path);
  return f;
}

void save_trace_csv(const BoundaryTrace& trace, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  std::fprintf(f, "arclength,value\n");
  for (int i = 0; i < trace.size(); ++i) {
    std::fprintf(f, "%.17g,%.17g\n", trace.arclength[i], trace.values[i]);
  }
  std::fclose(f);
}

BoundaryTrace load_trace_csv(const MeshPtr& mesh, BoundaryLabel label, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  std::getline(in, line);  // header
  BoundaryTrace trace = constant_trace(mesh, label, 0.0);
  for (int i = 0; i < trace.size(); ++i) {
    if (!std::getline(in, line)) throw std::runtime_error("truncated trace file " + path);
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw std::runtime_error("bad trace row in " + path);
    const double s = std::stod(line.substr(0, comma));
    const double v = std::stod(line.substr(comma + 1));
    if (std::abs(s - trace.arclength[i]) > 1e-9 * std::max(1.0, trace.perimeter)) {
      throw std::runtime_error("trace arclength grid mismatch in " + path);
    }
    trace.values[i] = v;
  }
  return trace;
}

}  // namespace shapeopt
