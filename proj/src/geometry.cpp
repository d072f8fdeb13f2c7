#include "shapeopt/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <limits>
#include <numbers>
#include <set>
#include <sstream>

#include "shapeopt/errors.hpp"

namespace shapeopt {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double wrap_positive(double a) {
  while (a <= 0.0) a += kTwoPi;
  while (a > kTwoPi) a -= kTwoPi;
  return a;
}

// --- robust-enough predicates -------------------------------------------

double orient2d(Vec2 a, Vec2 b, Vec2 c) { return cross(b - a, c - a); }

// > 0 iff d strictly inside circumcircle of CCW triangle (a,b,c);
// near-cocircular configurations are reported as 0 so that Lawson
// flipping terminates on structured (ring-aligned) point sets.
double incircle_filtered(Vec2 a, Vec2 b, Vec2 c, Vec2 d) {
  const double adx = a.x - d.x, ady = a.y - d.y;
  const double bdx = b.x - d.x, bdy = b.y - d.y;
  const double cdx = c.x - d.x, cdy = c.y - d.y;
  const double ad = adx * adx + ady * ady;
  const double bd = bdx * bdx + bdy * bdy;
  const double cd = cdx * cdx + cdy * cdy;
  const double det = adx * (bdy * cd - bd * cdy) - ady * (bdx * cd - bd * cdx) +
                     ad * (bdx * cdy - bdy * cdx);
  const double perm = std::abs(adx) * (std::abs(bdy) * cd + bd * std::abs(cdy)) +
                      std::abs(ady) * (std::abs(bdx) * cd + bd * std::abs(cdx)) +
                      ad * (std::abs(bdx) * std::abs(cdy) + std::abs(bdy) * std::abs(cdx));
  if (std::abs(det) <= 1e-12 * perm) return 0.0;
  return det;
}

bool segments_properly_intersect(Vec2 a, Vec2 b, Vec2 c, Vec2 d) {
  const double d1 = orient2d(c, d, a);
  const double d2 = orient2d(c, d, b);
  const double d3 = orient2d(a, b, c);
  const double d4 = orient2d(a, b, d);
  return ((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) &&
         ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0));
}

// --- star-shaped loop parametrized by polar angle -------------------------

struct StarLoop {
  std::vector<Vec2> pts;
  Vec2 center{};
  std::vector<double> unrolled;  // size n+1, strictly increasing, unrolled[n] = unrolled[0]+2pi

  double mean_radius = 0.0;
  double spacing = 0.0;  // mean edge length

  static bool try_build(const std::vector<Vec2>& poly, Vec2 center, StarLoop& loop) {
    loop.pts = poly;
    loop.center = center;
    const int n = static_cast<int>(poly.size());
    loop.unrolled.assign(n + 1, 0.0);
    loop.mean_radius = 0.0;
    double perim = 0.0;
    auto angle = [&](int i) {
      return std::atan2(poly[i].y - center.y, poly[i].x - center.x);
    };
    loop.unrolled[0] = angle(0);
    for (int i = 0; i < n; ++i) {
      loop.mean_radius += norm(poly[i] - center) / n;
      perim += norm(poly[(i + 1) % n] - poly[i]);
      if (i == 0) continue;
      const double delta = wrap_positive(angle(i) - angle(i - 1));
      if (delta >= kTwoPi - 1e-12) return false;
      loop.unrolled[i] = loop.unrolled[i - 1] + delta;
    }
    loop.unrolled[n] = loop.unrolled[0] + kTwoPi;
    loop.spacing = perim / n;
    return loop.unrolled[n] > loop.unrolled[n - 1];
  }

  double radius_at(double theta) const {
    const int n = static_cast<int>(pts.size());
    double t = theta;
    while (t < unrolled[0]) t += kTwoPi;
    while (t >= unrolled[0] + kTwoPi) t -= kTwoPi;
    int lo = 0, hi = n;
    while (hi - lo > 1) {
      const int mid = (lo + hi) / 2;
      if (unrolled[mid] <= t) lo = mid; else hi = mid;
    }
    const Vec2 p = pts[lo] - center;
    const Vec2 q = pts[(lo + 1) % n] - center;
    const Vec2 dir{std::cos(t), std::sin(t)};
    const double denom = cross(dir, p - q);
    if (std::abs(denom) < 1e-30) {
      const double s = (t - unrolled[lo]) / (unrolled[lo + 1] - unrolled[lo]);
      return (1.0 - s) * norm(p) + s * norm(q);
    }
    const double s = -cross(dir, p) / cross(dir, q - p);
    const Vec2 hit = p + s * (q - p);
    return dot(hit, dir);
  }
};

Vec2 polygon_centroid(const std::vector<Vec2>& poly) {
  double area2 = 0.0;
  Vec2 c{0.0, 0.0};
  const int n = static_cast<int>(poly.size());
  for (int i = 0; i < n; ++i) {
    const Vec2 a = poly[i], b = poly[(i + 1) % n];
    const double w = cross(a, b);
    area2 += w;
    c = c + w * (a + b);
  }
  if (std::abs(area2) < 1e-30) return {0.0, 0.0};
  return (1.0 / (3.0 * area2)) * c;
}

// --- strip triangulation between two angularly monotone rings -------------

// Emits CCW triangles filling the band between an inner and an outer ring,
// both given as node id lists in CCW order.
void zip_rings(const std::vector<int>& inner, const std::vector<int>& outer,
               const std::vector<Vec2>& nodes, Vec2 center,
               std::vector<std::array<int, 3>>& tris) {
  const int na = static_cast<int>(inner.size());
  const int nb = static_cast<int>(outer.size());
  auto angle_of = [&](int id) {
    return std::atan2(nodes[id].y - center.y, nodes[id].x - center.x);
  };

  const double a0 = angle_of(inner[0]);
  std::vector<double> ua(na + 1), ub(nb + 1);
  ua[0] = a0;
  for (int i = 1; i < na; ++i) ua[i] = ua[i - 1] + wrap_positive(angle_of(inner[i]) - angle_of(inner[i - 1]));
  ua[na] = a0 + kTwoPi;

  // first outer vertex at or after a0
  int j0 = 0;
  double best = kTwoPi + 1.0;
  for (int j = 0; j < nb; ++j) {
    const double off = wrap_positive(angle_of(outer[j]) - a0);
    const double key = (off >= kTwoPi - 1e-14) ? 0.0 : off;
    if (key < best) { best = key; j0 = j; }
  }
  ub[0] = a0 + best;
  for (int j = 1; j < nb; ++j) {
    const int id = outer[(j0 + j) % nb];
    const int prev = outer[(j0 + j - 1) % nb];
    ub[j] = ub[j - 1] + wrap_positive(angle_of(id) - angle_of(prev));
  }
  ub[nb] = ub[0] + kTwoPi;

  int ci = 0, cj = 0;
  while (ci < na || cj < nb) {
    const int a_cur = inner[ci % na];
    const int b_cur = outer[(j0 + cj) % nb];
    const bool advance_inner = (cj >= nb) || (ci < na && ua[ci + 1] <= ub[cj + 1]);
    if (advance_inner) {
      const int a_next = inner[(ci + 1) % na];
      tris.push_back({a_cur, b_cur, a_next});
      ++ci;
    } else {
      const int b_next = outer[(j0 + cj + 1) % nb];
      tris.push_back({b_cur, b_next, a_cur});
      ++cj;
    }
  }
}

// --- Lawson flips to (tie-broken) constrained Delaunay --------------------

using EdgeKey = std::pair<int, int>;
EdgeKey make_edge(int a, int b) { return a < b ? EdgeKey{a, b} : EdgeKey{b, a}; }

void lawson_flip(std::vector<std::array<int, 3>>& tris, const std::vector<Vec2>& nodes,
                 const std::set<EdgeKey>& constrained) {
  std::map<EdgeKey, std::array<int, 2>> adj;
  auto add_tri_edges = [&](int t) {
    for (int e = 0; e < 3; ++e) {
      const EdgeKey k = make_edge(tris[t][e], tris[t][(e + 1) % 3]);
      auto it = adj.find(k);
      if (it == adj.end()) adj[k] = {t, -1};
      else it->second[1] = t;
    }
  };
  auto drop_tri_edge = [&](EdgeKey k, int t) {
    auto it = adj.find(k);
    if (it == adj.end()) return;
    if (it->second[0] == t) it->second[0] = it->second[1];
    it->second[1] = -1;
    if (it->second[0] == -1) adj.erase(it);
  };
  auto attach = [&](EdgeKey k, int t) {
    auto it = adj.find(k);
    if (it == adj.end()) adj[k] = {t, -1};
    else it->second[1] = t;
  };
  for (int t = 0; t < static_cast<int>(tris.size()); ++t) add_tri_edges(t);

  std::deque<EdgeKey> queue;
  for (const auto& [k, v] : adj) {
    if (v[1] != -1 && !constrained.count(k)) queue.push_back(k);
  }
  std::size_t flips = 0;
  const std::size_t cap = 64 * tris.size() + 1024;
  while (!queue.empty()) {
    const EdgeKey k = queue.front();
    queue.pop_front();
    auto it = adj.find(k);
    if (it == adj.end() || it->second[1] == -1 || constrained.count(k)) continue;
    const int t1 = it->second[0];
    const int t2 = it->second[1];
    // orient t1 as (u, v, w) with (u, v) the shared edge
    int u = -1, v = -1, w = -1, x = -1;
    for (int e = 0; e < 3; ++e) {
      const int a = tris[t1][e], b = tris[t1][(e + 1) % 3];
      if (make_edge(a, b) == k) { u = a; v = b; w = tris[t1][(e + 2) % 3]; break; }
    }
    for (int e = 0; e < 3; ++e) {
      const int a = tris[t2][e], b = tris[t2][(e + 1) % 3];
      if (make_edge(a, b) == k) { x = tris[t2][(e + 2) % 3]; break; }
    }
    if (u < 0 || x < 0) continue;
    if (incircle_filtered(nodes[u], nodes[v], nodes[w], nodes[x]) <= 0.0) continue;
    // flip only across strictly convex quads
    if (orient2d(nodes[u], nodes[x], nodes[w]) <= 0.0) continue;
    if (orient2d(nodes[v], nodes[w], nodes[x]) <= 0.0) continue;

    for (int e = 0; e < 3; ++e) drop_tri_edge(make_edge(tris[t1][e], tris[t1][(e + 1) % 3]), t1);
    for (int e = 0; e < 3; ++e) drop_tri_edge(make_edge(tris[t2][e], tris[t2][(e + 1) % 3]), t2);
    tris[t1] = {u, x, w};
    tris[t2] = {v, w, x};
    add_tri_edges(t1);
    add_tri_edges(t2);
    for (const EdgeKey nk : {make_edge(u, x), make_edge(x, v), make_edge(v, w), make_edge(w, u)}) {
      if (!constrained.count(nk)) queue.push_back(nk);
    }
    if (++flips > cap) throw MeshingFailure("Lawson flipping did not terminate");
  }
}

// --- band construction -----------------------------------------------------

struct Band {
  std::vector<std::array<int, 3>> tris;
};

// Triangulates the region between loop `outer` and loop `inner` (node id
// lists, CCW, already placed in `nodes`). Interior rings are appended to
// `nodes`. Both loops must be star-shaped about the origin.
Band mesh_band(std::vector<Vec2>& nodes, const std::vector<int>& outer_ids,
               const std::vector<int>& inner_ids, const char* what) {
  std::vector<Vec2> outer_pts, inner_pts;
  outer_pts.reserve(outer_ids.size());
  inner_pts.reserve(inner_ids.size());
  for (int id : outer_ids) outer_pts.push_back(nodes[id]);
  for (int id : inner_ids) inner_pts.push_back(nodes[id]);
  // both loops must be star-shaped about one kernel point; try the inner
  // centroid first, then the origin
  StarLoop out_loop, in_loop;
  bool ok = false;
  for (const Vec2 center : {polygon_centroid(inner_pts), Vec2{0.0, 0.0}}) {
    if (StarLoop::try_build(inner_pts, center, in_loop) &&
        StarLoop::try_build(outer_pts, center, out_loop)) {
      ok = true;
      break;
    }
  }
  if (!ok) {
    throw MeshingFailure(std::string(what) + ": loops share no polar kernel point");
  }
  const Vec2 center = in_loop.center;

  const double h = 0.5 * (out_loop.spacing + in_loop.spacing);
  const double gap = out_loop.mean_radius - in_loop.mean_radius;
  if (gap <= 0.0) throw MeshingFailure(std::string(what) + ": loops are not radially ordered");
  int layers = std::max(0, static_cast<int>(std::lround(gap / h)) - 1);

  std::vector<std::vector<int>> rings;
  rings.push_back(inner_ids);
  const int n_in = static_cast<int>(inner_ids.size());
  const int n_out = static_cast<int>(outer_ids.size());
  for (int l = 1; l <= layers; ++l) {
    const double s = static_cast<double>(l) / (layers + 1);
    const int count = static_cast<int>(std::lround(n_in + s * (n_out - n_in)));
    std::vector<int> ring;
    ring.reserve(count);
    const double offset = (l % 2 == 1) ? 0.5 : 0.0;
    for (int j = 0; j < count; ++j) {
      const double theta = kTwoPi * (j + offset) / count;
      const double r_in = in_loop.radius_at(theta);
      const double r_out = out_loop.radius_at(theta);
      double r = (1.0 - s) * r_in + s * r_out;
      const double clear = 0.3 * h;
      if (r_in + clear < r_out - clear) {
        r = std::clamp(r, r_in + clear, r_out - clear);
      } else {
        r = 0.5 * (r_in + r_out);
      }
      ring.push_back(static_cast<int>(nodes.size()));
      nodes.push_back({center.x + r * std::cos(theta), center.y + r * std::sin(theta)});
    }
    rings.push_back(std::move(ring));
  }
  rings.push_back(outer_ids);

  Band band;
  for (std::size_t k = 0; k + 1 < rings.size(); ++k) {
    zip_rings(rings[k], rings[k + 1], nodes, center, band.tris);
  }

  std::set<EdgeKey> constrained;
  for (std::size_t i = 0; i < outer_ids.size(); ++i) {
    constrained.insert(make_edge(outer_ids[i], outer_ids[(i + 1) % outer_ids.size()]));
  }
  for (std::size_t i = 0; i < inner_ids.size(); ++i) {
    constrained.insert(make_edge(inner_ids[i], inner_ids[(i + 1) % inner_ids.size()]));
  }
  lawson_flip(band.tris, nodes, constrained);

  for (const auto& t : band.tris) {
    const double a = 0.5 * cross(nodes[t[1]] - nodes[t[0]], nodes[t[2]] - nodes[t[0]]);
    if (!(a > 0.0)) {
#ifdef SHAPEOPT_BAND_DEBUG
      std::FILE* dbg = std::fopen("/tmp/band_fail.txt", "w");
      std::fprintf(dbg, "area %.17g center %.17g %.17g\ntri %.17g %.17g %.17g %.17g %.17g %.17g\n",
                   a, center.x, center.y, nodes[t[0]].x, nodes[t[0]].y, nodes[t[1]].x,
                   nodes[t[1]].y, nodes[t[2]].x, nodes[t[2]].y);
      std::fprintf(dbg, "inner %zu\n", inner_ids.size());
      for (int id : inner_ids) std::fprintf(dbg, "%.17g %.17g\n", nodes[id].x, nodes[id].y);
      std::fprintf(dbg, "outer %zu\n", outer_ids.size());
      for (int id : outer_ids) std::fprintf(dbg, "%.17g %.17g\n", nodes[id].x, nodes[id].y);
      std::fclose(dbg);
#endif
      throw MeshingFailure(std::string(what) + ": degenerate triangle in band");
    }
  }
  return band;
}

void check_nesting(const std::vector<std::vector<Vec2>>& loops) {
  for (std::size_t i = 0; i < loops.size(); ++i) {
    if (!polyline_is_simple(loops[i])) {
      throw CurveIntersection("boundary curve self-intersects");
    }
  }
  // loops are ordered outermost to innermost; each must strictly contain the next
  for (std::size_t i = 0; i + 1 < loops.size(); ++i) {
    for (const Vec2& p : loops[i + 1]) {
      if (!point_in_polygon(p, loops[i])) {
        throw CurveIntersection("curves are not nested");
      }
    }
  }
  for (std::size_t i = 0; i < loops.size(); ++i) {
    for (std::size_t j = i + 1; j < loops.size(); ++j) {
      const auto& a = loops[i];
      const auto& b = loops[j];
      for (std::size_t p = 0; p < a.size(); ++p) {
        for (std::size_t q = 0; q < b.size(); ++q) {
          if (segments_properly_intersect(a[p], a[(p + 1) % a.size()], b[q],
                                          b[(q + 1) % b.size()])) {
            throw CurveIntersection("curves intersect");
          }
        }
      }
    }
  }
}

double point_segment_distance(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double len2 = dot(ab, ab);
  double t = len2 > 0.0 ? dot(p - a, ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return norm(p - (a + t * ab));
}

}  // namespace

// --- labels ----------------------------------------------------------------

const char* label_name(BoundaryLabel label) {
  switch (label) {
    case BoundaryLabel::Sigma: return "sigma";
    case BoundaryLabel::GammaPhi: return "gamma";
    case BoundaryLabel::OmegaInner: return "omega_inner";
    case BoundaryLabel::OmegaOuter: return "omega_outer";
    case BoundaryLabel::GammaD: return "gamma_d";
    case BoundaryLabel::Interior: return "interior";
  }
  return "interior";
}

BoundaryLabel label_from_name(const std::string& name) {
  if (name == "sigma") return BoundaryLabel::Sigma;
  if (name == "gamma") return BoundaryLabel::GammaPhi;
  if (name == "omega_inner") return BoundaryLabel::OmegaInner;
  if (name == "omega_outer") return BoundaryLabel::OmegaOuter;
  if (name == "gamma_d") return BoundaryLabel::GammaD;
  if (name == "interior") return BoundaryLabel::Interior;
  throw ConfigError("unknown boundary label: " + name);
}

// --- curves ----------------------------------------------------------------

BoundaryCurve BoundaryCurve::circle(Vec2 center, double radius, int n) {
  BoundaryCurve c;
  c.kind = Kind::Circle;
  c.center = center;
  c.radius = radius;
  c.sample_count = n;
  return c;
}

BoundaryCurve BoundaryCurve::arrowhead(int n) {
  BoundaryCurve c;
  c.kind = Kind::Arrowhead;
  c.sample_count = n;
  return c;
}

BoundaryCurve BoundaryCurve::polyline(std::vector<Vec2> pts) {
  BoundaryCurve c;
  c.kind = Kind::Polyline;
  c.sample_count = static_cast<int>(pts.size());
  c.points = std::move(pts);
  return c;
}

std::vector<Vec2> BoundaryCurve::sample() const {
  if (kind == Kind::Polyline) return points;
  if (sample_count < 8) throw std::invalid_argument("curve resolution must be >= 8");
  std::vector<Vec2> pts(sample_count);
  for (int i = 0; i < sample_count; ++i) {
    const double t = kTwoPi * i / sample_count;
    if (kind == Kind::Circle) {
      pts[i] = {center.x + radius * std::cos(t), center.y + radius * std::sin(t)};
    } else {
      pts[i] = {ax * (std::cos(t) + bx * std::cos(2.0 * t)), ay * std::sin(t)};
    }
  }
  return pts;
}

// --- mesh ------------------------------------------------------------------

const std::vector<int>& Mesh::loop(BoundaryLabel label) const {
  auto it = loops.find(label);
  if (it == loops.end()) throw std::invalid_argument(std::string("mesh has no loop ") + label_name(label));
  return it->second;
}

std::vector<BoundaryLabel> Mesh::domain_boundary_labels() const {
  std::map<EdgeKey, int> counts;
  for (const auto& t : triangles) {
    for (int e = 0; e < 3; ++e) counts[make_edge(t[e], t[(e + 1) % 3])]++;
  }
  std::set<BoundaryLabel> out;
  for (const auto& be : boundary_edges) {
    if (counts.at(make_edge(be.a, be.b)) == 1) out.insert(be.label);
  }
  return {out.begin(), out.end()};
}

void Mesh::finalize_topology() {
  node_labels.assign(nodes.size(), BoundaryLabel::Interior);
  for (const auto& [label, ids] : loops) {
    for (int id : ids) node_labels[id] = label;
  }
  omegabar_node.assign(nodes.size(), 0);
  if (omega_element.size() != triangles.size()) omega_element.assign(triangles.size(), 0);
  for (int t = 0; t < num_triangles(); ++t) {
    if (!omega_element[t]) continue;
    for (int v : triangles[t]) omegabar_node[v] = 1;
  }
}

MeshPtr build_annulus(const LabeledCurve& outer, const std::vector<LabeledCurve>& interior,
                      const LabeledCurve& inner) {
  std::vector<LabeledCurve> chain;
  chain.push_back(outer);
  for (const auto& c : interior) chain.push_back(c);
  chain.push_back(inner);

  std::vector<std::vector<Vec2>> sampled;
  for (const auto& lc : chain) sampled.push_back(lc.curve.sample());
  check_nesting(sampled);

  auto mesh = std::make_shared<Mesh>();
  std::vector<std::vector<int>> loop_ids(chain.size());
  for (std::size_t c = 0; c < chain.size(); ++c) {
    loop_ids[c].reserve(sampled[c].size());
    for (const Vec2& p : sampled[c]) {
      loop_ids[c].push_back(mesh->num_nodes());
      mesh->nodes.push_back(p);
    }
    mesh->loops[chain[c].label] = loop_ids[c];
  }

  for (std::size_t c = 0; c + 1 < chain.size(); ++c) {
    Band band = mesh_band(mesh->nodes, loop_ids[c], loop_ids[c + 1], "build_annulus");
    const bool is_omega = chain[c].label == BoundaryLabel::OmegaOuter &&
                          chain[c + 1].label == BoundaryLabel::OmegaInner;
    for (const auto& t : band.tris) {
      mesh->triangles.push_back(t);
      mesh->omega_element.push_back(is_omega ? 1 : 0);
    }
  }

  for (std::size_t c = 0; c < chain.size(); ++c) {
    const auto& ids = loop_ids[c];
    for (std::size_t i = 0; i < ids.size(); ++i) {
      mesh->boundary_edges.push_back({ids[i], ids[(i + 1) % ids.size()], chain[c].label});
    }
  }
  mesh->finalize_topology();
  return mesh;
}

MeshPtr build_disk(const BoundaryCurve& outer, BoundaryLabel label) {
  const std::vector<Vec2> pts = outer.sample();
  if (!polyline_is_simple(pts)) throw CurveIntersection("disk boundary self-intersects");

  auto mesh = std::make_shared<Mesh>();
  std::vector<int> outer_ids;
  for (const Vec2& p : pts) {
    outer_ids.push_back(mesh->num_nodes());
    mesh->nodes.push_back(p);
  }
  mesh->loops[label] = outer_ids;

  StarLoop loop;
  if (!StarLoop::try_build(pts, {0.0, 0.0}, loop)) {
    throw MeshingFailure("build_disk: boundary is not star-shaped about the origin");
  }
  const double h = loop.spacing;
  const int layers = std::max(1, static_cast<int>(std::lround(loop.mean_radius / h)) - 1);

  std::vector<std::vector<int>> rings;
  rings.push_back(outer_ids);
  for (int l = 1; l <= layers; ++l) {
    const double shrink = 1.0 - static_cast<double>(l) / (layers + 1);
    const int count = std::max(6, static_cast<int>(std::lround(pts.size() * shrink)));
    std::vector<int> ring;
    const double offset = (l % 2 == 1) ? 0.5 : 0.0;
    for (int j = 0; j < count; ++j) {
      const double theta = kTwoPi * (j + offset) / count;
      const double r = shrink * loop.radius_at(theta);
      ring.push_back(mesh->num_nodes());
      mesh->nodes.push_back({r * std::cos(theta), r * std::sin(theta)});
    }
    rings.push_back(std::move(ring));
  }

  for (std::size_t k = 0; k + 1 < rings.size(); ++k) {
    zip_rings(rings[k + 1], rings[k], mesh->nodes, {0.0, 0.0}, mesh->triangles);
  }
  // central fan
  const int center = mesh->num_nodes();
  mesh->nodes.push_back({0.0, 0.0});
  const auto& last = rings.back();
  for (std::size_t i = 0; i < last.size(); ++i) {
    mesh->triangles.push_back({center, last[i], last[(i + 1) % last.size()]});
  }

  std::set<EdgeKey> constrained;
  for (std::size_t i = 0; i < outer_ids.size(); ++i) {
    constrained.insert(make_edge(outer_ids[i], outer_ids[(i + 1) % outer_ids.size()]));
  }
  lawson_flip(mesh->triangles, mesh->nodes, constrained);

  mesh->omega_element.assign(mesh->triangles.size(), 0);
  for (std::size_t i = 0; i < outer_ids.size(); ++i) {
    mesh->boundary_edges.push_back({outer_ids[i], outer_ids[(i + 1) % outer_ids.size()], label});
  }
  mesh->finalize_topology();
  for (int t = 0; t < mesh->num_triangles(); ++t) {
    if (!(mesh->signed_area(t) > 0.0)) throw MeshingFailure("build_disk: degenerate triangle");
  }
  return mesh;
}

MeshPtr displace(const MeshPtr& mesh, const DeformationField& d, double step) {
  if (d.mesh.get() != mesh.get()) throw std::invalid_argument("deformation field is tied to a different mesh");
  if (d.values.size() != mesh->nodes.size()) throw std::invalid_argument("deformation field size mismatch");
  for (int i = 0; i < mesh->num_nodes(); ++i) {
    const bool pinned = mesh->node_labels[i] == BoundaryLabel::Sigma || mesh->omegabar_node[i];
    if (pinned && (d.values[i].x != 0.0 || d.values[i].y != 0.0)) {
      throw std::invalid_argument("deformation must vanish on Sigma and on omega-bar");
    }
  }
  auto out = std::make_shared<Mesh>(*mesh);
  for (int i = 0; i < out->num_nodes(); ++i) {
    const double dx = step * d.values[i].x;
    const double dy = step * d.values[i].y;
    if (dx != 0.0) out->nodes[i].x += dx;
    if (dy != 0.0) out->nodes[i].y += dy;
  }
  for (int t = 0; t < out->num_triangles(); ++t) {
    if (!(out->signed_area(t) > 0.0)) {
      throw ElementInversion("displace: triangle " + std::to_string(t) + " inverted");
    }
  }
  return out;
}

MeshQuality quality(const Mesh& mesh) {
  MeshQuality q;
  q.min_quality = 2.0;
  q.min_area = std::numeric_limits<double>::max();
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto& tri = mesh.triangles[t];
    const Vec2 pa = mesh.nodes[tri[0]], pb = mesh.nodes[tri[1]], pc = mesh.nodes[tri[2]];
    const double a = norm(pb - pc), b = norm(pc - pa), c = norm(pa - pb);
    const double area = 0.5 * cross(pb - pa, pc - pa);
    const double per = a + b + c;
    // 2*inradius/circumradius = 16 A^2 / (per * a * b * c)
    const double ratio = (per > 0.0 && a * b * c > 0.0) ? 16.0 * area * area / (per * a * b * c) : 0.0;
    if (ratio < q.min_quality) {
      q.min_quality = ratio;
      q.worst_triangle = t;
    }
    q.min_area = std::min(q.min_area, area);
  }
  if (mesh.num_triangles() == 0) {
    q.min_quality = 0.0;
    q.min_area = 0.0;
  }
  return q;
}

MeshPtr remesh(const MeshPtr& mesh, std::vector<int>* node_map) {
  if (!mesh->has_loop(BoundaryLabel::GammaPhi) || !mesh->has_loop(BoundaryLabel::OmegaInner)) {
    throw std::invalid_argument("remesh requires GammaPhi and OmegaInner loops");
  }
  const std::vector<Vec2> gamma = loop_polyline(*mesh, BoundaryLabel::GammaPhi);
  if (!polyline_is_simple(gamma)) {
    throw SelfIntersectingBoundary("remesh: GammaPhi polyline self-intersects");
  }
  const std::vector<Vec2> ring = loop_polyline(*mesh, BoundaryLabel::OmegaInner);

  std::vector<char> keep_tri(mesh->num_triangles(), 1);
  for (int t = 0; t < mesh->num_triangles(); ++t) {
    if (point_in_polygon(mesh->centroid(t), ring)) keep_tri[t] = 0;
  }
  std::vector<char> keep_node(mesh->num_nodes(), 0);
  for (int t = 0; t < mesh->num_triangles(); ++t) {
    if (!keep_tri[t]) continue;
    for (int v : mesh->triangles[t]) keep_node[v] = 1;
  }
  for (int id : mesh->loop(BoundaryLabel::GammaPhi)) keep_node[id] = 1;
  for (int id : mesh->loop(BoundaryLabel::OmegaInner)) keep_node[id] = 1;

  std::vector<int> map(mesh->num_nodes(), -1);
  auto out = std::make_shared<Mesh>();
  for (int i = 0; i < mesh->num_nodes(); ++i) {
    if (!keep_node[i]) continue;
    map[i] = out->num_nodes();
    out->nodes.push_back(mesh->nodes[i]);
  }
  for (int t = 0; t < mesh->num_triangles(); ++t) {
    if (!keep_tri[t]) continue;
    const auto& tri = mesh->triangles[t];
    out->triangles.push_back({map[tri[0]], map[tri[1]], map[tri[2]]});
    out->omega_element.push_back(mesh->omega_element[t]);
  }
  for (const auto& [label, ids] : mesh->loops) {
    std::vector<int> mapped;
    mapped.reserve(ids.size());
    for (int id : ids) mapped.push_back(map[id]);
    out->loops[label] = std::move(mapped);
  }
  for (const auto& be : mesh->boundary_edges) {
    out->boundary_edges.push_back({map[be.a], map[be.b], be.label});
  }

  Band band = mesh_band(out->nodes, out->loop(BoundaryLabel::OmegaInner),
                        out->loop(BoundaryLabel::GammaPhi), "remesh");
  for (const auto& t : band.tris) {
    out->triangles.push_back(t);
    out->omega_element.push_back(0);
  }
  out->finalize_topology();
  if (node_map) *node_map = std::move(map);
  return out;
}

std::vector<Vec2> resample_polyline(const std::vector<Vec2>& pts, int count) {
  const int n = static_cast<int>(pts.size());
  std::vector<double> s(n + 1, 0.0);
  for (int i = 0; i < n; ++i) s[i + 1] = s[i] + norm(pts[(i + 1) % n] - pts[i]);
  const double total = s[n];
  std::vector<Vec2> out(count);
  int seg = 0;
  for (int j = 0; j < count; ++j) {
    const double target = total * j / count;
    while (seg + 1 < n && s[seg + 1] <= target) ++seg;
    const double span = s[seg + 1] - s[seg];
    const double t = span > 0.0 ? (target - s[seg]) / span : 0.0;
    out[j] = pts[seg] + t * (pts[(seg + 1) % n] - pts[seg]);
  }
  return out;
}

double hausdorff_distance(const std::vector<Vec2>& loop_a, const std::vector<Vec2>& loop_b) {
  auto one_sided = [](const std::vector<Vec2>& from, const std::vector<Vec2>& to) {
    double worst = 0.0;
    for (const Vec2& p : from) {
      double best = std::numeric_limits<double>::max();
      for (std::size_t i = 0; i < to.size(); ++i) {
        best = std::min(best, point_segment_distance(p, to[i], to[(i + 1) % to.size()]));
      }
      worst = std::max(worst, best);
    }
    return worst;
  };
  return std::max(one_sided(loop_a, loop_b), one_sided(loop_b, loop_a));
}

std::vector<Vec2> loop_polyline(const Mesh& mesh, BoundaryLabel label) {
  std::vector<Vec2> pts;
  for (int id : mesh.loop(label)) pts.push_back(mesh.nodes[id]);
  return pts;
}

double loop_perimeter(const Mesh& mesh, BoundaryLabel label) {
  const auto pts = loop_polyline(mesh, label);
  double p = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) p += norm(pts[(i + 1) % pts.size()] - pts[i]);
  return p;
}

bool polyline_is_simple(const std::vector<Vec2>& pts) {
  const int n = static_cast<int>(pts.size());
  if (n < 3) return false;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      // skip segments sharing a vertex
      if (j == i || (j + 1) % n == i || (i + 1) % n == j) continue;
      if (segments_properly_intersect(pts[i], pts[(i + 1) % n], pts[j], pts[(j + 1) % n])) {
        return false;
      }
    }
  }
  return true;
}

bool point_in_polygon(Vec2 p, const std::vector<Vec2>& poly) {
  bool inside = false;
  const int n = static_cast<int>(poly.size());
  for (int i = 0, j = n - 1; i < n; j = i++) {
    const Vec2 a = poly[i], b = poly[j];
    if ((a.y > p.y) != (b.y > p.y)) {
      const double t = (p.y - a.y) / (b.y - a.y);
      if (p.x < a.x + t * (b.x - a.x)) inside = !inside;
    }
  }
  return inside;
}

void save_mesh(const Mesh& mesh, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  std::fprintf(f, "nodes %d triangles %d edges %zu\n", mesh.num_nodes(), mesh.num_triangles(),
               mesh.boundary_edges.size());
  for (int i = 0; i < mesh.num_nodes(); ++i) {
    std::fprintf(f, "%.17g %.17g %s\n", mesh.nodes[i].x, mesh.nodes[i].y,
                 label_name(mesh.node_labels[i]));
  }
  for (const auto& t : mesh.triangles) std::fprintf(f, "%d %d %d\n", t[0], t[1], t[2]);
  for (const auto& e : mesh.boundary_edges) {
    std::fprintf(f, "%d %d %s\n", e.a, e.b, label_name(e.label));
  }
  std::fclose(f);
}

MeshPtr load_mesh(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string word;
  int n_nodes = 0, n_tris = 0, n_edges = 0;
  in >> word >> n_nodes >> word >> n_tris >> word >> n_edges;
  if (!in) throw std::runtime_error("bad mesh header in " + path);
  auto mesh = std::make_shared<Mesh>();
  mesh->nodes.resize(n_nodes);
  mesh->node_labels.resize(n_nodes);
  for (int i = 0; i < n_nodes; ++i) {
    std::string label;
    in >> mesh->nodes[i].x >> mesh->nodes[i].y >> label;
    mesh->node_labels[i] = label_from_name(label);
  }
  mesh->triangles.resize(n_tris);
  for (int t = 0; t < n_tris; ++t) {
    in >> mesh->triangles[t][0] >> mesh->triangles[t][1] >> mesh->triangles[t][2];
  }
  mesh->boundary_edges.resize(n_edges);
  for (int e = 0; e < n_edges; ++e) {
    std::string label;
    in >> mesh->boundary_edges[e].a >> mesh->boundary_edges[e].b >> label;
    mesh->boundary_edges[e].label = label_from_name(label);
  }
  if (!in) throw std::runtime_error("truncated mesh file " + path);

  // loops come back from the edge list, which is stored in loop order
  for (const auto& e : mesh->boundary_edges) mesh->loops[e.label].push_back(e.a);

  // omega elements: between the two omega rings (their nodes never move)
  mesh->omega_element.assign(mesh->triangles.size(), 0);
  if (mesh->has_loop(BoundaryLabel::OmegaInner) && mesh->has_loop(BoundaryLabel::OmegaOuter)) {
    const auto outer = loop_polyline(*mesh, BoundaryLabel::OmegaOuter);
    const auto inner = loop_polyline(*mesh, BoundaryLabel::OmegaInner);
    for (int t = 0; t < mesh->num_triangles(); ++t) {
      const Vec2 c = mesh->centroid(t);
      if (point_in_polygon(c, outer) && !point_in_polygon(c, inner)) mesh->omega_element[t] = 1;
    }
  }
  mesh->finalize_topology();
  return mesh;
}

}  // namespace shapeopt
