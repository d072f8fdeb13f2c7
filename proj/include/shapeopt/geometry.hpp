#pragma once

#include <array>
#include <cmath>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace shapeopt {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }

enum class BoundaryLabel { Sigma, GammaPhi, OmegaInner, OmegaOuter, GammaD, Interior };

const char* label_name(BoundaryLabel label);
BoundaryLabel label_from_name(const std::string& name);

/// Closed curve used to seed boundary loops. Sampled counterclockwise;
/// the returned polyline is implicitly closed (last point connects to first).
struct BoundaryCurve {
  enum class Kind { Circle, Arrowhead, Polyline };

  Kind kind = Kind::Circle;
  Vec2 center{};
  double radius = 1.0;
  // arrowhead: x = ax*(cos t + bx*cos 2t), y = ay*sin t
  double ax = 0.4, bx = 0.4, ay = 0.3;
  std::vector<Vec2> points;  // Kind::Polyline only
  int sample_count = 0;

  static BoundaryCurve circle(Vec2 center, double radius, int n);
  static BoundaryCurve arrowhead(int n);
  static BoundaryCurve polyline(std::vector<Vec2> pts);

  std::vector<Vec2> sample() const;
};

struct LabeledCurve {
  BoundaryCurve curve;
  BoundaryLabel label;
};

struct BoundaryEdge {
  int a = -1;
  int b = -1;
  BoundaryLabel label = BoundaryLabel::Interior;
};

struct MeshQuality {
  double min_quality = 1.0;  // min over triangles of 2*inradius/circumradius
  double min_area = 0.0;
  int worst_triangle = -1;
};

class Mesh;
using MeshPtr = std::shared_ptr<const Mesh>;

/// Nodal 2-vector displacement field tied to a mesh. Admissible fields
/// vanish on Sigma and on the closed subdomain omega-bar.
struct DeformationField {
  MeshPtr mesh;
  std::vector<Vec2> values;
};

/// Immutable triangulation of an annular (or disk) domain with labeled
/// loops. The omega ring lines are interior mesh lines; omega elements
/// are frozen at construction and carried through displace/remesh.
class Mesh {
 public:
  std::vector<Vec2> nodes;
  std::vector<std::array<int, 3>> triangles;  // counterclockwise
  std::vector<BoundaryEdge> boundary_edges;   // loop lines, in CCW loop order
  std::vector<BoundaryLabel> node_labels;
  std::map<BoundaryLabel, std::vector<int>> loops;  // CCW node cycles
  std::vector<char> omega_element;   // per-triangle indicator of omega
  std::vector<char> omegabar_node;   // node belongs to closed omega

  int num_nodes() const { return static_cast<int>(nodes.size()); }
  int num_triangles() const { return static_cast<int>(triangles.size()); }

  double signed_area(int t) const {
    const auto& tri = triangles[t];
    Vec2 a = nodes[tri[0]], b = nodes[tri[1]], c = nodes[tri[2]];
    return 0.5 * cross(b - a, c - a);
  }
  Vec2 centroid(int t) const {
    const auto& tri = triangles[t];
    return (1.0 / 3.0) * (nodes[tri[0]] + nodes[tri[1]] + nodes[tri[2]]);
  }
  const std::vector<int>& loop(BoundaryLabel label) const;
  bool has_loop(BoundaryLabel label) const { return loops.count(label) > 0; }

  /// Labels of loops that are true topological boundary (edges with a
  /// single adjacent triangle), as opposed to interior mesh lines.
  std::vector<BoundaryLabel> domain_boundary_labels() const;

  /// Recomputes derived flags; called by the construction routines.
  void finalize_topology();
};

MeshPtr build_annulus(const LabeledCurve& outer, const std::vector<LabeledCurve>& interior,
                      const LabeledCurve& inner);
MeshPtr build_disk(const BoundaryCurve& outer, BoundaryLabel label);

MeshPtr displace(const MeshPtr& mesh, const DeformationField& d, double step);
MeshQuality quality(const Mesh& mesh);

/// Re-triangulates the band between the current GammaPhi polyline and the
/// fixed omega inner circle; everything at or outside that circle is kept
/// verbatim. If node_map is given, it receives old-node -> new-node indices
/// (-1 for dropped nodes).
MeshPtr remesh(const MeshPtr& mesh, std::vector<int>* node_map = nullptr);

/// Uniform-arclength resampling of a closed polyline onto `count` vertices
/// lying on the original segments (the curve as a point set is unchanged).
std::vector<Vec2> resample_polyline(const std::vector<Vec2>& pts, int count);

double hausdorff_distance(const std::vector<Vec2>& loop_a, const std::vector<Vec2>& loop_b);

std::vector<Vec2> loop_polyline(const Mesh& mesh, BoundaryLabel label);
double loop_perimeter(const Mesh& mesh, BoundaryLabel label);

bool polyline_is_simple(const std::vector<Vec2>& pts);
bool point_in_polygon(Vec2 p, const std::vector<Vec2>& poly);

void save_mesh(const Mesh& mesh, const std::string& path);
MeshPtr load_mesh(const std::string& path);

}  // namespace shapeopt
