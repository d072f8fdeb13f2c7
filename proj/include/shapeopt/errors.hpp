#pragma once

#include <stdexcept>
#include <string>

namespace shapeopt {

struct CurveIntersection : std::runtime_error {
  explicit CurveIntersection(const std::string& what) : std::runtime_error(what) {}
};

struct MeshingFailure : std::runtime_error {
  explicit MeshingFailure(const std::string& what) : std::runtime_error(what) {}
};

struct ElementInversion : std::runtime_error {
  explicit ElementInversion(const std::string& what) : std::runtime_error(what) {}
};

struct SelfIntersectingBoundary : std::runtime_error {
  explicit SelfIntersectingBoundary(const std::string& what) : std::runtime_error(what) {}
};

struct SolveFailure : std::runtime_error {
  explicit SolveFailure(const std::string& what) : std::runtime_error(what) {}
};

struct PointOutsideMesh : std::runtime_error {
  explicit PointOutsideMesh(const std::string& what) : std::runtime_error(what) {}
};

struct NonFiniteObjective : std::runtime_error {
  explicit NonFiniteObjective(const std::string& what) : std::runtime_error(what) {}
};

struct IndexOutOfRange : std::out_of_range {
  explicit IndexOutOfRange(const std::string& what) : std::out_of_range(what) {}
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace shapeopt
