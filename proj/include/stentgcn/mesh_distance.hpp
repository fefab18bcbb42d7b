#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "stentgcn/stent_mesh.hpp"

namespace stentgcn {

/// Closest point on triangle (a, b, c) to p, by Voronoi-region classification.
Eigen::Vector3d closest_point_on_triangle(const Eigen::Vector3d& p, const Eigen::Vector3d& a,
                                          const Eigen::Vector3d& b, const Eigen::Vector3d& c);

/// Bounding-volume hierarchy over a mesh's triangles answering exact
/// unsigned point-to-surface distance queries. Immutable after construction;
/// queries may run concurrently.
class MeshDistanceIndex {
 public:
  /// Throws EmptyMesh when the mesh has no faces.
  explicit MeshDistanceIndex(const SegmentMesh& mesh);

  double distance(const Eigen::Vector3d& point) const;

  std::size_t triangle_count() const { return triangles_.size(); }

 private:
  struct Triangle {
    Eigen::Vector3d a, b, c;
  };
  struct Node {
    Eigen::Vector3d lo, hi;
    std::int32_t left = -1;   // child index, or first triangle for leaves
    std::int32_t right = -1;  // child index, or -1 for leaves
    std::int32_t count = 0;   // triangles in a leaf
  };

  std::int32_t build(std::int32_t begin, std::int32_t end, std::vector<Eigen::Vector3d>& centroids);
  static double box_distance_sq(const Node& node, const Eigen::Vector3d& p);

  std::vector<Triangle> triangles_;
  std::vector<Node> nodes_;
};

/// Unsigned distance from a point to the mesh surface.
double point_to_mesh_distance(const Eigen::Vector3d& point, const SegmentMesh& mesh);

}  // namespace stentgcn
