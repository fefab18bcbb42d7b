#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <vector>

#include <Eigen/Core>

#include "stentgcn/types.hpp"

namespace stentgcn {

/// Rectangular cutout in (theta, h) parameter space. Theta wraps modulo 360.
struct Fenestration {
  double theta_center_deg = 0.0;
  double h_center = 0.0;
  double theta_halfwidth_deg = 0.0;
  double h_halfheight = 0.0;

  bool empty() const { return theta_halfwidth_deg <= 0.0 || h_halfheight <= 0.0; }
  bool contains(double theta_deg, double h) const;
};

struct StentSegmentSpec {
  double r_fd = 0.0;  // fully-deployed radius, mm
  double r_fc = 0.0;  // fully-compressed radius, mm
  double w_g = 0.0;   // graft gap width, mm
  double height = 0.0;
  std::vector<Fenestration> fenestrations;
  double h_resolution = 0.1;        // mm
  double theta_resolution_deg = 1.0;

  void validate() const;
};

enum class DeploymentState { FullyDeployed, PartiallyDeployed };

struct PartialRadii {
  double deployed;    // r_pd
  double compressed;  // r_pc
};

/// r_pd = r_fd, r_pc = min(r_fc + 2 w_g, r_fd).
PartialRadii partial_diameters(double r_fd, double r_fc, double w_g);

/// Surface radius at height h. Partially deployed segments are cones from the
/// deployed end (h = 0) to the compressed end (h = height).
double surface_radius(const StentSegmentSpec& spec, DeploymentState state, double h);
Eigen::Vector3d surface_point(const StentSegmentSpec& spec, DeploymentState state, double theta_deg, double h);

/// Marker placement on the segment surface, as sewn.
struct MarkerPlacement {
  double theta_deg = 0.0;
  double h = 0.0;
};
using MarkerPlacements = std::array<MarkerPlacement, kMarkerCount>;

MarkerSet3D model_markers(const StentSegmentSpec& spec, DeploymentState state, const MarkerPlacements& placements);

struct SegmentMesh {
  Eigen::Matrix3Xd vertices;    // mm
  Eigen::Matrix2Xd parameters;  // per vertex (theta deg, h mm)
  std::vector<std::array<int, 3>> faces;
  /// Per vertex (ring index, angular step index) in the generating grid.
  std::vector<std::array<int, 2>> grid_index;

  std::size_t vertex_count() const { return static_cast<std::size_t>(vertices.cols()); }
  std::size_t face_count() const { return faces.size(); }
  bool empty() const { return faces.empty(); }
};

struct MeshLimits {
  std::size_t max_vertices = 10'000'000;
};

/// Stacked rings of vertices at the configured resolutions, stitched into two
/// triangles per quad, with every fenestration cut out.
SegmentMesh generate_segment_mesh(const StentSegmentSpec& spec, DeploymentState state, const MeshLimits& limits = {});

/// Removes vertices inside the region together with their incident faces and
/// compacts the indices. An empty region leaves the mesh unchanged.
SegmentMesh cut_fenestration(const SegmentMesh& mesh, const Fenestration& region);

SegmentMesh transform_mesh(const SegmentMesh& mesh, const RigidTransform& transform);

/// Applies the pose, then translates so that the centroid of the posed model
/// markers coincides with the centroid of the instantiated markers.
SegmentMesh pose_mesh(const SegmentMesh& mesh, const MarkerSet3D& markers_model, const RigidTransform& pose,
                      const MarkerSet3D& markers_instantiated);

/// Translation applied by pose_mesh after the rigid pose.
Eigen::Vector3d central_point_correction(const MarkerSet3D& markers_model, const RigidTransform& pose,
                                         const MarkerSet3D& markers_instantiated);

/// Mean over the predicted mesh's vertices of their distance to the ground-truth surface.
double mesh_distance_error(const SegmentMesh& mesh_pred, const SegmentMesh& mesh_gt);

/// Index of the vertex nearest to `point`. Throws EmptyMesh.
std::size_t nearest_vertex(const SegmentMesh& mesh, const Eigen::Vector3d& point);

/// min(|a - b|, 360 - |a - b|) for angles in degrees.
double wrapped_angle_difference(double a_deg, double b_deg);

/// Mean wrapped difference of the theta of the ground-truth vertex nearest to
/// each predicted and each ground-truth marker.
double angular_error(const MarkerSet3D& markers_pred, const MarkerSet3D& markers_gt, const SegmentMesh& mesh_gt);

/// "v x y z" / "f i j k" (1-based) text mesh plus a JSON sidecar with per-vertex (theta, h).
void export_mesh(const SegmentMesh& mesh, const std::filesystem::path& obj_path,
                 const std::filesystem::path& sidecar_path);

}  // namespace stentgcn
