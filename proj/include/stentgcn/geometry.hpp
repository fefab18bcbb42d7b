#pragma once

#include <filesystem>
#include <string_view>

#include <Eigen/Core>

#include "stentgcn/types.hpp"

namespace stentgcn {

struct LocalFrame {
  RigidTransform transform;  // local -> global: Y_g = R * Y_l + t
  MarkerSet3D local;
};

/// Standardizes a marker set: origin at the centroid, x along marker 1,
/// y along marker1 x marker2 (both centered), z completing a right-handed frame.
LocalFrame local_frame(const MarkerSet3D& global);

struct Alignment {
  RigidTransform transform;  // maps source onto reference
  Eigen::Matrix3Xd aligned;
};

/// Least-squares rigid alignment of corresponding columns (Kabsch with a
/// reflection guard). Throws DegenerateConfiguration when the centered
/// cross-covariance has rank < 2.
Alignment procrustes_align(const Eigen::Matrix3Xd& source, const Eigen::Matrix3Xd& reference);

struct MarkerAlignment {
  RigidTransform transform;
  MarkerSet3D aligned;
};

MarkerAlignment procrustes_align(const MarkerSet3D& source, const MarkerSet3D& reference);

/// Homogeneous pinhole projection. Throws PointOnPrincipalPlane if a point
/// has |p3 . Yh| < 1e-12.
Eigen::Matrix2Xd project(const CameraProjection& camera, const Eigen::Matrix3Xd& points);
MarkerSet2D project(const CameraProjection& camera, const MarkerSet3D& points);

struct PnpOptions {
  int max_iterations = 200;
  /// Relative change of the squared residual below which refinement stops.
  double tolerance = 1e-12;
};

struct PnpResult {
  RigidTransform pose;
  double rms_residual = 0.0;  // 2D, per coordinate
  int iterations = 0;         // of the accepted refinement run
};

/// Pose (R, t) minimizing the squared reprojection residual of
/// project(P, R * reference + t) against the observations. Correspondence is
/// by column. Uses all five markers.
PnpResult solve_pnp(const MarkerSet3D& reference, const MarkerSet2D& observed, const CameraProjection& camera,
                    const PnpOptions& options = {});

struct MarkerInstantiation {
  MarkerSet3D markers;            // instantiated global markers
  RigidTransform pose;            // recovered segment pose
  MarkerSet3D aligned_reference;  // prediction aligned onto the fully-deployed local markers
  double rms_residual = 0.0;
};

/// Aligns the predicted references onto the fully-deployed local markers,
/// recovers the pose from the 2D observation and instantiates the global markers.
MarkerInstantiation instantiate_markers(const MarkerSet3D& predicted_local, const MarkerSet3D& fully_deployed_local,
                                        const MarkerSet2D& observed, const CameraProjection& camera,
                                        const PnpOptions& options = {});

/// Smallest singular value of the centered point set (mm).
double planarity(const Eigen::Matrix3Xd& points);

/// Twelve numbers, row-major, whitespace separated; '#' starts a comment.
CameraProjection parse_projection(std::string_view text);
CameraProjection load_projection(const std::filesystem::path& path);
void save_projection(const std::filesystem::path& path, const CameraProjection& camera);

/// Source at the origin looking down +z, detector at `source_to_detector`,
/// world origin (isocenter) at `source_to_object` along the axis. Output in detector mm.
CameraProjection fluoroscope_projection(double source_to_detector, double source_to_object);

}  // namespace stentgcn
