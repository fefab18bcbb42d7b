#pragma once

#include <Eigen/Core>

namespace stentgcn {

constexpr int kMarkerCount = 5;

/// Marker centers in mm, one column per marker, ordered by marker number 1-5.
using MarkerSet3D = Eigen::Matrix<double, 3, kMarkerCount>;
/// Image-plane marker coordinates, in the projection matrix's output units.
using MarkerSet2D = Eigen::Matrix<double, 2, kMarkerCount>;

/// Maps a point p to R*p + t. R is kept a proper rotation by every producer.
struct RigidTransform {
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  Eigen::Vector3d t = Eigen::Vector3d::Zero();

  static RigidTransform identity() { return {}; }

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return R * p + t; }

  template <typename Derived>
  Eigen::Matrix<double, 3, Derived::ColsAtCompileTime> apply(
      const Eigen::MatrixBase<Derived>& points) const {
    return (R * points).colwise() + t;
  }

  /// (*this) after `first`.
  RigidTransform compose(const RigidTransform& first) const { return {R * first.R, R * first.t + t}; }

  RigidTransform inverse() const { return {R.transpose(), -(R.transpose() * t)}; }
};

/// 3x4 pinhole projection matrix P, x = (p1.Yh / p3.Yh, p2.Yh / p3.Yh).
struct CameraProjection {
  Eigen::Matrix<double, 3, 4> P = Eigen::Matrix<double, 3, 4>::Zero();
};

}  // namespace stentgcn
