#include "stentgcn/geometry.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>

#include <Eigen/Geometry>
#include <Eigen/QR>
#include <Eigen/SVD>

#include "stentgcn/error.hpp"

namespace stentgcn {

LocalFrame local_frame(const MarkerSet3D& global) {
  if (!global.allFinite()) throw Error(ErrorKind::InvalidArgument, "marker coordinates must be finite");
  const Eigen::Vector3d centroid = global.rowwise().mean();
  const MarkerSet3D centered = global.colwise() - centroid;
  const Eigen::Vector3d c1 = centered.col(0);
  const Eigen::Vector3d c2 = centered.col(1);
  if (c1.norm() < 1e-12 || c2.norm() < 1e-12) {
    throw Error(ErrorKind::CoincidentMarkers, "marker 1 or 2 coincides with the centroid");
  }
  const Eigen::Vector3d v1 = c1;
  const Eigen::Vector3d v2 = c1.cross(c2);
  if (v2.norm() <= 1e-9) {
    throw Error(ErrorKind::DegenerateFrame, "markers 1 and 2 are collinear with the centroid");
  }
  const Eigen::Vector3d v3 = v1.cross(v2);

  LocalFrame frame;
  frame.transform.R.col(0) = v1.normalized();
  frame.transform.R.col(1) = v2.normalized();
  frame.transform.R.col(2) = v3.normalized();
  frame.transform.t = centroid;
  frame.local = frame.transform.R.transpose() * centered;
  return frame;
}

Alignment procrustes_align(const Eigen::Matrix3Xd& source, const Eigen::Matrix3Xd& reference) {
  if (source.cols() != reference.cols() || source.cols() == 0) {
    throw Error(ErrorKind::ShapeMismatch, "point sets must be non-empty with equal counts");
  }
  const Eigen::Vector3d src_centroid = source.rowwise().mean();
  const Eigen::Vector3d ref_centroid = reference.rowwise().mean();
  const Eigen::Matrix3Xd src = source.colwise() - src_centroid;
  const Eigen::Matrix3Xd ref = reference.colwise() - ref_centroid;
  const Eigen::Matrix3d cross_cov = src * ref.transpose();

  Eigen::JacobiSVD<Eigen::Matrix3d> svd(cross_cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Vector3d sigma = svd.singularValues();
  if (!(sigma(0) > 0.0) || sigma(1) <= 1e-10 * sigma(0)) {
    throw Error(ErrorKind::DegenerateConfiguration, "cross-covariance has rank < 2; rotation is ambiguous");
  }
  Eigen::Matrix3d V = svd.matrixV();
  const Eigen::Matrix3d& U = svd.matrixU();
  if ((V * U.transpose()).determinant() < 0.0) V.col(2) *= -1.0;

  Alignment result;
  result.transform.R = V * U.transpose();
  result.transform.t = ref_centroid - result.transform.R * src_centroid;
  result.aligned = result.transform.apply(source);
  return result;
}

MarkerAlignment procrustes_align(const MarkerSet3D& source, const MarkerSet3D& reference) {
  Alignment a = procrustes_align(Eigen::Matrix3Xd(source), Eigen::Matrix3Xd(reference));
  return {a.transform, MarkerSet3D(a.aligned)};
}

Eigen::Matrix2Xd project(const CameraProjection& camera, const Eigen::Matrix3Xd& points) {
  const Eigen::Matrix3Xd h = camera.P.leftCols<3>() * points + camera.P.col(3).replicate(1, points.cols());
  Eigen::Matrix2Xd out(2, points.cols());
  for (Eigen::Index i = 0; i < points.cols(); ++i) {
    if (!(std::abs(h(2, i)) >= 1e-12)) {
      throw Error(ErrorKind::PointOnPrincipalPlane, "point " + std::to_string(i) + " lies on the principal plane");
    }
    out(0, i) = h(0, i) / h(2, i);
    out(1, i) = h(1, i) / h(2, i);
  }
  return out;
}

MarkerSet2D project(const CameraProjection& camera, const MarkerSet3D& points) {
  return MarkerSet2D(project(camera, Eigen::Matrix3Xd(points)));
}

double planarity(const Eigen::Matrix3Xd& points) {
  const Eigen::Matrix3Xd centered = points.colwise() - points.rowwise().mean();
  Eigen::JacobiSVD<Eigen::Matrix3Xd> svd(centered);
  return svd.singularValues()(2);
}

// ---------------------------------------------------------------------------
// Perspective-n-point

namespace {

using Residual = Eigen::Matrix<double, 2 * kMarkerCount, 1>;
using Jacobian = Eigen::Matrix<double, 2 * kMarkerCount, 6>;

struct PoseEval {
  Residual residual;
  Jacobian jacobian;
  bool in_front = true;
};

/// Residual and Jacobian w.r.t. a left rotation increment and a translation increment.
PoseEval evaluate_pose(const RigidTransform& pose, const MarkerSet3D& reference, const MarkerSet2D& observed,
                       const CameraProjection& camera, double front_sign) {
  const Eigen::Matrix3d M = camera.P.leftCols<3>();
  const Eigen::Vector3d m = camera.P.col(3);
  PoseEval eval;
  for (int i = 0; i < kMarkerCount; ++i) {
    const Eigen::Vector3d rotated = pose.R * reference.col(i);
    const Eigen::Vector3d q = rotated + pose.t;
    const Eigen::Vector3d h = M * q + m;
    if (h(2) * front_sign <= 0.0) eval.in_front = false;
    const double inv = 1.0 / h(2);
    eval.residual(2 * i) = h(0) * inv - observed(0, i);
    eval.residual(2 * i + 1) = h(1) * inv - observed(1, i);

    // d(u, v)/dq
    Eigen::Matrix<double, 2, 3> dproj;
    dproj.row(0) = (M.row(0) - h(0) * inv * M.row(2)) * inv;
    dproj.row(1) = (M.row(1) - h(1) * inv * M.row(2)) * inv;
    Eigen::Matrix3d dq_domega;  // q(omega) = exp(omega) R y + t  =>  dq = -[R y]x domega
    dq_domega << 0.0, rotated(2), -rotated(1), -rotated(2), 0.0, rotated(0), rotated(1), -rotated(0), 0.0;
    eval.jacobian.block<2, 3>(2 * i, 0) = dproj * dq_domega;
    eval.jacobian.block<2, 3>(2 * i, 3) = dproj;
  }
  return eval;
}

/// Least-squares translation for a fixed rotation (linear in t).
Eigen::Vector3d translation_for_rotation(const Eigen::Matrix3d& R, const MarkerSet3D& reference,
                                         const MarkerSet2D& observed, const CameraProjection& camera) {
  const Eigen::Matrix3d M = camera.P.leftCols<3>();
  const Eigen::Vector3d m = camera.P.col(3);
  Eigen::Matrix<double, 2 * kMarkerCount, 3> A;
  Residual b;
  for (int i = 0; i < kMarkerCount; ++i) {
    const Eigen::Vector3d q = R * reference.col(i);
    for (int row = 0; row < 2; ++row) {
      const Eigen::RowVector3d coeff = M.row(row) - observed(row, i) * M.row(2);
      const double offset = m(row) - observed(row, i) * m(2);
      A.row(2 * i + row) = coeff;
      b(2 * i + row) = -(coeff.dot(q) + offset);
    }
  }
  return A.colPivHouseholderQr().solve(b);
}

struct Refined {
  RigidTransform pose;
  double cost = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool in_front = false;
};

Refined refine_pose(RigidTransform pose, const MarkerSet3D& reference, const MarkerSet2D& observed,
                    const CameraProjection& camera, double front_sign, const PnpOptions& options) {
  PoseEval eval = evaluate_pose(pose, reference, observed, camera, front_sign);
  double cost = eval.residual.squaredNorm();
  double lambda = 1e-3;
  int it = 0;
  for (; it < options.max_iterations; ++it) {
    const Eigen::Matrix<double, 6, 6> JtJ = eval.jacobian.transpose() * eval.jacobian;
    const Eigen::Matrix<double, 6, 1> Jtr = eval.jacobian.transpose() * eval.residual;
    bool accepted = false;
    double new_cost = cost;
    for (int attempt = 0; attempt < 30 && !accepted; ++attempt) {
      Eigen::Matrix<double, 6, 6> A = JtJ;
      A.diagonal() += lambda * (JtJ.diagonal().array() + 1e-12).matrix();
      const Eigen::Matrix<double, 6, 1> step = A.ldlt().solve(-Jtr);
      if (!step.allFinite()) break;
      RigidTransform trial;
      const double angle = step.head<3>().norm();
      const Eigen::Matrix3d dR =
          angle > 0.0 ? Eigen::AngleAxisd(angle, step.head<3>() / angle).toRotationMatrix() : Eigen::Matrix3d::Identity();
      trial.R = dR * pose.R;
      trial.t = pose.t + step.tail<3>();
      PoseEval trial_eval = evaluate_pose(trial, reference, observed, camera, front_sign);
      new_cost = trial_eval.residual.squaredNorm();
      if (std::isfinite(new_cost) && new_cost <= cost) {
        pose = trial;
        eval = std::move(trial_eval);
        accepted = true;
        lambda = std::max(lambda * 0.1, 1e-12);
      } else {
        lambda *= 10.0;
      }
    }
    if (!accepted) break;
    const double change = cost - new_cost;
    cost = new_cost;
    if (cost == 0.0 || change <= options.tolerance * cost) {
      ++it;
      break;
    }
  }
  // Re-orthonormalize accumulated rotation products.
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(pose.R, Eigen::ComputeFullU | Eigen::ComputeFullV);
  pose.R = svd.matrixU() * svd.matrixV().transpose();
  eval = evaluate_pose(pose, reference, observed, camera, front_sign);
  return {pose, eval.residual.squaredNorm(), it, eval.in_front};
}

/// The 24 proper rotations of the cube, used as multi-start seeds.
const std::array<Eigen::Matrix3d, 24>& cube_rotations() {
  static const std::array<Eigen::Matrix3d, 24> rotations = [] {
    std::array<Eigen::Matrix3d, 24> out;
    std::size_t n = 0;
    const std::array<std::array<int, 3>, 6> perms = {{{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};
    for (const auto& p : perms) {
      for (int signs = 0; signs < 8; ++signs) {
        Eigen::Matrix3d R = Eigen::Matrix3d::Zero();
        for (int r = 0; r < 3; ++r) R(r, p[r]) = (signs >> r) & 1 ? -1.0 : 1.0;
        if (R.determinant() > 0.0) out[n++] = R;
      }
    }
    return out;
  }();
  return rotations;
}

}  // namespace

PnpResult solve_pnp(const MarkerSet3D& reference, const MarkerSet2D& observed, const CameraProjection& camera,
                    const PnpOptions& options) {
  if (!reference.allFinite() || !observed.allFinite() || !camera.P.allFinite()) {
    throw Error(ErrorKind::InvalidArgument, "PnP inputs must be finite");
  }
  if (planarity(Eigen::Matrix3Xd(reference)) <= 1e-6) {
    throw Error(ErrorKind::DegenerateReference, "reference markers are coplanar or collinear");
  }
  const double det = camera.P.leftCols<3>().determinant();
  if (std::abs(det) < 1e-15) throw Error(ErrorKind::InvalidArgument, "projection matrix is rank deficient");
  // Points in front of the camera have p3.Yh with the sign of det(M).
  const double front_sign = det > 0.0 ? 1.0 : -1.0;

  Refined best;
  bool best_in_front = false;
  for (const Eigen::Matrix3d& R0 : cube_rotations()) {
    RigidTransform start{R0, translation_for_rotation(R0, reference, observed, camera)};
    if (!start.t.allFinite()) continue;
    Refined candidate;
    try {
      candidate = refine_pose(start, reference, observed, camera, front_sign, options);
    } catch (const Error&) {
      continue;
    }
    if (!std::isfinite(candidate.cost)) continue;
    const bool better = (candidate.in_front && !best_in_front) ||
                        (candidate.in_front == best_in_front && candidate.cost < best.cost);
    if (better) {
      best = candidate;
      best_in_front = candidate.in_front;
    }
  }
  if (!std::isfinite(best.cost)) {
    throw Error(ErrorKind::NoConvergence, "no pose candidate converged (residual " + std::to_string(best.cost) +
                                              ", iterations " + std::to_string(best.iterations) + ")");
  }
  return {best.pose, std::sqrt(best.cost / (2.0 * kMarkerCount)), best.iterations};
}

MarkerInstantiation instantiate_markers(const MarkerSet3D& predicted_local, const MarkerSet3D& fully_deployed_local,
                                        const MarkerSet2D& observed, const CameraProjection& camera,
                                        const PnpOptions& options) {
  const MarkerAlignment aligned = procrustes_align(predicted_local, fully_deployed_local);
  const PnpResult pnp = solve_pnp(aligned.aligned, observed, camera, options);
  return {pnp.pose.apply(aligned.aligned), pnp.pose, aligned.aligned, pnp.rms_residual};
}

// ---------------------------------------------------------------------------
// Projection files

CameraProjection parse_projection(std::string_view text) {
  std::istringstream lines{std::string(text)};
  std::string line;
  std::vector<double> values;
  int line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    std::string token;
    while (fields >> token) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(token, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != token.size() || !std::isfinite(v)) {
        throw Error(ErrorKind::ParseError, "projection line " + std::to_string(line_no) + ": expected a number, found '" +
                                               token + "'");
      }
      values.push_back(v);
    }
  }
  if (values.size() != 12) {
    throw Error(ErrorKind::ParseError, "projection matrix needs 12 numbers, found " + std::to_string(values.size()));
  }
  CameraProjection camera;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 4; ++c) camera.P(r, c) = values[static_cast<std::size_t>(4 * r + c)];
  }
  return camera;
}

CameraProjection load_projection(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open projection file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_projection(buffer.str());
}

void save_projection(const std::filesystem::path& path, const CameraProjection& camera) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write projection file " + path.string());
  out << "# 3x4 projection matrix, row-major\n";
  out.precision(17);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 4; ++c) out << camera.P(r, c) << (c == 3 ? '\n' : ' ');
  }
}

CameraProjection fluoroscope_projection(double source_to_detector, double source_to_object) {
  CameraProjection camera;
  camera.P << source_to_detector, 0.0, 0.0, 0.0,  //
      0.0, source_to_detector, 0.0, 0.0,          //
      0.0, 0.0, 1.0, source_to_object;
  return camera;
}

}  // namespace stentgcn
