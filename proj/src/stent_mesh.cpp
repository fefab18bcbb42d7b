#include "stentgcn/stent_mesh.hpp"

#include <cmath>
#include <fstream>
#include <future>
#include <thread>
#include <algorithm>
#include <limits>
#include <numbers>
#include <string>

#include <json.hpp>

#include "stentgcn/error.hpp"
#include "stentgcn/mesh_distance.hpp"

namespace stentgcn {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;
constexpr double kParamEps = 1e-9;

/// Fixed so that summation order (and the result, bitwise) does not depend on the machine.
constexpr std::size_t kDistanceChunks = 16;

double wrap_degrees(double deg) {
  double w = std::fmod(deg, 360.0);
  if (w < 0.0) w += 360.0;
  return w;
}

}  // namespace

bool Fenestration::contains(double theta_deg, double h) const {
  if (empty()) return false;
  return wrapped_angle_difference(theta_deg, theta_center_deg) <= theta_halfwidth_deg + kParamEps &&
         std::abs(h - h_center) <= h_halfheight + kParamEps;
}

void StentSegmentSpec::validate() const {
  if (!(r_fc > 0.0)) throw Error(ErrorKind::InvalidArgument, "r_fc must be positive");
  if (!(r_fc <= r_fd)) throw Error(ErrorKind::InvalidArgument, "r_fc must not exceed r_fd");
  if (!(w_g >= 0.0)) throw Error(ErrorKind::InvalidArgument, "w_g must be nonnegative");
  if (!(height > 0.0)) throw Error(ErrorKind::InvalidArgument, "height must be positive");
  if (!(h_resolution > 0.0)) throw Error(ErrorKind::InvalidArgument, "h_resolution must be positive");
  if (!(theta_resolution_deg > 0.0)) throw Error(ErrorKind::InvalidArgument, "theta_resolution_deg must be positive");
}

PartialRadii partial_diameters(double r_fd, double r_fc, double w_g) {
  if (!(r_fc > 0.0) || !(r_fc <= r_fd) || !(w_g >= 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "need 0 < r_fc <= r_fd and w_g >= 0");
  }
  return {r_fd, std::min(r_fc + 2.0 * w_g, r_fd)};
}

double surface_radius(const StentSegmentSpec& spec, DeploymentState state, double h) {
  if (state == DeploymentState::FullyDeployed) return spec.r_fd;
  const PartialRadii r = partial_diameters(spec.r_fd, spec.r_fc, spec.w_g);
  return r.deployed + (r.compressed - r.deployed) * (h / spec.height);
}

Eigen::Vector3d surface_point(const StentSegmentSpec& spec, DeploymentState state, double theta_deg, double h) {
  const double r = surface_radius(spec, state, h);
  const double a = theta_deg * kDegToRad;
  return {r * std::cos(a), r * std::sin(a), h};
}

MarkerSet3D model_markers(const StentSegmentSpec& spec, DeploymentState state, const MarkerPlacements& placements) {
  MarkerSet3D m;
  for (int i = 0; i < kMarkerCount; ++i) {
    m.col(i) = surface_point(spec, state, placements[static_cast<std::size_t>(i)].theta_deg,
                             placements[static_cast<std::size_t>(i)].h);
  }
  return m;
}

SegmentMesh generate_segment_mesh(const StentSegmentSpec& spec, DeploymentState state, const MeshLimits& limits) {
  spec.validate();
  const auto intervals = static_cast<long long>(std::ceil(spec.height / spec.h_resolution - kParamEps));
  const auto steps = static_cast<long long>(std::llround(360.0 / spec.theta_resolution_deg));
  if (steps < 3) throw Error(ErrorKind::InvalidArgument, "theta resolution too coarse");
  const long long rings = intervals + 1;
  const double vertex_count = static_cast<double>(rings) * static_cast<double>(steps);
  if (vertex_count > static_cast<double>(limits.max_vertices)) {
    throw Error(ErrorKind::ResolutionOverflow,
                std::to_string(static_cast<long long>(vertex_count)) + " vertices exceed the cap of " +
                    std::to_string(limits.max_vertices));
  }

  SegmentMesh mesh;
  const auto n = static_cast<Eigen::Index>(vertex_count);
  mesh.vertices.resize(3, n);
  mesh.parameters.resize(2, n);
  mesh.grid_index.resize(static_cast<std::size_t>(n));
  const double dtheta = 360.0 / static_cast<double>(steps);
  Eigen::Index v = 0;
  for (long long ring = 0; ring < rings; ++ring) {
    const double h = ring == intervals ? spec.height : static_cast<double>(ring) * spec.h_resolution;
    const double r = surface_radius(spec, state, h);
    for (long long step = 0; step < steps; ++step) {
      const double theta = static_cast<double>(step) * dtheta;
      const double a = theta * kDegToRad;
      mesh.vertices.col(v) << r * std::cos(a), r * std::sin(a), h;
      mesh.parameters.col(v) << theta, h;
      mesh.grid_index[static_cast<std::size_t>(v)] = {static_cast<int>(ring), static_cast<int>(step)};
      ++v;
    }
  }

  mesh.faces.reserve(static_cast<std::size_t>(intervals * steps * 2));
  auto id = [steps](long long ring, long long step) { return static_cast<int>(ring * steps + (step % steps)); };
  for (long long ring = 0; ring < intervals; ++ring) {
    for (long long step = 0; step < steps; ++step) {
      const int a = id(ring, step);
      const int b = id(ring, step + 1);
      const int c = id(ring + 1, step);
      const int d = id(ring + 1, step + 1);
      mesh.faces.push_back({a, b, d});
      mesh.faces.push_back({a, d, c});
    }
  }

  for (const Fenestration& f : spec.fenestrations) mesh = cut_fenestration(mesh, f);
  return mesh;
}

SegmentMesh cut_fenestration(const SegmentMesh& mesh, const Fenestration& region) {
  if (region.empty()) return mesh;
  const auto n = static_cast<std::size_t>(mesh.vertices.cols());
  std::vector<int> remap(n, -1);
  int kept = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto col = static_cast<Eigen::Index>(i);
    if (!region.contains(mesh.parameters(0, col), mesh.parameters(1, col))) remap[i] = kept++;
  }
  if (static_cast<std::size_t>(kept) == n) return mesh;

  SegmentMesh out;
  out.vertices.resize(3, kept);
  out.parameters.resize(2, kept);
  out.grid_index.reserve(static_cast<std::size_t>(kept));
  for (std::size_t i = 0; i < n; ++i) {
    if (remap[i] < 0) continue;
    out.vertices.col(remap[i]) = mesh.vertices.col(static_cast<Eigen::Index>(i));
    out.parameters.col(remap[i]) = mesh.parameters.col(static_cast<Eigen::Index>(i));
    out.grid_index.push_back(mesh.grid_index[i]);
  }
  out.faces.reserve(mesh.faces.size());
  for (const auto& f : mesh.faces) {
    const int a = remap[static_cast<std::size_t>(f[0])];
    const int b = remap[static_cast<std::size_t>(f[1])];
    const int c = remap[static_cast<std::size_t>(f[2])];
    if (a >= 0 && b >= 0 && c >= 0) out.faces.push_back({a, b, c});
  }
  return out;
}

SegmentMesh transform_mesh(const SegmentMesh& mesh, const RigidTransform& transform) {
  SegmentMesh out = mesh;
  out.vertices = (transform.R * mesh.vertices).colwise() + transform.t;
  return out;
}

Eigen::Vector3d central_point_correction(const MarkerSet3D& markers_model, const RigidTransform& pose,
                                         const MarkerSet3D& markers_instantiated) {
  const Eigen::Vector3d posed_centroid = pose.apply(markers_model).rowwise().mean();
  return Eigen::Vector3d(markers_instantiated.rowwise().mean()) - posed_centroid;
}

SegmentMesh pose_mesh(const SegmentMesh& mesh, const MarkerSet3D& markers_model, const RigidTransform& pose,
                      const MarkerSet3D& markers_instantiated) {
  const Eigen::Vector3d correction = central_point_correction(markers_model, pose, markers_instantiated);
  return transform_mesh(mesh, {pose.R, pose.t + correction});
}

double mesh_distance_error(const SegmentMesh& mesh_pred, const SegmentMesh& mesh_gt) {
  if (mesh_pred.vertices.cols() == 0) throw Error(ErrorKind::EmptyMesh, "predicted mesh has no vertices");
  const MeshDistanceIndex index(mesh_gt);
  const auto n = static_cast<std::size_t>(mesh_pred.vertices.cols());
  const std::size_t chunk = (n + kDistanceChunks - 1) / kDistanceChunks;

  auto partial = [&](std::size_t begin, std::size_t end) {
    double sum = 0.0;
    for (std::size_t i = begin; i < end; ++i) sum += index.distance(mesh_pred.vertices.col(static_cast<Eigen::Index>(i)));
    return sum;
  };
  std::vector<std::future<double>> parts;
  const unsigned workers = std::max(1u, std::thread::hardware_concurrency());
  std::vector<double> sums(kDistanceChunks, 0.0);
  if (workers == 1) {
    for (std::size_t c = 0; c < kDistanceChunks; ++c) sums[c] = partial(std::min(n, c * chunk), std::min(n, (c + 1) * chunk));
  } else {
    for (std::size_t c = 0; c < kDistanceChunks; ++c) {
      parts.push_back(std::async(std::launch::async, partial, std::min(n, c * chunk), std::min(n, (c + 1) * chunk)));
    }
    for (std::size_t c = 0; c < kDistanceChunks; ++c) sums[c] = parts[c].get();
  }
  double total = 0.0;
  for (double s : sums) total += s;
  return total / static_cast<double>(n);
}

std::size_t nearest_vertex(const SegmentMesh& mesh, const Eigen::Vector3d& point) {
  if (mesh.vertices.cols() == 0) throw Error(ErrorKind::EmptyMesh, "mesh has no vertices");
  Eigen::Index best = 0;
  (mesh.vertices.colwise() - point).colwise().squaredNorm().minCoeff(&best);
  return static_cast<std::size_t>(best);
}

double wrapped_angle_difference(double a_deg, double b_deg) {
  const double d = std::abs(wrap_degrees(a_deg) - wrap_degrees(b_deg));
  return std::min(d, 360.0 - d);
}

double angular_error(const MarkerSet3D& markers_pred, const MarkerSet3D& markers_gt, const SegmentMesh& mesh_gt) {
  if (mesh_gt.vertices.cols() == 0) throw Error(ErrorKind::EmptyMesh, "ground-truth mesh has no vertices");
  double sum = 0.0;
  for (int i = 0; i < kMarkerCount; ++i) {
    const auto vp = static_cast<Eigen::Index>(nearest_vertex(mesh_gt, markers_pred.col(i)));
    const auto vg = static_cast<Eigen::Index>(nearest_vertex(mesh_gt, markers_gt.col(i)));
    sum += wrapped_angle_difference(mesh_gt.parameters(0, vp), mesh_gt.parameters(0, vg));
  }
  return sum / kMarkerCount;
}

void export_mesh(const SegmentMesh& mesh, const std::filesystem::path& obj_path,
                 const std::filesystem::path& sidecar_path) {
  std::ofstream obj(obj_path);
  if (!obj) throw Error(ErrorKind::Io, "cannot write mesh " + obj_path.string());
  obj.precision(17);
  for (Eigen::Index i = 0; i < mesh.vertices.cols(); ++i) {
    obj << "v " << mesh.vertices(0, i) << ' ' << mesh.vertices(1, i) << ' ' << mesh.vertices(2, i) << '\n';
  }
  for (const auto& f : mesh.faces) obj << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
  if (!obj) throw Error(ErrorKind::Io, "failed writing mesh " + obj_path.string());

  nlohmann::json side;
  side["format_version"] = 1;
  std::vector<double> theta(static_cast<std::size_t>(mesh.parameters.cols()));
  std::vector<double> h(theta.size());
  for (Eigen::Index i = 0; i < mesh.parameters.cols(); ++i) {
    theta[static_cast<std::size_t>(i)] = mesh.parameters(0, i);
    h[static_cast<std::size_t>(i)] = mesh.parameters(1, i);
  }
  side["theta_deg"] = theta;
  side["h_mm"] = h;
  std::ofstream out(sidecar_path);
  if (!out) throw Error(ErrorKind::Io, "cannot write mesh sidecar " + sidecar_path.string());
  out << side.dump() << '\n';
}

}  // namespace stentgcn
