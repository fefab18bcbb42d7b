#include "stentgcn/mesh_distance.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "stentgcn/error.hpp"

namespace stentgcn {

namespace {
constexpr std::int32_t kLeafSize = 4;
}

// Ericson, Real-Time Collision Detection, 5.1.5.
Eigen::Vector3d closest_point_on_triangle(const Eigen::Vector3d& p, const Eigen::Vector3d& a,
                                          const Eigen::Vector3d& b, const Eigen::Vector3d& c) {
  const Eigen::Vector3d ab = b - a;
  const Eigen::Vector3d ac = c - a;
  const Eigen::Vector3d ap = p - a;
  const double d1 = ab.dot(ap);
  const double d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return a;

  const Eigen::Vector3d bp = p - b;
  const double d3 = ab.dot(bp);
  const double d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return b;

  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return a + (d1 / (d1 - d3)) * ab;

  const Eigen::Vector3d cp = p - c;
  const double d5 = ab.dot(cp);
  const double d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return c;

  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return a + (d2 / (d2 - d6)) * ac;

  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);
  }

  const double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

MeshDistanceIndex::MeshDistanceIndex(const SegmentMesh& mesh) {
  if (mesh.empty()) throw Error(ErrorKind::EmptyMesh, "distance index needs at least one triangle");
  triangles_.reserve(mesh.faces.size());
  std::vector<Eigen::Vector3d> centroids;
  centroids.reserve(mesh.faces.size());
  for (const auto& f : mesh.faces) {
    Triangle t{mesh.vertices.col(f[0]), mesh.vertices.col(f[1]), mesh.vertices.col(f[2])};
    centroids.push_back((t.a + t.b + t.c) / 3.0);
    triangles_.push_back(t);
  }
  nodes_.reserve(2 * triangles_.size() / kLeafSize + 1);
  build(0, static_cast<std::int32_t>(triangles_.size()), centroids);
}

std::int32_t MeshDistanceIndex::build(std::int32_t begin, std::int32_t end, std::vector<Eigen::Vector3d>& centroids) {
  Node node;
  node.lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
  node.hi = -node.lo;
  for (std::int32_t i = begin; i < end; ++i) {
    const Triangle& t = triangles_[static_cast<std::size_t>(i)];
    node.lo = node.lo.cwiseMin(t.a).cwiseMin(t.b).cwiseMin(t.c);
    node.hi = node.hi.cwiseMax(t.a).cwiseMax(t.b).cwiseMax(t.c);
  }
  const auto index = static_cast<std::int32_t>(nodes_.size());
  nodes_.push_back(node);
  if (end - begin <= kLeafSize) {
    nodes_[static_cast<std::size_t>(index)].left = begin;
    nodes_[static_cast<std::size_t>(index)].count = end - begin;
    return index;
  }

  Eigen::Vector3d clo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
  Eigen::Vector3d chi = -clo;
  for (std::int32_t i = begin; i < end; ++i) {
    clo = clo.cwiseMin(centroids[static_cast<std::size_t>(i)]);
    chi = chi.cwiseMax(centroids[static_cast<std::size_t>(i)]);
  }
  Eigen::Index axis = 0;
  (chi - clo).maxCoeff(&axis);

  // Partition triangles and their centroids together around the median.
  std::vector<std::int32_t> order(static_cast<std::size_t>(end - begin));
  std::iota(order.begin(), order.end(), begin);
  const std::int32_t mid = begin + (end - begin) / 2;
  std::nth_element(order.begin(), order.begin() + (mid - begin), order.end(), [&](std::int32_t x, std::int32_t y) {
    return centroids[static_cast<std::size_t>(x)](axis) < centroids[static_cast<std::size_t>(y)](axis);
  });
  std::vector<Triangle> tris;
  std::vector<Eigen::Vector3d> cents;
  tris.reserve(order.size());
  cents.reserve(order.size());
  for (std::int32_t i : order) {
    tris.push_back(triangles_[static_cast<std::size_t>(i)]);
    cents.push_back(centroids[static_cast<std::size_t>(i)]);
  }
  std::copy(tris.begin(), tris.end(), triangles_.begin() + begin);
  std::copy(cents.begin(), cents.end(), centroids.begin() + begin);

  const std::int32_t left = build(begin, mid, centroids);
  const std::int32_t right = build(mid, end, centroids);
  nodes_[static_cast<std::size_t>(index)].left = left;
  nodes_[static_cast<std::size_t>(index)].right = right;
  return index;
}

double MeshDistanceIndex::box_distance_sq(const Node& node, const Eigen::Vector3d& p) {
  const Eigen::Vector3d d = (node.lo - p).cwiseMax(p - node.hi).cwiseMax(0.0);
  return d.squaredNorm();
}

double MeshDistanceIndex::distance(const Eigen::Vector3d& point) const {
  double best = std::numeric_limits<double>::infinity();
  std::int32_t stack[128];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const Node& node = nodes_[static_cast<std::size_t>(stack[--top])];
    if (box_distance_sq(node, point) >= best) continue;
    if (node.right < 0) {
      for (std::int32_t i = node.left; i < node.left + node.count; ++i) {
        const Triangle& t = triangles_[static_cast<std::size_t>(i)];
        best = std::min(best, (closest_point_on_triangle(point, t.a, t.b, t.c) - point).squaredNorm());
      }
      continue;
    }
    const Node& l = nodes_[static_cast<std::size_t>(node.left)];
    const Node& r = nodes_[static_cast<std::size_t>(node.right)];
    const double dl = box_distance_sq(l, point);
    const double dr = box_distance_sq(r, point);
    // Push the farther child first so the nearer one is visited next.
    if (dl < dr) {
      if (dr < best) stack[top++] = node.right;
      if (dl < best) stack[top++] = node.left;
    } else {
      if (dl < best) stack[top++] = node.left;
      if (dr < best) stack[top++] = node.right;
    }
  }
  return std::sqrt(best);
}

double point_to_mesh_distance(const Eigen::Vector3d& point, const SegmentMesh& mesh) {
  return MeshDistanceIndex(mesh).distance(point);
}

}  // namespace stentgcn
