#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include <Eigen/Geometry>

#include "stentgcn/error.hpp"
#include "stentgcn/mesh_distance.hpp"
#include "stentgcn/stent_mesh.hpp"

using namespace stentgcn;

namespace {

StentSegmentSpec tube(double r_fd, double r_fc, double w_g, double height) {
  StentSegmentSpec s;
  s.r_fd = r_fd;
  s.r_fc = r_fc;
  s.w_g = w_g;
  s.height = height;
  return s;
}

double brute_force_distance(const Eigen::Vector3d& p, const SegmentMesh& m) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& f : m.faces) {
    const Eigen::Vector3d q = closest_point_on_triangle(p, m.vertices.col(f[0]), m.vertices.col(f[1]), m.vertices.col(f[2]));
    best = std::min(best, (q - p).norm());
  }
  return best;
}

// Independent point-triangle distance: minimum over the interior projection (if inside) and the three edges.
double segment_distance(const Eigen::Vector3d& p, const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
  const Eigen::Vector3d ab = b - a;
  const double t = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
  return (a + t * ab - p).norm();
}

double triangle_distance_oracle(const Eigen::Vector3d& p, const Eigen::Vector3d& a, const Eigen::Vector3d& b,
                                const Eigen::Vector3d& c) {
  double best = std::min({segment_distance(p, a, b), segment_distance(p, b, c), segment_distance(p, c, a)});
  const Eigen::Vector3d n = (b - a).cross(c - a).normalized();
  const Eigen::Vector3d q = p - n * n.dot(p - a);
  const double s1 = (b - a).cross(q - a).dot(n);
  const double s2 = (c - b).cross(q - b).dot(n);
  const double s3 = (a - c).cross(q - c).dot(n);
  if ((s1 >= 0 && s2 >= 0 && s3 >= 0) || (s1 <= 0 && s2 <= 0 && s3 <= 0)) best = std::min(best, (q - p).norm());
  return best;
}

Eigen::Matrix3d rot_z(double deg) {
  return Eigen::AngleAxisd(deg * std::numbers::pi / 180.0, Eigen::Vector3d::UnitZ()).toRotationMatrix();
}

MarkerPlacements spread_placements(double height) {
  MarkerPlacements p;
  const double thetas[] = {0, 75, 150, 220, 290};
  const double hs[] = {0.1, 0.35, 0.6, 0.85, 0.5};
  for (int i = 0; i < 5; ++i) p[static_cast<std::size_t>(i)] = {thetas[i], hs[i] * height};
  return p;
}

}  // namespace

TEST_SUITE("stent_mesh") {
  TEST_CASE("partial diameters") {
    PartialRadii r = partial_diameters(15, 4, 2);
    CHECK(r.deployed == 15.0);
    CHECK(r.compressed == 8.0);
    r = partial_diameters(10, 8, 3);
    CHECK(r.deployed == 10.0);
    CHECK(r.compressed == 10.0);
    r = partial_diameters(12, 5, 0);
    CHECK(r.deployed == 12.0);
    CHECK(r.compressed == 5.0);
    CHECK_THROWS_AS(partial_diameters(5, 6, 1), Error);
    CHECK_THROWS_AS(partial_diameters(5, 0, 1), Error);
    CHECK_THROWS_AS(partial_diameters(5, 2, -1), Error);
  }

  TEST_CASE("mesh counts and topology") {
    const SegmentMesh m = generate_segment_mesh(tube(15, 4, 2, 10), DeploymentState::FullyDeployed);
    CHECK(m.vertex_count() == 36360);
    CHECK(m.face_count() == 72000);
    std::map<std::pair<int, int>, int> edge_use;
    for (const auto& f : m.faces) {
      for (int k = 0; k < 3; ++k) {
        CHECK(f[static_cast<std::size_t>(k)] >= 0);
        CHECK(f[static_cast<std::size_t>(k)] < static_cast<int>(m.vertex_count()));
        const int a = f[static_cast<std::size_t>(k)];
        const int b = f[static_cast<std::size_t>((k + 1) % 3)];
        ++edge_use[{std::min(a, b), std::max(a, b)}];
      }
      const Eigen::Vector3d n = (m.vertices.col(f[1]) - m.vertices.col(f[0])).cross(m.vertices.col(f[2]) - m.vertices.col(f[0]));
      CHECK(n.norm() > 1e-9);
    }
    int boundary = 0;
    for (const auto& [e, uses] : edge_use) {
      CHECK(uses <= 2);
      if (uses == 1) ++boundary;
    }
    CHECK(boundary == 2 * 360);  // two boundary loops, one per rim
  }

  TEST_CASE("cylinder and cone radii") {
    const StentSegmentSpec s = tube(15, 4, 2, 20);
    const SegmentMesh full = generate_segment_mesh(s, DeploymentState::FullyDeployed);
    for (Eigen::Index i = 0; i < full.vertices.cols(); ++i) {
      const double r2 = full.vertices(0, i) * full.vertices(0, i) + full.vertices(1, i) * full.vertices(1, i);
      REQUIRE(std::abs(r2 - 225.0) <= 1e-9);
    }
    const SegmentMesh cone = generate_segment_mesh(s, DeploymentState::PartiallyDeployed);
    bool found = false;
    for (Eigen::Index i = 0; i < cone.vertices.cols(); ++i) {
      const double r = cone.vertices.col(i).head<2>().norm();
      REQUIRE(r >= 8.0 - 1e-9);
      REQUIRE(r <= 15.0 + 1e-9);
      if (std::abs(cone.parameters(1, i) - 10.0) < 1e-9) {
        CHECK(r == doctest::Approx(11.5).epsilon(1e-12));
        found = true;
      }
    }
    CHECK(found);
    CHECK(surface_radius(s, DeploymentState::PartiallyDeployed, 0.0) == 15.0);
    CHECK(surface_radius(s, DeploymentState::PartiallyDeployed, 20.0) == doctest::Approx(8.0));
  }

  TEST_CASE("resolution cap") {
    MeshLimits limits;
    limits.max_vertices = 1000;
    try {
      generate_segment_mesh(tube(10, 4, 1, 10), DeploymentState::FullyDeployed, limits);
      FAIL("expected ResolutionOverflow");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::ResolutionOverflow);
    }
    StentSegmentSpec bad = tube(10, 4, 1, 10);
    bad.h_resolution = 0.0;
    CHECK_THROWS_AS(generate_segment_mesh(bad, DeploymentState::FullyDeployed), Error);
  }

  TEST_CASE("fenestration cutouts") {
    const SegmentMesh m = generate_segment_mesh(tube(10, 4, 1, 5), DeploymentState::FullyDeployed);
    const SegmentMesh same = cut_fenestration(m, Fenestration{90, 2, 0, 3});
    CHECK(same.vertex_count() == m.vertex_count());
    CHECK(same.face_count() == m.face_count());

    const SegmentMesh gone = cut_fenestration(m, Fenestration{180, 2.5, 180, 2.5});
    CHECK(gone.vertex_count() == 0);
    CHECK(gone.empty());

    const SegmentMesh wrap = cut_fenestration(m, Fenestration{0, 2.5, 10, 10});
    std::set<int> thetas;
    for (Eigen::Index i = 0; i < wrap.parameters.cols(); ++i) thetas.insert(static_cast<int>(std::lround(wrap.parameters(0, i))));
    for (int t = 0; t <= 10; ++t) CHECK(thetas.count(t) == 0);
    for (int t = 350; t < 360; ++t) CHECK(thetas.count(t) == 0);
    CHECK(thetas.count(11) == 1);
    CHECK(thetas.count(349) == 1);
    CHECK(wrap.vertex_count() == m.vertex_count() - 21 * 51);
    for (const auto& f : wrap.faces) {
      for (int v : f) CHECK(v < static_cast<int>(wrap.vertex_count()));
    }

    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 20; ++i) {
      const Fenestration f{360 * u(rng), 5 * u(rng), 40 * u(rng), 2 * u(rng)};
      const SegmentMesh c = cut_fenestration(m, f);
      CHECK(c.vertex_count() <= m.vertex_count());
      CHECK(c.face_count() <= m.face_count());
      for (Eigen::Index k = 0; k < c.parameters.cols(); ++k) REQUIRE(!f.contains(c.parameters(0, k), c.parameters(1, k)));
    }

    StentSegmentSpec with_hole = tube(10, 4, 1, 5);
    with_hole.fenestrations.push_back({0, 2.5, 10, 10});
    CHECK(generate_segment_mesh(with_hole, DeploymentState::FullyDeployed).vertex_count() == wrap.vertex_count());
  }

  TEST_CASE("pose with central-point correction") {
    const StentSegmentSpec s = tube(10, 4, 1, 8);
    const SegmentMesh m = generate_segment_mesh(s, DeploymentState::PartiallyDeployed);
    const MarkerSet3D model = model_markers(s, DeploymentState::PartiallyDeployed, spread_placements(8));

    const SegmentMesh same = pose_mesh(m, model, RigidTransform::identity(), model);
    CHECK((same.vertices - m.vertices).cwiseAbs().maxCoeff() == 0.0);

    const Eigen::Vector3d t(3, -4, 5);
    const Eigen::Vector3d offset(0.5, 0.25, -1);
    const MarkerSet3D inst = (model.colwise() + t).colwise() + offset;
    const SegmentMesh shifted = pose_mesh(m, model, {Eigen::Matrix3d::Identity(), t}, inst);
    CHECK(((shifted.vertices - m.vertices).colwise() - (t + offset)).cwiseAbs().maxCoeff() < 1e-12);

    const RigidTransform pose{Eigen::AngleAxisd(0.7, Eigen::Vector3d(1, 2, 3).normalized()).toRotationMatrix(),
                              Eigen::Vector3d(10, 0, -20)};
    MarkerSet3D noisy = pose.apply(model);
    noisy(0, 1) += 2.0;
    noisy(2, 3) -= 1.0;
    const Eigen::Vector3d corr = central_point_correction(model, pose, noisy);
    const MarkerSet3D posed_model = (pose.R * model).colwise() + (pose.t + corr);
    CHECK((Eigen::Vector3d(posed_model.rowwise().mean()) - Eigen::Vector3d(noisy.rowwise().mean())).norm() < 1e-10);
  }

  TEST_CASE("closest point on triangle against an independent oracle") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    auto rv = [&] { return Eigen::Vector3d(u(rng), u(rng), u(rng)); };
    for (int i = 0; i < 2000; ++i) {
      const Eigen::Vector3d a = rv(), b = rv(), c = rv(), p = rv();
      const double got = (closest_point_on_triangle(p, a, b, c) - p).norm();
      CHECK(got == doctest::Approx(triangle_distance_oracle(p, a, b, c)).epsilon(1e-9));
    }
  }

  TEST_CASE("point to mesh distance") {
    StentSegmentSpec s = tube(10, 4, 1, 4);
    const SegmentMesh m = generate_segment_mesh(s, DeploymentState::FullyDeployed);
    CHECK(point_to_mesh_distance(m.vertices.col(1234), m) == doctest::Approx(0.0));
    const double on_axis = point_to_mesh_distance(Eigen::Vector3d(0, 0, 2), m);
    CHECK(on_axis <= 10.0);
    CHECK(on_axis >= 10.0 * std::cos(0.5 * std::numbers::pi / 180.0) - 1e-12);

    s.fenestrations.push_back({90, 2, 30, 1});
    const SegmentMesh holed = generate_segment_mesh(tube(10, 4, 1, 4), DeploymentState::PartiallyDeployed);
    const MeshDistanceIndex index(holed);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-15.0, 15.0);
    std::uniform_real_distribution<double> z(-3.0, 7.0);
    for (int i = 0; i < 1000; ++i) {
      const Eigen::Vector3d p(u(rng), u(rng), z(rng));
      CHECK(std::abs(index.distance(p) - brute_force_distance(p, holed)) <= 1e-9);
    }

    // Rigid invariance.
    const RigidTransform g{Eigen::AngleAxisd(1.1, Eigen::Vector3d(0.3, -1, 0.2).normalized()).toRotationMatrix(),
                           Eigen::Vector3d(40, -7, 12)};
    const SegmentMesh moved = transform_mesh(holed, g);
    for (int i = 0; i < 50; ++i) {
      const Eigen::Vector3d p(u(rng), u(rng), z(rng));
      CHECK(std::abs(point_to_mesh_distance(g.apply(p), moved) - index.distance(p)) <= 1e-9);
    }

    SegmentMesh empty;
    CHECK_THROWS_AS(MeshDistanceIndex{empty}, Error);
  }

  TEST_CASE("mesh distance error") {
    const StentSegmentSpec s = tube(10, 4, 1, 10);
    const SegmentMesh m = generate_segment_mesh(s, DeploymentState::FullyDeployed);
    CHECK(mesh_distance_error(m, m) == doctest::Approx(0.0).epsilon(1e-12));
    const SegmentMesh slid = transform_mesh(m, {Eigen::Matrix3d::Identity(), Eigen::Vector3d(0, 0, 2)});
    const double d = mesh_distance_error(slid, m);
    CHECK(d <= 2.0);
    CHECK(d > 0.0);
    // Only the top 2 mm overhangs the rim: mean is the overhang share times its mean distance.
    CHECK(d == doctest::Approx(21.0 / 101.0 * 1.0).epsilon(0.02));
    CHECK_THROWS_AS(mesh_distance_error(SegmentMesh{}, m), Error);
  }

  TEST_CASE("angular error") {
    const StentSegmentSpec s = tube(12, 4, 1, 10);
    const SegmentMesh m = generate_segment_mesh(s, DeploymentState::PartiallyDeployed);
    const MarkerSet3D gt = model_markers(s, DeploymentState::PartiallyDeployed, spread_placements(10));
    CHECK(angular_error(gt, gt, m) == 0.0);
    const MarkerSet3D rotated = rot_z(10.0) * gt;
    CHECK(angular_error(rotated, gt, m) == doctest::Approx(10.0).epsilon(0.1));

    CHECK(wrapped_angle_difference(359, 1) == doctest::Approx(2.0));
    CHECK(wrapped_angle_difference(1, 359) == doctest::Approx(2.0));
    CHECK(wrapped_angle_difference(-90, 270) == doctest::Approx(0.0));
    MarkerPlacements a = spread_placements(10);
    MarkerPlacements b = a;
    a[0].theta_deg = 359;
    b[0].theta_deg = 1;
    const double e = angular_error(model_markers(s, DeploymentState::PartiallyDeployed, a),
                                   model_markers(s, DeploymentState::PartiallyDeployed, b), m);
    CHECK(e == doctest::Approx(2.0 / 5.0));

    const RigidTransform g{Eigen::AngleAxisd(0.4, Eigen::Vector3d(1, 1, 0).normalized()).toRotationMatrix(),
                           Eigen::Vector3d(5, 6, 7)};
    CHECK(angular_error(g.apply(rotated), g.apply(gt), transform_mesh(m, g)) == doctest::Approx(angular_error(rotated, gt, m)));
    CHECK_THROWS_AS(angular_error(gt, gt, SegmentMesh{}), Error);
  }

  TEST_CASE("mesh export") {
    const SegmentMesh m = generate_segment_mesh(tube(10, 4, 1, 0.2), DeploymentState::FullyDeployed);
    const auto dir = std::filesystem::temp_directory_path();
    const auto obj = dir / "stentgcn_mesh_test.obj";
    const auto side = dir / "stentgcn_mesh_test.json";
    export_mesh(m, obj, side);
    std::ifstream in(obj);
    std::string line;
    std::size_t v = 0, f = 0;
    int min_index = 1 << 30;
    while (std::getline(in, line)) {
      std::istringstream ls(line);
      std::string tag;
      ls >> tag;
      if (tag == "v") ++v;
      if (tag == "f") {
        ++f;
        int a, b, c;
        ls >> a >> b >> c;
        min_index = std::min({min_index, a, b, c});
      }
    }
    CHECK(v == m.vertex_count());
    CHECK(f == m.face_count());
    CHECK(min_index == 1);
    std::filesystem::remove(obj);
    std::filesystem::remove(side);
    CHECK_THROWS_AS(export_mesh(m, dir / "no_such_dir" / "x.obj", side), Error);
  }
}
