#include <doctest.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <random>

#include <Eigen/Geometry>

#include "stentgcn/error.hpp"
#include "stentgcn/geometry.hpp"

using namespace stentgcn;

namespace {

Eigen::Matrix3d random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  return q.normalized().toRotationMatrix();
}

MarkerSet3D random_markers(std::mt19937_64& rng, double scale = 15.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  MarkerSet3D m;
  for (int i = 0; i < 15; ++i) m(i % 3, i / 3) = u(rng);
  return m;
}

double mean_dist(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) { return (a - b).colwise().norm().mean(); }

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::Io;
}

}  // namespace

TEST_SUITE("geometry") {
  TEST_CASE("local frame round trip and construction") {
    std::mt19937_64 rng(1);
    for (int i = 0; i < 50; ++i) {
      const MarkerSet3D y = random_markers(rng);
      const LocalFrame f = local_frame(y);
      CHECK((f.transform.apply(f.local) - y).cwiseAbs().maxCoeff() < 1e-10);
      CHECK(f.local.rowwise().mean().norm() < 1e-9);
      CHECK((f.transform.R.transpose() * f.transform.R - Eigen::Matrix3d::Identity()).norm() < 1e-12);
      CHECK(f.transform.R.determinant() == doctest::Approx(1.0));
    }

    MarkerSet3D y;
    y << 4, 0, -1, -1, -2,  //
        0, 3, -1, -1, -1,   //
        0, 0, 1, -1, 0;
    y.col(4) = -(y.col(0) + y.col(1) + y.col(2) + y.col(3));
    const LocalFrame f = local_frame(y);
    CHECK((f.transform.R.col(0) - Eigen::Vector3d(1, 0, 0)).norm() < 1e-12);
  }

  TEST_CASE("local frame degeneracies") {
    MarkerSet3D y;
    y << 1, 2, 0, 0, -3,  //
        0, 0, 1, 0, -1,   //
        0, 0, 0, 1, -1;
    CHECK(kind_of([&] { local_frame(y); }) == ErrorKind::DegenerateFrame);
    const MarkerSet3D same = MarkerSet3D::Constant(3.0);
    CHECK(kind_of([&] { local_frame(same); }) == ErrorKind::CoincidentMarkers);
  }

  TEST_CASE("procrustes recovers rigid motions") {
    std::mt19937_64 rng(2);
    for (int i = 0; i < 200; ++i) {
      const MarkerSet3D ref = random_markers(rng);
      const Eigen::Matrix3d R0 = random_rotation(rng);
      const Eigen::Vector3d t0 = Eigen::Vector3d::Random() * 100.0;
      const MarkerSet3D src = (R0 * ref).colwise() + t0;
      const MarkerAlignment a = procrustes_align(src, ref);
      CHECK(mean_dist(a.aligned, ref) <= 1e-9);
      CHECK(a.transform.R.determinant() == doctest::Approx(1.0).epsilon(1e-12));
    }
    const MarkerSet3D ref = random_markers(rng);
    const MarkerAlignment id = procrustes_align(ref, ref);
    CHECK((id.transform.R - Eigen::Matrix3d::Identity()).norm() < 1e-12);
    CHECK(id.transform.t.norm() < 1e-12);
  }

  TEST_CASE("procrustes reflection guard and optimality") {
    std::mt19937_64 rng(3);
    const MarkerSet3D ref = random_markers(rng);
    MarkerSet3D mirrored = ref;
    mirrored.row(0) *= -1.0;
    const MarkerAlignment a = procrustes_align(mirrored, ref);
    CHECK(a.transform.R.determinant() == doctest::Approx(1.0));
    const double best = mean_dist(a.aligned, ref);
    const double best_sq = (a.aligned - ref).squaredNorm();
    for (int i = 0; i < 100; ++i) {
      const MarkerSet3D moved = (random_rotation(rng) * mirrored).colwise() + Eigen::Vector3d::Random().eval();
      CHECK(best_sq <= (moved - ref).squaredNorm() + 1e-9);
    }
    CHECK(best > 0.0);

    // Invariance to a rigid pre-motion of the source.
    const MarkerSet3D src = random_markers(rng);
    const MarkerSet3D pre = (random_rotation(rng) * src).colwise() + Eigen::Vector3d(5, -7, 2);
    CHECK(mean_dist(procrustes_align(pre, ref).aligned, procrustes_align(src, ref).aligned) <= 1e-9);
  }

  TEST_CASE("procrustes rejects rank deficient configurations") {
    MarkerSet3D line;
    for (int i = 0; i < 5; ++i) line.col(i) = Eigen::Vector3d(i, 2 * i, -i);
    std::mt19937_64 rng(4);
    CHECK(kind_of([&] { procrustes_align(line, random_markers(rng)); }) == ErrorKind::DegenerateConfiguration);
  }

  TEST_CASE("projection") {
    CameraProjection cam;
    cam.P.leftCols<3>() = Eigen::Matrix3d::Identity();
    Eigen::Matrix3Xd p(3, 1);
    p << 2, 4, 2;
    const Eigen::Matrix2Xd x = project(cam, p);
    CHECK(x(0, 0) == doctest::Approx(1.0));
    CHECK(x(1, 0) == doctest::Approx(2.0));
    p << 1, 1, 0;
    CHECK(kind_of([&] { project(cam, p); }) == ErrorKind::PointOnPrincipalPlane);

    std::mt19937_64 rng(5);
    CameraProjection rnd;
    rnd.P = Eigen::Matrix<double, 3, 4>::Random();
    rnd.P(2, 3) = 50.0;
    const MarkerSet3D y = random_markers(rng);
    const MarkerSet2D got = project(rnd, y);
    for (int i = 0; i < 5; ++i) {
      Eigen::Vector4d h;
      h << y.col(i), 1.0;
      const Eigen::Vector3d q = rnd.P * h;
      CHECK(got(0, i) == doctest::Approx(q(0) / q(2)).epsilon(1e-13));
      CHECK(got(1, i) == doctest::Approx(q(1) / q(2)).epsilon(1e-13));
    }

    // Projecting a moved scene equals projecting with the composed matrix.
    const Eigen::Matrix3d R = random_rotation(rng);
    const Eigen::Vector3d t(3, -2, 1);
    Eigen::Matrix4d T = Eigen::Matrix4d::Identity();
    T.topLeftCorner<3, 3>() = R;
    T.topRightCorner<3, 1>() = t;
    CameraProjection composed;
    composed.P = rnd.P * T;
    const MarkerSet3D moved = (R * y).colwise() + t;
    CHECK((project(composed, y) - project(rnd, moved)).cwiseAbs().maxCoeff() < 1e-10);
  }

  TEST_CASE("pnp recovers noiseless poses") {
    std::mt19937_64 rng(6);
    const CameraProjection cam = fluoroscope_projection(1000.0, 600.0);
    std::uniform_real_distribution<double> shift(-20.0, 20.0);
    for (int i = 0; i < 100; ++i) {
      const MarkerSet3D ref = random_markers(rng);
      const Eigen::Matrix3d R0 = random_rotation(rng);
      const Eigen::Vector3d t0(shift(rng), shift(rng), shift(rng));
      const MarkerSet3D truth = (R0 * ref).colwise() + t0;
      const MarkerSet2D obs = project(cam, truth);
      const PnpResult r = solve_pnp(ref, obs, cam);
      const MarkerSet3D got = r.pose.apply(ref);
      CHECK(mean_dist(project(cam, got), obs) <= 1e-6);
      CHECK(mean_dist(got, truth) <= 1e-5);
      CHECK(r.pose.R.determinant() == doctest::Approx(1.0));
    }
    const MarkerSet3D ref = random_markers(rng);
    const PnpResult id = solve_pnp(ref, project(cam, ref), cam);
    CHECK((id.pose.R - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(id.pose.t.norm() < 1e-6);
  }

  TEST_CASE("pnp is scale consistent") {
    // Camera with no translation column, so a uniform scene scale leaves the image unchanged.
    CameraProjection cam;
    cam.P << 1000, 0, 0, 0, 0, 1000, 0, 0, 0, 0, 1, 0;
    std::mt19937_64 rng(7);
    for (int i = 0; i < 20; ++i) {
      const MarkerSet3D ref = random_markers(rng);
      const Eigen::Matrix3d R0 = random_rotation(rng);
      const Eigen::Vector3d t0(5, -3, 600);
      const MarkerSet2D obs = project(cam, MarkerSet3D((R0 * ref).colwise() + t0));
      const double s = 2.5;
      const PnpResult a = solve_pnp(ref, obs, cam);
      const PnpResult b = solve_pnp(s * ref, obs, cam);
      CHECK((b.pose.t - s * a.pose.t).norm() <= 1e-6 * (s * a.pose.t).norm());
    }
  }

  TEST_CASE("pnp with observation noise stays at the few millimetre scale") {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> noise(0.0, 0.65);
    const CameraProjection cam = fluoroscope_projection(1000.0, 600.0);
    double err = 0.0;
    const int trials = 50;
    for (int i = 0; i < trials; ++i) {
      const MarkerSet3D ref = random_markers(rng);
      const MarkerSet3D truth = (random_rotation(rng) * ref).colwise() + Eigen::Vector3d(0, 0, 10);
      MarkerSet2D obs = project(cam, truth);
      for (int k = 0; k < 10; ++k) obs(k % 2, k / 2) += noise(rng);
      err += mean_dist(solve_pnp(ref, obs, cam).pose.apply(ref), truth);
    }
    // The residual 3D error is dominated by depth along the viewing axis.
    CHECK(err / trials < 15.0);
  }

  TEST_CASE("pnp rejects planar references") {
    MarkerSet3D flat;
    flat << 1, -1, 2, 0, -2,  //
        0, 3, -1, 1, -3,      //
        0, 0, 0, 0, 0;
    const CameraProjection cam = fluoroscope_projection(1000.0, 600.0);
    CHECK(kind_of([&] { solve_pnp(flat, project(cam, flat), cam); }) == ErrorKind::DegenerateReference);
  }

  TEST_CASE("marker instantiation") {
    std::mt19937_64 rng(9);
    const CameraProjection cam = fluoroscope_projection(1000.0, 600.0);
    const MarkerSet3D full = local_frame(random_markers(rng)).local;
    MarkerSet3D partial = full;
    partial.row(0) *= 0.8;
    const MarkerSet3D aligned = procrustes_align(partial, full).aligned;
    const MarkerSet3D truth = (random_rotation(rng) * aligned).colwise() + Eigen::Vector3d(4, -6, 12);
    const MarkerSet2D obs = project(cam, truth);

    // The prediction may sit anywhere; alignment onto the fully-deployed set removes that.
    const MarkerSet3D prediction = (random_rotation(rng) * partial).colwise() + Eigen::Vector3d(30, 1, -9);
    const auto t0 = std::chrono::steady_clock::now();
    const MarkerInstantiation mi = instantiate_markers(prediction, full, obs, cam);
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    CHECK(mean_dist(mi.markers, truth) <= 1e-5);
    CHECK(ms <= 10.0);

    // Shifting the scene and compensating in P leaves the residual unchanged.
    const Eigen::Vector3d shift(50, -20, 5);
    Eigen::Matrix4d T = Eigen::Matrix4d::Identity();
    T.topRightCorner<3, 1>() = -shift;
    CameraProjection moved;
    moved.P = cam.P * T;
    MarkerSet2D noisy = obs;
    noisy(0, 2) += 0.8;
    const MarkerInstantiation a = instantiate_markers(prediction, full, noisy, cam);
    const MarkerInstantiation b = instantiate_markers(prediction, full, noisy, moved);
    CHECK(a.rms_residual == doctest::Approx(b.rms_residual).epsilon(1e-6));
  }

  TEST_CASE("projection files") {
    const auto path = std::filesystem::temp_directory_path() / "stentgcn_projection_test.txt";
    const CameraProjection cam = fluoroscope_projection(1000.0, 600.0);
    save_projection(path, cam);
    CHECK((load_projection(path).P - cam.P).norm() == 0.0);

    const CameraProjection parsed = parse_projection("# C-arm\n1 0 0 0\n0 1 0 0\n\n0 0 1 5 # trailing\n");
    CHECK(parsed.P(2, 3) == 5.0);
    try {
      parse_projection("1 0 0 0\n0 x 0 0\n0 0 1 0\n");
      FAIL("expected ParseError");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::ParseError);
      CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_projection("1 2 3"), Error);
    std::filesystem::remove(path);
  }
}
