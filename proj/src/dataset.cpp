#include "stentgcn/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include <Eigen/Geometry>
#include <json.hpp>

#include "stentgcn/error.hpp"
#include "stentgcn/geometry.hpp"

namespace stentgcn {

using json = nlohmann::json;

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

Eigen::Matrix3d axis_rotation(int axis, double deg) {
  return Eigen::AngleAxisd(deg * kDegToRad, Eigen::Vector3d::Unit(axis)).toRotationMatrix();
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer over the combined state
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void SegmentSample::validate() const {
  const std::string who = "sample " + graft_id + "#" + std::to_string(segment_index);
  if (!fully_deployed_local.allFinite() || !partially_deployed_local.allFinite()) {
    throw Error(ErrorKind::InvalidArgument, who + ": marker coordinates must be finite");
  }
  const double offset = fully_deployed_local.rowwise().mean().norm();
  if (offset > 1e-9 * std::max(1.0, fully_deployed_local.cwiseAbs().maxCoeff())) {
    throw Error(ErrorKind::InvalidArgument, who + ": fully-deployed markers are not centered in the local frame");
  }
  if (observed_2d && !camera) throw Error(ErrorKind::InvalidArgument, who + ": 2D observation without a camera");
  spec.validate();
}

double mde(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols() || a.cols() == 0) {
    throw Error(ErrorKind::ShapeMismatch, "MDE needs point sets of equal, non-zero size and dimension");
  }
  return (a - b).colwise().norm().sum() / static_cast<double>(a.cols());
}

double initial_variation(const SegmentSample& sample) {
  return mde(sample.fully_deployed_local, sample.partially_deployed_local);
}

// ---------------------------------------------------------------------------
// Augmentation

void AugmentConfig::validate() const {
  if (!(rot_step_deg > 0.0)) throw Error(ErrorKind::InvalidArgument, "rot_step must be positive");
  if (!(rot_max_deg >= rot_min_deg)) throw Error(ErrorKind::InvalidArgument, "rot_max must be >= rot_min");
  if (!(scale_ratio > 1.0)) throw Error(ErrorKind::InvalidArgument, "scale_ratio must exceed 1");
  if (!(scale_base > 0.0) || scale_count < 1) throw Error(ErrorKind::InvalidArgument, "scale grid must be non-empty");
  if (!(scale_max >= scale_base)) throw Error(ErrorKind::InvalidArgument, "scale_max must be >= scale_base");
}

std::vector<double> AugmentConfig::angles() const {
  std::vector<double> out;
  const auto n = static_cast<int>(std::floor((rot_max_deg - rot_min_deg) / rot_step_deg + 1e-9));
  for (int i = 0; i <= n; ++i) out.push_back(rot_min_deg + i * rot_step_deg);
  return out;
}

std::vector<double> AugmentConfig::scales() const {
  std::vector<double> out;
  for (int k = 0; k < scale_count; ++k) out.push_back(std::min(scale_base * std::pow(scale_ratio, k), scale_max));
  return out;
}

std::vector<SegmentSample> augment(const std::vector<SegmentSample>& samples, const AugmentConfig& cfg) {
  cfg.validate();
  const std::vector<double> angles = cfg.angles();
  const std::vector<double> scales = cfg.scales();

  std::vector<Eigen::Matrix3d> rotations;
  if (cfg.axes_mode == RotationMode::PerAxis) {
    for (int axis = 0; axis < 3; ++axis) {
      for (double a : angles) rotations.push_back(axis_rotation(axis, a));
    }
  } else {
    for (double ax : angles) {
      for (double ay : angles) {
        for (double az : angles) rotations.push_back(axis_rotation(2, az) * axis_rotation(1, ay) * axis_rotation(0, ax));
      }
    }
  }

  std::vector<SegmentSample> out;
  out.reserve(samples.size() * rotations.size() * scales.size());
  for (const SegmentSample& sample : samples) {
    for (const Eigen::Matrix3d& R : rotations) {
      for (double s : scales) {
        const MarkerSet3D full = s * (R * sample.fully_deployed_local);
        const MarkerSet3D partial = s * (R * sample.partially_deployed_local);
        SegmentSample aug;
        aug.graft_id = sample.graft_id;
        aug.segment_index = sample.segment_index;
        aug.fully_deployed_local = local_frame(full).local;
        aug.partially_deployed_local = procrustes_align(partial, aug.fully_deployed_local).aligned;
        aug.spec = sample.spec;
        aug.spec.r_fd *= s;
        aug.spec.r_fc *= s;
        aug.spec.w_g *= s;
        aug.spec.height *= s;
        for (Fenestration& f : aug.spec.fenestrations) {
          f.h_center *= s;
          f.h_halfheight *= s;
        }
        if (sample.placements) {
          MarkerPlacements p = *sample.placements;
          for (MarkerPlacement& m : p) m.h *= s;
          aug.placements = p;
        }
        out.push_back(std::move(aug));
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Simulation

SegmentSample simulate_deployment(const StentSegmentSpec& spec, const MarkerPlacements& placements,
                                  const DeploymentJitter& jitter, const RigidTransform& pose, std::uint64_t seed,
                                  const std::optional<ObservationModel>& observation) {
  spec.validate();
  const MarkerSet3D full_model = model_markers(spec, DeploymentState::FullyDeployed, placements);
  if (planarity(Eigen::Matrix3Xd(full_model)) <= 1e-6) {
    throw Error(ErrorKind::CoplanarPlacement, "marker placements are coplanar on the segment surface");
  }

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  MarkerSet3D partial_model;
  for (int i = 0; i < kMarkerCount; ++i) {
    const auto& p = placements[static_cast<std::size_t>(i)];
    const double theta = p.theta_deg + jitter.angular_std_deg * normal(rng);
    const double h = p.h + jitter.axial_std_mm * normal(rng);
    partial_model.col(i) = surface_point(spec, DeploymentState::PartiallyDeployed, theta, h);
  }

  SegmentSample sample;
  sample.spec = spec;
  sample.placements = placements;
  const MarkerSet3D full_global = pose.apply(full_model);
  const MarkerSet3D partial_global = pose.apply(partial_model);
  sample.fully_deployed_local = local_frame(full_global).local;
  sample.partially_deployed_local = procrustes_align(partial_global, sample.fully_deployed_local).aligned;
  sample.partially_deployed_global = partial_global;
  if (observation) {
    MarkerSet2D x = project(observation->camera, partial_global);
    if (observation->noise_std_mm > 0.0) {
      for (int i = 0; i < kMarkerCount; ++i) {
        x(0, i) += observation->noise_std_mm * normal(rng);
        x(1, i) += observation->noise_std_mm * normal(rng);
      }
    }
    sample.observed_2d = x;
    sample.camera = observation->camera;
  }
  return sample;
}

namespace {

template <typename T>
T opt(const json& j, const char* key, T fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorKind::ParseError, where + "." + key + ": wrong type");
  }
}

template <typename T>
T req(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw Error(ErrorKind::ParseError, where + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorKind::ParseError, where + "." + key + ": wrong type");
  }
}

Fenestration parse_fenestration(const json& j, const std::string& where) {
  Fenestration f;
  f.theta_center_deg = req<double>(j, "theta_center_deg", where);
  f.h_center = req<double>(j, "h_center", where);
  f.theta_halfwidth_deg = req<double>(j, "theta_halfwidth_deg", where);
  f.h_halfheight = req<double>(j, "h_halfheight", where);
  return f;
}

json fenestration_to_json(const Fenestration& f) {
  return {{"theta_center_deg", f.theta_center_deg},
          {"h_center", f.h_center},
          {"theta_halfwidth_deg", f.theta_halfwidth_deg},
          {"h_halfheight", f.h_halfheight}};
}

Error invalid_field(const std::string& field, const std::string& why) {
  return Error(ErrorKind::InvalidArgument, field + ": " + why);
}

}  // namespace

void SimulationConfig::validate() const {
  if (families.empty()) throw invalid_field("families", "at least one family is required");
  if (!(source_to_detector > 0.0)) throw invalid_field("source_to_detector", "must be positive");
  if (!(source_to_object > 0.0)) throw invalid_field("source_to_object", "must be positive");
  if (!(obs_noise_mm >= 0.0)) throw invalid_field("obs_noise_mm", "must be nonnegative");
  std::set<std::string> ids;
  for (std::size_t i = 0; i < families.size(); ++i) {
    const FamilyConfig& f = families[i];
    const std::string w = "families[" + std::to_string(i) + "]";
    if (f.graft_id.empty()) throw invalid_field(w + ".graft_id", "must be non-empty");
    if (!ids.insert(f.graft_id).second) throw invalid_field(w + ".graft_id", "duplicate family '" + f.graft_id + "'");
    if (f.segments < 1) throw invalid_field(w + ".segments", "must be >= 1");
    if (!(f.r_fd_min > 0.0) || !(f.r_fd_max >= f.r_fd_min)) throw invalid_field(w + ".r_fd", "need 0 < r_fd_min <= r_fd_max");
    if (!(f.r_fc > 0.0)) throw invalid_field(w + ".r_fc", "must be positive");
    if (f.r_fc > f.r_fd_min) throw invalid_field(w + ".r_fc", "exceeds the fully-deployed radius r_fd");
    if (!(f.w_g >= 0.0)) throw invalid_field(w + ".w_g", "must be nonnegative");
    if (!(f.height_min > 0.0) || !(f.height_max >= f.height_min)) {
      throw invalid_field(w + ".height", "need 0 < height_min <= height_max");
    }
    if (!(f.jitter.angular_std_deg >= 0.0) || !(f.jitter.axial_std_mm >= 0.0)) {
      throw invalid_field(w + ".jitter", "standard deviations must be nonnegative");
    }
  }
}

CameraProjection SimulationConfig::projection() const {
  return camera ? *camera : fluoroscope_projection(source_to_detector, source_to_object);
}

SimulationConfig parse_simulation_config(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::ParseError, std::string("simulation config: ") + e.what());
  }
  const std::string w = "config";
  SimulationConfig cfg;
  cfg.seed = opt<std::uint64_t>(doc, "seed", cfg.seed, w);
  cfg.source_to_detector = opt<double>(doc, "source_to_detector", cfg.source_to_detector, w);
  cfg.source_to_object = opt<double>(doc, "source_to_object", cfg.source_to_object, w);
  if (doc.contains("projection")) {
    const auto values = req<std::vector<double>>(doc, "projection", w);
    if (values.size() != 12) throw Error(ErrorKind::ParseError, "config.projection: expected 12 numbers");
    CameraProjection cam;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 4; ++c) cam.P(r, c) = values[static_cast<std::size_t>(4 * r + c)];
    }
    cfg.camera = cam;
  }
  cfg.obs_noise_mm = opt<double>(doc, "obs_noise_mm", cfg.obs_noise_mm, w);
  cfg.pose_tilt_deg = opt<double>(doc, "pose_tilt_deg", cfg.pose_tilt_deg, w);
  cfg.pose_translation_mm = opt<double>(doc, "pose_translation_mm", cfg.pose_translation_mm, w);
  const json families = req<json>(doc, "families", w);
  if (!families.is_array()) throw Error(ErrorKind::ParseError, "config.families: expected an array");
  for (std::size_t i = 0; i < families.size(); ++i) {
    const json& fj = families[i];
    const std::string fw = "config.families[" + std::to_string(i) + "]";
    FamilyConfig f;
    f.graft_id = req<std::string>(fj, "graft_id", fw);
    f.segments = opt<int>(fj, "segments", f.segments, fw);
    if (fj.contains("r_fd")) {
      f.r_fd_min = f.r_fd_max = req<double>(fj, "r_fd", fw);
    }
    f.r_fd_min = opt<double>(fj, "r_fd_min", f.r_fd_min, fw);
    f.r_fd_max = opt<double>(fj, "r_fd_max", f.r_fd_max, fw);
    f.r_fc = opt<double>(fj, "r_fc", f.r_fc, fw);
    f.w_g = opt<double>(fj, "w_g", f.w_g, fw);
    if (fj.contains("height")) f.height_min = f.height_max = req<double>(fj, "height", fw);
    f.height_min = opt<double>(fj, "height_min", f.height_min, fw);
    f.height_max = opt<double>(fj, "height_max", f.height_max, fw);
    f.placement_theta_deg = opt(fj, "placement_theta_deg", f.placement_theta_deg, fw);
    f.placement_h_frac = opt(fj, "placement_h_frac", f.placement_h_frac, fw);
    f.placement_theta_spread_deg = opt<double>(fj, "placement_theta_spread_deg", f.placement_theta_spread_deg, fw);
    f.placement_h_spread_frac = opt<double>(fj, "placement_h_spread_frac", f.placement_h_spread_frac, fw);
    f.jitter.angular_std_deg = opt<double>(fj, "jitter_angular_deg", f.jitter.angular_std_deg, fw);
    f.jitter.axial_std_mm = opt<double>(fj, "jitter_axial_mm", f.jitter.axial_std_mm, fw);
    if (fj.contains("fenestrations")) {
      const json& fen = fj.at("fenestrations");
      if (!fen.is_array()) throw Error(ErrorKind::ParseError, fw + ".fenestrations: expected an array");
      for (std::size_t k = 0; k < fen.size(); ++k) {
        f.fenestrations.push_back(parse_fenestration(fen[k], fw + ".fenestrations[" + std::to_string(k) + "]"));
      }
    }
    cfg.families.push_back(std::move(f));
  }
  cfg.validate();
  return cfg;
}

SimulationConfig load_simulation_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open config " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_simulation_config(buffer.str());
}

namespace {

/// Segment axis roughly along the image vertical, random roll about the axis,
/// random tilt up to `tilt_deg`, random offset within the isocenter cube.
RigidTransform sample_pose(std::mt19937_64& rng, double tilt_deg, double translation_mm) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double roll = 360.0 * unit(rng);
  const double tilt = tilt_deg * unit(rng);
  const double tilt_dir = 360.0 * unit(rng);
  const Eigen::Matrix3d to_vertical = axis_rotation(0, -90.0);  // segment z -> image y
  const Eigen::Vector3d tilt_axis(std::cos(tilt_dir * kDegToRad), 0.0, std::sin(tilt_dir * kDegToRad));
  const Eigen::Matrix3d tilt_rot = Eigen::AngleAxisd(tilt * kDegToRad, tilt_axis).toRotationMatrix();
  RigidTransform pose;
  pose.R = tilt_rot * to_vertical * axis_rotation(2, roll);
  for (int i = 0; i < 3; ++i) pose.t(i) = translation_mm * (2.0 * unit(rng) - 1.0);
  return pose;
}

}  // namespace

std::vector<SegmentSample> simulate_dataset(const SimulationConfig& cfg) {
  cfg.validate();
  const CameraProjection camera = cfg.projection();
  std::vector<SegmentSample> out;
  int segment_number = 0;
  for (std::size_t fi = 0; fi < cfg.families.size(); ++fi) {
    const FamilyConfig& family = cfg.families[fi];
    for (int s = 0; s < family.segments; ++s) {
      ++segment_number;
      std::mt19937_64 rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(segment_number)));
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      auto lerp = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

      StentSegmentSpec spec;
      spec.r_fd = lerp(family.r_fd_min, family.r_fd_max);
      spec.r_fc = family.r_fc;
      spec.w_g = family.w_g;
      spec.height = lerp(family.height_min, family.height_max);
      spec.fenestrations = family.fenestrations;

      MarkerPlacements placements;
      for (int m = 0; m < kMarkerCount; ++m) {
        const double theta = family.placement_theta_deg[static_cast<std::size_t>(m)] +
                             family.placement_theta_spread_deg * (2.0 * unit(rng) - 1.0);
        double frac = family.placement_h_frac[static_cast<std::size_t>(m)] +
                      family.placement_h_spread_frac * (2.0 * unit(rng) - 1.0);
        frac = std::clamp(frac, 0.0, 1.0);
        placements[static_cast<std::size_t>(m)] = {theta, frac * spec.height};
      }
      const RigidTransform pose = sample_pose(rng, cfg.pose_tilt_deg, cfg.pose_translation_mm);
      SegmentSample sample = simulate_deployment(spec, placements, family.jitter, pose, rng(),
                                                 ObservationModel{camera, cfg.obs_noise_mm});
      sample.graft_id = family.graft_id;
      sample.segment_index = segment_number;
      out.push_back(std::move(sample));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Cross-validation

std::vector<Fold> crossval_split(const std::vector<SegmentSample>& dataset) {
  std::vector<std::string> families;
  for (const auto& s : dataset) {
    if (std::find(families.begin(), families.end(), s.graft_id) == families.end()) families.push_back(s.graft_id);
  }
  if (families.size() < 3) {
    throw Error(ErrorKind::InsufficientFamilies,
                "cross-validation needs at least 3 graft families, found " + std::to_string(families.size()));
  }
  std::vector<Fold> folds;
  for (const std::string& family : families) {
    Fold fold;
    fold.test_family = family;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      (dataset[i].graft_id == family ? fold.test : fold.train).push_back(i);
    }
    folds.push_back(std::move(fold));
  }
  return folds;
}

// ---------------------------------------------------------------------------
// Dataset files

namespace {

template <int Rows>
json points_to_json(const Eigen::Matrix<double, Rows, kMarkerCount>& m) {
  json out = json::array();
  for (int c = 0; c < kMarkerCount; ++c) {
    json p = json::array();
    for (int r = 0; r < Rows; ++r) p.push_back(m(r, c));
    out.push_back(p);
  }
  return out;
}

template <int Rows>
Eigen::Matrix<double, Rows, kMarkerCount> points_from_json(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != kMarkerCount) {
    throw Error(ErrorKind::ParseError, where + ": expected " + std::to_string(kMarkerCount) + " markers, found " +
                                           (j.is_array() ? std::to_string(j.size()) : std::string("a non-array")));
  }
  Eigen::Matrix<double, Rows, kMarkerCount> m;
  for (int c = 0; c < kMarkerCount; ++c) {
    const json& p = j[static_cast<std::size_t>(c)];
    if (!p.is_array() || p.size() != Rows) {
      throw Error(ErrorKind::ParseError, where + "[" + std::to_string(c) + "]: expected " + std::to_string(Rows) +
                                             " coordinates");
    }
    for (int r = 0; r < Rows; ++r) {
      if (!p[static_cast<std::size_t>(r)].is_number()) {
        throw Error(ErrorKind::ParseError, where + "[" + std::to_string(c) + "]: coordinate is not a number");
      }
      m(r, c) = p[static_cast<std::size_t>(r)].get<double>();
    }
  }
  return m;
}

json sample_to_json(const SegmentSample& s) {
  json j;
  j["graft_id"] = s.graft_id;
  j["segment_index"] = s.segment_index;
  j["fully_deployed_local"] = points_to_json<3>(s.fully_deployed_local);
  j["partially_deployed_local"] = points_to_json<3>(s.partially_deployed_local);
  if (s.partially_deployed_global) j["partially_deployed_global"] = points_to_json<3>(*s.partially_deployed_global);
  if (s.observed_2d) j["observed_2d"] = points_to_json<2>(*s.observed_2d);
  if (s.camera) {
    std::vector<double> p;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 4; ++c) p.push_back(s.camera->P(r, c));
    }
    j["camera"] = p;
  }
  json fen = json::array();
  for (const auto& f : s.spec.fenestrations) fen.push_back(fenestration_to_json(f));
  j["spec"] = {{"r_fd", s.spec.r_fd},
               {"r_fc", s.spec.r_fc},
               {"w_g", s.spec.w_g},
               {"height", s.spec.height},
               {"h_resolution", s.spec.h_resolution},
               {"theta_resolution_deg", s.spec.theta_resolution_deg},
               {"fenestrations", fen}};
  if (s.placements) {
    json p = json::array();
    for (const auto& m : *s.placements) p.push_back({m.theta_deg, m.h});
    j["placements"] = p;
  }
  return j;
}

SegmentSample sample_from_json(const json& j, const std::string& where) {
  if (!j.is_object()) throw Error(ErrorKind::ParseError, where + ": expected an object");
  SegmentSample s;
  s.graft_id = req<std::string>(j, "graft_id", where);
  s.segment_index = req<int>(j, "segment_index", where);
  s.fully_deployed_local = points_from_json<3>(req<json>(j, "fully_deployed_local", where), where + ".fully_deployed_local");
  s.partially_deployed_local =
      points_from_json<3>(req<json>(j, "partially_deployed_local", where), where + ".partially_deployed_local");
  if (j.contains("partially_deployed_global")) {
    s.partially_deployed_global =
        points_from_json<3>(j.at("partially_deployed_global"), where + ".partially_deployed_global");
  }
  if (j.contains("observed_2d")) s.observed_2d = points_from_json<2>(j.at("observed_2d"), where + ".observed_2d");
  if (j.contains("camera")) {
    const auto p = req<std::vector<double>>(j, "camera", where);
    if (p.size() != 12) throw Error(ErrorKind::ParseError, where + ".camera: expected 12 numbers");
    CameraProjection cam;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 4; ++c) cam.P(r, c) = p[static_cast<std::size_t>(4 * r + c)];
    }
    s.camera = cam;
  }
  const json spec = req<json>(j, "spec", where);
  const std::string sw = where + ".spec";
  s.spec.r_fd = req<double>(spec, "r_fd", sw);
  s.spec.r_fc = req<double>(spec, "r_fc", sw);
  s.spec.w_g = req<double>(spec, "w_g", sw);
  s.spec.height = req<double>(spec, "height", sw);
  s.spec.h_resolution = opt<double>(spec, "h_resolution", 0.1, sw);
  s.spec.theta_resolution_deg = opt<double>(spec, "theta_resolution_deg", 1.0, sw);
  if (spec.contains("fenestrations")) {
    const json& fen = spec.at("fenestrations");
    if (!fen.is_array()) throw Error(ErrorKind::ParseError, sw + ".fenestrations: expected an array");
    for (std::size_t k = 0; k < fen.size(); ++k) {
      s.spec.fenestrations.push_back(parse_fenestration(fen[k], sw + ".fenestrations[" + std::to_string(k) + "]"));
    }
  }
  if (j.contains("placements")) {
    const json& p = j.at("placements");
    if (!p.is_array() || p.size() != kMarkerCount) {
      throw Error(ErrorKind::ParseError, where + ".placements: expected " + std::to_string(kMarkerCount) + " entries");
    }
    MarkerPlacements placements;
    for (std::size_t m = 0; m < kMarkerCount; ++m) {
      if (!p[m].is_array() || p[m].size() != 2 || !p[m][0].is_number() || !p[m][1].is_number()) {
        throw Error(ErrorKind::ParseError, where + ".placements[" + std::to_string(m) + "]: expected [theta_deg, h]");
      }
      placements[m] = {p[m][0].get<double>(), p[m][1].get<double>()};
    }
    s.placements = placements;
  }
  try {
    s.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::ParseError, where + ": " + e.what());
  }
  return s;
}

}  // namespace

std::string dataset_to_string(const std::vector<SegmentSample>& samples) {
  json doc;
  doc["format_version"] = kDatasetFormatVersion;
  doc["samples"] = json::array();
  for (const auto& s : samples) doc["samples"].push_back(sample_to_json(s));
  return doc.dump(1) + "\n";
}

std::vector<SegmentSample> dataset_from_string(const std::string& text, const std::string& source) {
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) {
    throw Error(ErrorKind::ParseError, source + ": empty file (expected a dataset document)");
  }
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::ParseError, source + ": " + e.what());
  }
  if (!doc.is_object()) throw Error(ErrorKind::ParseError, source + ": expected a JSON object");
  const int version = req<int>(doc, "format_version", source);
  if (version != kDatasetFormatVersion) {
    throw Error(ErrorKind::SchemaVersionMismatch, source + ": dataset version " + std::to_string(version) +
                                                      ", expected " + std::to_string(kDatasetFormatVersion));
  }
  const json samples = req<json>(doc, "samples", source);
  if (!samples.is_array()) throw Error(ErrorKind::ParseError, source + ".samples: expected an array");
  std::vector<SegmentSample> out;
  out.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    out.push_back(sample_from_json(samples[i], source + ": record " + std::to_string(i)));
  }
  return out;
}

void save_dataset(const std::vector<SegmentSample>& samples, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write dataset " + path.string());
  out << dataset_to_string(samples);
  if (!out) throw Error(ErrorKind::Io, "failed writing dataset " + path.string());
}

std::vector<SegmentSample> load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open dataset " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return dataset_from_string(buffer.str(), path.string());
}

}  // namespace stentgcn
