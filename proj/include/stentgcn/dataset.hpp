#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "stentgcn/stent_mesh.hpp"
#include "stentgcn/types.hpp"

namespace stentgcn {

/// One partially-deployed segment with its fully-deployed counterpart.
struct SegmentSample {
  std::string graft_id;  // iliac, fenestrated, thoracic, synthetic-A, ...
  int segment_index = 0;
  MarkerSet3D fully_deployed_local;    // standardized local frame
  MarkerSet3D partially_deployed_local;  // ground truth aligned onto fully_deployed_local
  std::optional<MarkerSet3D> partially_deployed_global;
  std::optional<MarkerSet2D> observed_2d;
  std::optional<CameraProjection> camera;
  StentSegmentSpec spec;
  /// Sewn marker positions on the segment surface, used to register the mesh model.
  std::optional<MarkerPlacements> placements;

  void validate() const;
};

/// (1/n) sum_i ||a_i - b_i||, columns are points.
double mde(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

/// MDE between the fully-deployed markers and the partially-deployed ground truth.
double initial_variation(const SegmentSample& sample);

enum class RotationMode { PerAxis, Combinatorial };

struct AugmentConfig {
  double rot_min_deg = -30.0;
  double rot_max_deg = 30.0;
  double rot_step_deg = 3.0;
  double scale_base = 0.2;
  double scale_ratio = 1.5;
  int scale_count = 11;
  double scale_max = 11.39;
  RotationMode axes_mode = RotationMode::PerAxis;

  void validate() const;
  std::vector<double> angles() const;
  std::vector<double> scales() const;
};

/// Replicates every sample under the rotation x scale grid. The same similarity
/// is applied to both marker sets, which are then re-standardized. Per-axis
/// mode yields 3 * angles * scales variants per sample (the identity rotation
/// once per axis); combinatorial mode angles^3 * scales.
std::vector<SegmentSample> augment(const std::vector<SegmentSample>& samples, const AugmentConfig& cfg);

struct DeploymentJitter {
  double angular_std_deg = 3.0;
  double axial_std_mm = 0.3;
};

struct ObservationModel {
  CameraProjection camera;
  double noise_std_mm = 0.0;
};

/// Synthetic stand-in for a CT-scanned segment pair: fully-deployed markers on
/// the cylinder, partially-deployed markers on the cone at jittered positions,
/// both posed globally, standardized, and optionally observed in 2D.
SegmentSample simulate_deployment(const StentSegmentSpec& spec, const MarkerPlacements& placements,
                                  const DeploymentJitter& jitter, const RigidTransform& pose, std::uint64_t seed,
                                  const std::optional<ObservationModel>& observation = std::nullopt);

struct FamilyConfig {
  std::string graft_id;
  int segments = 8;
  double r_fd_min = 11.0;
  double r_fd_max = 15.0;
  double r_fc = 4.0;
  double w_g = 2.0;
  double height_min = 15.0;
  double height_max = 20.0;
  std::array<double, kMarkerCount> placement_theta_deg = {0.0, 72.0, 144.0, 216.0, 288.0};
  std::array<double, kMarkerCount> placement_h_frac = {0.15, 0.85, 0.15, 0.85, 0.5};
  double placement_theta_spread_deg = 10.0;
  double placement_h_spread_frac = 0.05;
  std::vector<Fenestration> fenestrations;
  DeploymentJitter jitter;
};

struct SimulationConfig {
  std::uint64_t seed = 0;
  double source_to_detector = 1000.0;
  double source_to_object = 600.0;
  std::optional<CameraProjection> camera;  // overrides the fluoroscope geometry
  double obs_noise_mm = 0.65;
  double pose_tilt_deg = 30.0;
  double pose_translation_mm = 20.0;
  std::vector<FamilyConfig> families;

  void validate() const;
  CameraProjection projection() const;
};

SimulationConfig parse_simulation_config(const std::string& text);
SimulationConfig load_simulation_config(const std::filesystem::path& path);

std::vector<SegmentSample> simulate_dataset(const SimulationConfig& cfg);

struct Fold {
  std::string test_family;
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// One fold per graft family (in order of first appearance): test on it,
/// train on the rest. Needs at least three families.
std::vector<Fold> crossval_split(const std::vector<SegmentSample>& dataset);

constexpr int kDatasetFormatVersion = 1;

void save_dataset(const std::vector<SegmentSample>& samples, const std::filesystem::path& path);
std::vector<SegmentSample> load_dataset(const std::filesystem::path& path);
std::string dataset_to_string(const std::vector<SegmentSample>& samples);
std::vector<SegmentSample> dataset_from_string(const std::string& text, const std::string& source = "<memory>");

/// Splits a 64-bit seed into decorrelated child seeds.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace stentgcn
