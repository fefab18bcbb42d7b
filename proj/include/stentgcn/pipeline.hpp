#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "stentgcn/dataset.hpp"
#include "stentgcn/gcn.hpp"
#include "stentgcn/geometry.hpp"
#include "stentgcn/graph_spectral.hpp"
#include "stentgcn/stent_mesh.hpp"

namespace stentgcn {

/// Marker and shape instantiation quality for one choice of 2D references.
struct InstantiationMetrics {
  double marker_3d_mde = 0.0;        // mm
  double reprojection_2d_mde = 0.0;  // detector mm
  double angular_error = 0.0;        // deg
  double mesh_distance = 0.0;        // mm
};

struct StageTiming {
  double predict_ms = 0.0;
  /// Alignment, PnP, mesh registration and pose with central-point correction.
  double instantiate_ms = 0.0;
};

struct SegmentEvaluation {
  std::string graft_id;
  int segment_index = 0;
  double initial_variation = 0.0;
  double prediction_mde = 0.0;
  std::optional<InstantiationMetrics> ideal;      // 2D references projected from ground truth
  std::optional<InstantiationMetrics> practical;  // observed (noisy) 2D references
  StageTiming timing;
};

struct EvaluationOptions {
  bool shape_metrics = true;  // meshes are the expensive part
  PnpOptions pnp;
};

/// The instantiated partially-deployed mesh and markers for one observation.
struct ShapeInstantiation {
  MarkerInstantiation markers;
  SegmentMesh mesh;
};

/// Predicted references -> aligned references -> pose -> posed, corrected mesh.
/// `mesh_model` must be the partially-deployed model mesh of `sample.spec`.
ShapeInstantiation instantiate_shape(const MarkerSet3D& predicted_local, const SegmentSample& sample,
                                     const MarkerSet2D& observed, const SegmentMesh& mesh_model,
                                     const PnpOptions& pnp = {});

/// Ground-truth segment surface: the model registered onto the ground-truth global markers.
SegmentMesh ground_truth_mesh(const SegmentSample& sample, const SegmentMesh& mesh_model);

SegmentEvaluation evaluate_segment(const GcnModel& model, const MarkerGraph& graph, const SegmentSample& sample,
                                   const EvaluationOptions& options = {});

struct ColumnStats {
  double mean = 0.0;
  double std = 0.0;
  std::size_t count = 0;
};

ColumnStats column_stats(const std::vector<double>& values);

struct RunReport {
  std::vector<SegmentEvaluation> rows;
  nlohmann::json config;
  std::uint64_t seed = 0;
  double train_ms = 0.0;

  /// Metric name -> stats over all rows (or over one family).
  std::vector<std::pair<std::string, ColumnStats>> aggregate(const std::string& family = {}) const;
  std::vector<std::string> families() const;

  /// Deterministic for a fixed seed: wall-clock timings are kept out of it.
  nlohmann::json to_json() const;
  /// Stage timings, written to a separate sidecar.
  nlohmann::json timing_json() const;
  /// Human-readable table, one column per graft family.
  std::string to_text() const;
};

/// Metric column names in report order.
const std::vector<std::string>& metric_names();
/// Values of one metric over the selected rows; rows lacking the metric are skipped.
std::vector<double> metric_values(const std::vector<SegmentEvaluation>& rows, const std::string& metric,
                                  const std::string& family = {});

}  // namespace stentgcn
