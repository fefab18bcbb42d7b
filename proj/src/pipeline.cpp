#include "stentgcn/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "stentgcn/error.hpp"

namespace stentgcn {

using json = nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

const SegmentSample& require_shape_inputs(const SegmentSample& sample) {
  if (!sample.placements) {
    throw Error(ErrorKind::InvalidArgument, "sample " + std::to_string(sample.segment_index) +
                                                " has no marker placements; the mesh cannot be registered");
  }
  return sample;
}

}  // namespace

ShapeInstantiation instantiate_shape(const MarkerSet3D& predicted_local, const SegmentSample& sample,
                                     const MarkerSet2D& observed, const SegmentMesh& mesh_model,
                                     const PnpOptions& pnp) {
  require_shape_inputs(sample);
  if (!sample.camera) throw Error(ErrorKind::InvalidArgument, "sample has no projection matrix");
  ShapeInstantiation out;
  out.markers = instantiate_markers(predicted_local, sample.fully_deployed_local, observed, *sample.camera, pnp);

  // Bring the model into the frame of the aligned references, then pose it.
  const MarkerSet3D model = model_markers(sample.spec, DeploymentState::PartiallyDeployed, *sample.placements);
  const MarkerAlignment to_local = procrustes_align(model, out.markers.aligned_reference);
  const SegmentMesh local_mesh = transform_mesh(mesh_model, to_local.transform);
  const MarkerSet3D local_markers = to_local.transform.apply(model);
  out.mesh = pose_mesh(local_mesh, local_markers, out.markers.pose, out.markers.markers);
  return out;
}

SegmentMesh ground_truth_mesh(const SegmentSample& sample, const SegmentMesh& mesh_model) {
  require_shape_inputs(sample);
  if (!sample.partially_deployed_global) {
    throw Error(ErrorKind::InvalidArgument, "sample has no global ground-truth markers");
  }
  const MarkerSet3D model = model_markers(sample.spec, DeploymentState::PartiallyDeployed, *sample.placements);
  return transform_mesh(mesh_model, procrustes_align(model, *sample.partially_deployed_global).transform);
}

SegmentEvaluation evaluate_segment(const GcnModel& model, const MarkerGraph& graph, const SegmentSample& sample,
                                   const EvaluationOptions& options) {
  SegmentEvaluation row;
  row.graft_id = sample.graft_id;
  row.segment_index = sample.segment_index;
  row.initial_variation = initial_variation(sample);

  auto start = Clock::now();
  const MarkerSet3D predicted = predict_references(model, graph, sample.fully_deployed_local);
  row.timing.predict_ms = elapsed_ms(start);
  row.prediction_mde = mde(procrustes_align(predicted, sample.fully_deployed_local).aligned,
                           sample.partially_deployed_local);

  if (!sample.partially_deployed_global || !sample.camera) return row;
  const MarkerSet3D& truth = *sample.partially_deployed_global;
  const CameraProjection& camera = *sample.camera;

  const bool shapes = options.shape_metrics && sample.placements.has_value();
  SegmentMesh mesh_model;
  SegmentMesh mesh_gt;
  if (shapes) {
    mesh_model = generate_segment_mesh(sample.spec, DeploymentState::PartiallyDeployed);
    mesh_gt = ground_truth_mesh(sample, mesh_model);
  }

  auto run = [&](const MarkerSet2D& observed, bool timed) {
    InstantiationMetrics m;
    const auto t0 = Clock::now();
    MarkerSet3D instantiated;
    if (shapes) {
      const ShapeInstantiation shape = instantiate_shape(predicted, sample, observed, mesh_model, options.pnp);
      if (timed) row.timing.instantiate_ms = elapsed_ms(t0);
      instantiated = shape.markers.markers;
      m.mesh_distance = mesh_distance_error(shape.mesh, mesh_gt);
      m.angular_error = angular_error(instantiated, truth, mesh_gt);
    } else {
      instantiated = instantiate_markers(predicted, sample.fully_deployed_local, observed, camera, options.pnp).markers;
      if (timed) row.timing.instantiate_ms = elapsed_ms(t0);
      m.mesh_distance = std::nan("");
      m.angular_error = std::nan("");
    }
    m.marker_3d_mde = mde(instantiated, truth);
    m.reprojection_2d_mde = mde(project(camera, instantiated), observed);
    return m;
  };

  row.ideal = run(project(camera, truth), true);
  if (sample.observed_2d) row.practical = run(*sample.observed_2d, false);
  return row;
}

// ---------------------------------------------------------------------------
// Reports

ColumnStats column_stats(const std::vector<double>& values) {
  ColumnStats s;
  s.count = values.size();
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  double sq = 0.0;
  for (double v : values) sq += (v - s.mean) * (v - s.mean);
  s.std = values.size() > 1 ? std::sqrt(sq / static_cast<double>(values.size() - 1)) : 0.0;
  return s;
}

const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names = {
      "initial_variation",           "prediction_mde",          "ideal.reprojection_2d_mde",
      "practical.reprojection_2d_mde", "ideal.marker_3d_mde",   "practical.marker_3d_mde",
      "ideal.angular_error",         "practical.angular_error", "ideal.mesh_distance",
      "practical.mesh_distance",     "timing.predict_ms",       "timing.instantiate_ms"};
  return names;
}

namespace {

std::optional<double> metric_of(const SegmentEvaluation& row, const std::string& metric) {
  auto from = [&](const std::optional<InstantiationMetrics>& m, const std::string& field) -> std::optional<double> {
    if (!m) return std::nullopt;
    double v = 0.0;
    if (field == "marker_3d_mde") v = m->marker_3d_mde;
    else if (field == "reprojection_2d_mde") v = m->reprojection_2d_mde;
    else if (field == "angular_error") v = m->angular_error;
    else if (field == "mesh_distance") v = m->mesh_distance;
    else return std::nullopt;
    if (std::isnan(v)) return std::nullopt;
    return v;
  };
  if (metric == "initial_variation") return row.initial_variation;
  if (metric == "prediction_mde") return row.prediction_mde;
  if (metric == "timing.predict_ms") return row.timing.predict_ms;
  if (metric == "timing.instantiate_ms") return row.ideal ? std::optional<double>(row.timing.instantiate_ms) : std::nullopt;
  if (metric.rfind("ideal.", 0) == 0) return from(row.ideal, metric.substr(6));
  if (metric.rfind("practical.", 0) == 0) return from(row.practical, metric.substr(10));
  throw Error(ErrorKind::InvalidArgument, "unknown metric '" + metric + "'");
}

json metrics_json(const std::optional<InstantiationMetrics>& m) {
  if (!m) return nullptr;
  auto num = [](double v) { return std::isnan(v) ? json(nullptr) : json(v); };
  return {{"marker_3d_mde", m->marker_3d_mde},
          {"reprojection_2d_mde", m->reprojection_2d_mde},
          {"angular_error", num(m->angular_error)},
          {"mesh_distance", num(m->mesh_distance)}};
}

}  // namespace

std::vector<double> metric_values(const std::vector<SegmentEvaluation>& rows, const std::string& metric,
                                  const std::string& family) {
  std::vector<double> out;
  for (const auto& row : rows) {
    if (!family.empty() && row.graft_id != family) continue;
    if (auto v = metric_of(row, metric)) out.push_back(*v);
  }
  return out;
}

std::vector<std::string> RunReport::families() const {
  std::vector<std::string> out;
  for (const auto& r : rows) {
    if (std::find(out.begin(), out.end(), r.graft_id) == out.end()) out.push_back(r.graft_id);
  }
  return out;
}

std::vector<std::pair<std::string, ColumnStats>> RunReport::aggregate(const std::string& family) const {
  std::vector<std::pair<std::string, ColumnStats>> out;
  for (const auto& name : metric_names()) out.emplace_back(name, column_stats(metric_values(rows, name, family)));
  return out;
}

nlohmann::json RunReport::to_json() const {
  json j;
  j["format_version"] = 1;
  j["seed"] = seed;
  j["config"] = config;
  j["rows"] = json::array();
  for (const auto& r : rows) {
    j["rows"].push_back({{"graft_id", r.graft_id},
                         {"segment_index", r.segment_index},
                         {"initial_variation", r.initial_variation},
                         {"prediction_mde", r.prediction_mde},
                         {"ideal", metrics_json(r.ideal)},
                         {"practical", metrics_json(r.practical)}});
  }
  auto stats_json = [](const std::vector<std::pair<std::string, ColumnStats>>& stats) {
    json a;
    for (const auto& [name, s] : stats) {
      if (name.rfind("timing.", 0) == 0) continue;
      a[name] = {{"mean", s.mean}, {"std", s.std}, {"count", s.count}};
    }
    return a;
  };
  j["aggregate"] = stats_json(aggregate());
  j["per_family"] = json::object();
  for (const auto& f : families()) j["per_family"][f] = stats_json(aggregate(f));
  return j;
}

std::string RunReport::to_text() const {
  struct Row {
    const char* metric;
    const char* group;
    const char* label;
  };
  static const Row labels[] = {
      {"initial_variation", "Marker refs 3D dist (mm)", "Initial variation"},
      {"prediction_mde", "Marker refs 3D dist (mm)", "Adapted GCN"},
      {"ideal.reprojection_2d_mde", "Instantiation 2D dist (mm)", "Ideal 2D refs"},
      {"practical.reprojection_2d_mde", "Instantiation 2D dist (mm)", "Practical 2D refs"},
      {"ideal.marker_3d_mde", "Instantiation 3D dist (mm)", "Ideal 2D refs"},
      {"practical.marker_3d_mde", "Instantiation 3D dist (mm)", "Practical 2D refs"},
      {"ideal.angular_error", "Shape ang. error (deg)", "Ideal 2D refs"},
      {"practical.angular_error", "Shape ang. error (deg)", "Practical 2D refs"},
      {"ideal.mesh_distance", "Shape mesh dist (mm)", "Ideal 2D refs"},
      {"practical.mesh_distance", "Shape mesh dist (mm)", "Practical 2D refs"}};

  const std::vector<std::string> fams = families();
  std::ostringstream out;
  out << std::fixed << std::setprecision(4);
  out << std::left << std::setw(48) << "Graft family";
  for (const auto& f : fams) out << std::right << std::setw(14) << f;
  out << std::right << std::setw(14) << "all" << '\n';

  out << std::left << std::setw(48) << "Segments";
  for (const auto& f : fams) {
    int lo = 0, hi = 0;
    for (const auto& r : rows) {
      if (r.graft_id != f) continue;
      lo = lo == 0 ? r.segment_index : std::min(lo, r.segment_index);
      hi = std::max(hi, r.segment_index);
    }
    out << std::right << std::setw(14) << (std::to_string(lo) + "-" + std::to_string(hi));
  }
  out << std::right << std::setw(14) << rows.size() << '\n';

  for (const auto& [metric, group, label] : labels) {
    out << std::left << std::setw(28) << group << std::setw(20) << label;
    for (const auto& f : fams) {
      const ColumnStats s = column_stats(metric_values(rows, metric, f));
      if (s.count == 0) out << std::right << std::setw(14) << "-";
      else out << std::right << std::setw(14) << s.mean;
    }
    const ColumnStats all = column_stats(metric_values(rows, metric));
    if (all.count == 0) out << std::right << std::setw(14) << "-";
    else out << std::right << std::setw(14) << all.mean;
    out << '\n';
  }
  return out.str();
}

nlohmann::json RunReport::timing_json() const {
  json j;
  j["train_ms"] = train_ms;
  for (const char* name : {"timing.predict_ms", "timing.instantiate_ms"}) {
    const ColumnStats s = column_stats(metric_values(rows, name));
    j[std::string(name).substr(7)] = {{"mean", s.mean}, {"std", s.std}, {"max", 0.0}, {"count", s.count}};
    double mx = 0.0;
    for (double v : metric_values(rows, name)) mx = std::max(mx, v);
    j[std::string(name).substr(7)]["max"] = mx;
  }
  return j;
}

}  // namespace stentgcn
