#include "stentgcn/commands.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>

namespace stentgcn {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorKind::Io, "failed writing " + path.string());
}

void require_out(const CommonArgs& args, const char* what) {
  if (args.out.empty()) throw Error(ErrorKind::InvalidArgument, std::string("--out is required for ") + what);
}

json parse_json(const std::string& text, const std::string& source) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::ParseError, source + ": " + e.what());
  }
}

void reject_unknown(const json& obj, const std::set<std::string>& known, const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    if (!known.count(key)) throw Error(ErrorKind::ParseError, where + ": unknown key '" + key + "'");
  }
}

template <class T>
void read_field(const json& obj, const char* key, T& target, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    target = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorKind::ParseError, where + "." + key + ": wrong type");
  }
}

json marker_json(const Eigen::MatrixXd& m) {
  json out = json::array();
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    json p = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) p.push_back(m(r, c));
    out.push_back(p);
  }
  return out;
}

json transform_json(const RigidTransform& t) {
  json r = json::array();
  for (int i = 0; i < 3; ++i) r.push_back({t.R(i, 0), t.R(i, 1), t.R(i, 2)});
  return {{"R", r}, {"t", {t.t(0), t.t(1), t.t(2)}}};
}

std::vector<SegmentSample> load_nonempty(const fs::path& path) {
  auto samples = load_dataset(path);
  if (samples.empty()) throw Error(ErrorKind::EmptyDataset, path.string() + " holds no samples");
  return samples;
}

TrainSettings settings_from(const CommonArgs& args, const TrainOverrides& overrides) {
  TrainSettings s = args.config.empty() ? TrainSettings{} : load_train_settings(args.config);
  if (overrides.epochs) s.train.epochs = *overrides.epochs;
  if (overrides.learning_rate) s.train.learning_rate = *overrides.learning_rate;
  if (overrides.batch_size) s.train.batch_size = *overrides.batch_size;
  if (overrides.no_augment) s.augment = false;
  s.validate();
  return s;
}

std::string label(const SegmentSample& s) { return s.graft_id + "_" + std::to_string(s.segment_index); }

}  // namespace

ExitCode exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Io:
    case ErrorKind::ParseError:
    case ErrorKind::SchemaVersionMismatch:
      return ExitCode::Io;
    case ErrorKind::NonFiniteLoss:
    case ErrorKind::NoConvergence:
    case ErrorKind::DegenerateConfiguration:
    case ErrorKind::PointOnPrincipalPlane:
    case ErrorKind::DegenerateReference:
      return ExitCode::Numerical;
    default:
      return ExitCode::Validation;
  }
}

// ---------------------------------------------------------------------------
// Settings

void TrainSettings::validate() const {
  gcn.validate();
  train.validate();
  if (augment) augmentation.validate();
}

json TrainSettings::to_json() const {
  return {
      {"gcn",
       {{"hidden_layers", gcn.hidden_layers},
        {"channels", gcn.channels},
        {"kernel_size", gcn.kernel_size},
        {"leaky_slope", gcn.leaky_slope}}},
      {"train",
       {{"learning_rate", train.learning_rate},
        {"momentum", train.momentum},
        {"l2_weight", train.l2_weight},
        {"batch_size", train.batch_size},
        {"noise_sigma", train.noise_sigma},
        {"epochs", train.epochs}}},
      {"augment",
       {{"enabled", augment},
        {"rot_min_deg", augmentation.rot_min_deg},
        {"rot_max_deg", augmentation.rot_max_deg},
        {"rot_step_deg", augmentation.rot_step_deg},
        {"scale_base", augmentation.scale_base},
        {"scale_ratio", augmentation.scale_ratio},
        {"scale_count", augmentation.scale_count},
        {"scale_max", augmentation.scale_max},
        {"axes_mode", augmentation.axes_mode == RotationMode::PerAxis ? "per-axis" : "combinatorial"}}},
  };
}

TrainSettings parse_train_settings(const std::string& text) {
  const json doc = parse_json(text, "train settings");
  if (!doc.is_object()) throw Error(ErrorKind::ParseError, "train settings: expected an object");
  reject_unknown(doc, {"gcn", "train", "augment"}, "train settings");
  TrainSettings s;
  if (doc.contains("gcn")) {
    const json& g = doc["gcn"];
    reject_unknown(g, {"hidden_layers", "channels", "kernel_size", "leaky_slope"}, "gcn");
    read_field(g, "hidden_layers", s.gcn.hidden_layers, "gcn");
    read_field(g, "channels", s.gcn.channels, "gcn");
    read_field(g, "kernel_size", s.gcn.kernel_size, "gcn");
    read_field(g, "leaky_slope", s.gcn.leaky_slope, "gcn");
  }
  if (doc.contains("train")) {
    const json& t = doc["train"];
    reject_unknown(t, {"learning_rate", "momentum", "l2_weight", "batch_size", "noise_sigma", "epochs"}, "train");
    read_field(t, "learning_rate", s.train.learning_rate, "train");
    read_field(t, "momentum", s.train.momentum, "train");
    read_field(t, "l2_weight", s.train.l2_weight, "train");
    read_field(t, "batch_size", s.train.batch_size, "train");
    read_field(t, "noise_sigma", s.train.noise_sigma, "train");
    read_field(t, "epochs", s.train.epochs, "train");
  }
  if (doc.contains("augment")) {
    const json& a = doc["augment"];
    reject_unknown(a,
                   {"enabled", "rot_min_deg", "rot_max_deg", "rot_step_deg", "scale_base", "scale_ratio",
                    "scale_count", "scale_max", "axes_mode"},
                   "augment");
    read_field(a, "enabled", s.augment, "augment");
    read_field(a, "rot_min_deg", s.augmentation.rot_min_deg, "augment");
    read_field(a, "rot_max_deg", s.augmentation.rot_max_deg, "augment");
    read_field(a, "rot_step_deg", s.augmentation.rot_step_deg, "augment");
    read_field(a, "scale_base", s.augmentation.scale_base, "augment");
    read_field(a, "scale_ratio", s.augmentation.scale_ratio, "augment");
    read_field(a, "scale_count", s.augmentation.scale_count, "augment");
    read_field(a, "scale_max", s.augmentation.scale_max, "augment");
    std::string mode = "per-axis";
    read_field(a, "axes_mode", mode, "augment");
    if (mode == "per-axis") {
      s.augmentation.axes_mode = RotationMode::PerAxis;
    } else if (mode == "combinatorial") {
      s.augmentation.axes_mode = RotationMode::Combinatorial;
    } else {
      throw Error(ErrorKind::ParseError, "augment.axes_mode: expected 'per-axis' or 'combinatorial', found '" + mode +
                                             "'");
    }
  }
  s.validate();
  return s;
}

TrainSettings load_train_settings(const fs::path& path) { return parse_train_settings(read_text(path)); }

// ---------------------------------------------------------------------------
// Workflows

TrainOutcome train_model(const std::vector<SegmentSample>& samples, const TrainSettings& settings,
                         std::uint64_t seed) {
  settings.validate();
  const std::vector<SegmentSample> data = settings.augment ? augment(samples, settings.augmentation) : samples;
  std::vector<TrainingPair> pairs;
  pairs.reserve(data.size());
  for (const auto& s : data) pairs.push_back({s.fully_deployed_local, s.partially_deployed_local});

  TrainConfig cfg = settings.train;
  cfg.rng_seed = derive_seed(seed, 2);
  const GcnModel init = GcnModel::initialize(settings.gcn, derive_seed(seed, 1));
  const MarkerGraph graph = build_marker_graph();

  TrainOutcome out;
  out.training_pairs = pairs.size();
  const auto t0 = Clock::now();
  if (cfg.epochs == 0) {
    out.checkpoint = {init, cfg, std::nan("")};
  } else {
    if (pairs.empty()) throw Error(ErrorKind::EmptyDataset, "no training samples");
    TrainResult r = train(init, graph, pairs, cfg);
    out.loss_history = std::move(r.loss_history);
    GcnModel trained = init;
    trained.params = std::move(r.params);
    out.checkpoint = {std::move(trained), cfg, out.loss_history.back()};
  }
  out.train_ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
  return out;
}

RunReport evaluate_dataset(const GcnModel& model, const std::vector<SegmentSample>& samples,
                           const EvaluationOptions& options) {
  const MarkerGraph graph = build_marker_graph();
  RunReport report;
  report.rows.reserve(samples.size());
  for (const auto& s : samples) report.rows.push_back(evaluate_segment(model, graph, s, options));
  return report;
}

CrossvalResult run_crossval(const std::vector<SegmentSample>& samples, const TrainSettings& settings,
                            std::uint64_t seed, const EvaluationOptions& options) {
  CrossvalResult out;
  const auto folds = crossval_split(samples);
  for (std::size_t f = 0; f < folds.size(); ++f) {
    std::vector<SegmentSample> train_set;
    std::vector<SegmentSample> test_set;
    for (auto i : folds[f].train) train_set.push_back(samples[i]);
    for (auto i : folds[f].test) test_set.push_back(samples[i]);
    const TrainOutcome trained = train_model(train_set, settings, derive_seed(seed, 100 + f));
    FoldReport fr{folds[f], evaluate_dataset(trained.checkpoint.model, test_set, options)};
    fr.report.seed = seed;
    fr.report.train_ms = trained.train_ms;
    fr.report.config = {{"settings", settings.to_json()},
                        {"test_family", folds[f].test_family},
                        {"training_pairs", trained.training_pairs},
                        {"final_loss", trained.loss_history.empty() ? json(nullptr) : json(trained.loss_history.back())}};
    out.combined.rows.insert(out.combined.rows.end(), fr.report.rows.begin(), fr.report.rows.end());
    out.combined.train_ms += trained.train_ms;
    out.folds.push_back(std::move(fr));
  }
  out.combined.seed = seed;
  out.combined.config = {{"settings", settings.to_json()}, {"folds", folds.size()}};
  return out;
}

void write_report(const RunReport& report, const fs::path& stem) {
  const std::string base = stem.string();
  write_text(base + ".txt", report.to_text());
  write_text(base + ".json", report.to_json().dump(2) + "\n");
  write_text(base + ".timing.json", report.timing_json().dump(2) + "\n");
}

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag, std::ostream& log) {
  if (flag) return *flag;
  std::random_device rd;
  const std::uint64_t seed = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  log << "seed: " << seed << " (generated; pass --seed " << seed << " to reproduce)\n";
  return seed;
}

// ---------------------------------------------------------------------------
// Commands

void cmd_simulate(const CommonArgs& args, std::ostream& log) {
  if (args.config.empty()) throw Error(ErrorKind::InvalidArgument, "--config is required for simulate");
  require_out(args, "simulate");
  const std::string text = read_text(args.config);
  SimulationConfig cfg = parse_simulation_config(text);
  if (args.seed) {
    cfg.seed = *args.seed;
  } else if (!parse_json(text, args.config.string()).contains("seed")) {
    cfg.seed = resolve_seed(std::nullopt, args.quiet ? std::cerr : log);
  }
  const auto samples = simulate_dataset(cfg);
  save_dataset(samples, args.out);
  if (!args.quiet) {
    std::map<std::string, std::pair<int, double>> per_family;
    for (const auto& s : samples) {
      auto& [n, iv] = per_family[s.graft_id];
      ++n;
      iv += initial_variation(s);
    }
    log << "wrote " << samples.size() << " segments to " << args.out.string() << " (seed " << cfg.seed << ")\n";
    for (const auto& [family, stats] : per_family) {
      log << "  " << family << ": " << stats.first << " segments, mean initial variation "
          << stats.second / stats.first << " mm\n";
    }
  }
}

void cmd_train(const CommonArgs& args, const fs::path& dataset, const TrainOverrides& overrides, std::ostream& log) {
  require_out(args, "train");
  const TrainSettings settings = settings_from(args, overrides);
  const auto samples = load_nonempty(dataset);
  const std::uint64_t seed = resolve_seed(args.seed, args.quiet ? std::cerr : log);
  if (!args.quiet) {
    log << "training: lr=" << settings.train.learning_rate << " momentum=" << settings.train.momentum
        << " alpha=" << settings.train.l2_weight << " batch=" << settings.train.batch_size
        << " noise=" << settings.train.noise_sigma << " epochs=" << settings.train.epochs
        << " augment=" << (settings.augment ? "on" : "off") << "\n";
  }
  const TrainOutcome out = train_model(samples, settings, seed);
  save_checkpoint(args.out, out.checkpoint);

  json curve = {{"seed", seed}, {"training_pairs", out.training_pairs}, {"loss", out.loss_history}};
  fs::path curve_path = args.out;
  curve_path.replace_extension(".loss.json");
  write_text(curve_path, curve.dump(2) + "\n");
  if (!args.quiet) {
    log << "trained on " << out.training_pairs << " pairs in " << out.train_ms / 1000.0 << " s";
    if (!out.loss_history.empty()) log << ", final loss " << out.loss_history.back();
    log << "\nwrote " << args.out.string() << " and " << curve_path.string() << "\n";
  }
}

void cmd_predict(const CommonArgs& args, const fs::path& dataset, const fs::path& model, std::ostream& log) {
  require_out(args, "predict");
  const auto samples = load_nonempty(dataset);
  const Checkpoint ckpt = load_checkpoint(model);
  const MarkerGraph graph = build_marker_graph();
  json rows = json::array();
  double total = 0.0;
  for (const auto& s : samples) {
    const MarkerSet3D pred = predict_references(ckpt.model, graph, s.fully_deployed_local);
    const MarkerAlignment aligned = procrustes_align(pred, s.fully_deployed_local);
    const double err = mde(aligned.aligned, s.partially_deployed_local);
    total += err;
    rows.push_back({{"graft_id", s.graft_id},
                    {"segment_index", s.segment_index},
                    {"predicted_local", marker_json(pred)},
                    {"aligned_reference", marker_json(aligned.aligned)},
                    {"prediction_mde", err},
                    {"initial_variation", initial_variation(s)}});
  }
  write_text(args.out, json{{"format_version", 1}, {"predictions", rows}}.dump(2) + "\n");
  if (!args.quiet) {
    log << "predicted " << samples.size() << " segments, mean prediction MDE "
        << total / static_cast<double>(samples.size()) << " mm\nwrote " << args.out.string() << "\n";
  }
}

void cmd_instantiate(const CommonArgs& args, const InstantiateArgs& inputs, std::ostream& log) {
  require_out(args, "instantiate");
  auto samples = load_nonempty(inputs.dataset);
  if (inputs.index) {
    if (*inputs.index < 0 || static_cast<std::size_t>(*inputs.index) >= samples.size()) {
      throw Error(ErrorKind::InvalidArgument, "--index " + std::to_string(*inputs.index) + " outside [0, " +
                                                  std::to_string(samples.size()) + ")");
    }
    samples = {samples[static_cast<std::size_t>(*inputs.index)]};
  }
  const Checkpoint ckpt = load_checkpoint(inputs.model);
  const MarkerGraph graph = build_marker_graph();
  const std::optional<CameraProjection> camera =
      inputs.projection ? std::optional(load_projection(*inputs.projection)) : std::nullopt;

  fs::create_directories(args.out);
  for (auto& s : samples) {
    if (camera) s.camera = camera;
    if (!s.camera) throw Error(ErrorKind::InvalidArgument, label(s) + ": no projection matrix");
    MarkerSet2D observed;
    if (inputs.ideal) {
      if (!s.partially_deployed_global) throw Error(ErrorKind::InvalidArgument, label(s) + ": no ground truth");
      observed = project(*s.camera, *s.partially_deployed_global);
    } else {
      if (!s.observed_2d) throw Error(ErrorKind::InvalidArgument, label(s) + ": no observed 2D markers");
      observed = *s.observed_2d;
    }
    const MarkerSet3D pred = predict_references(ckpt.model, graph, s.fully_deployed_local);
    const SegmentMesh model_mesh = generate_segment_mesh(s.spec, DeploymentState::PartiallyDeployed);
    const ShapeInstantiation shape = instantiate_shape(pred, s, observed, model_mesh);

    const fs::path stem = args.out / label(s);
    export_mesh(shape.mesh, stem.string() + ".obj", stem.string() + ".mesh.json");
    const json markers = {{"format_version", 1},
                          {"graft_id", s.graft_id},
                          {"segment_index", s.segment_index},
                          {"markers", marker_json(shape.markers.markers)},
                          {"aligned_reference", marker_json(shape.markers.aligned_reference)},
                          {"pose", transform_json(shape.markers.pose)},
                          {"rms_residual", shape.markers.rms_residual}};
    write_text(stem.string() + ".markers.json", markers.dump(2) + "\n");
    if (!args.quiet) {
      log << label(s) << ": " << shape.mesh.vertices.cols() << " vertices, reprojection rms "
          << shape.markers.rms_residual << " mm\n";
    }
  }
  if (!args.quiet) log << "wrote " << samples.size() << " instantiations to " << args.out.string() << "\n";
}

void cmd_evaluate(const CommonArgs& args, const fs::path& dataset, const fs::path& model, bool shape_metrics,
                  std::ostream& log) {
  require_out(args, "evaluate");
  const auto samples = load_nonempty(dataset);
  const Checkpoint ckpt = load_checkpoint(model);
  EvaluationOptions options;
  options.shape_metrics = shape_metrics;
  RunReport report = evaluate_dataset(ckpt.model, samples, options);
  report.seed = ckpt.train_config.rng_seed;
  report.config = {{"dataset", dataset.filename().string()},
                   {"model", model.filename().string()},
                   {"shape_metrics", shape_metrics}};
  write_report(report, args.out);
  if (!args.quiet) log << report.to_text() << "wrote " << args.out.string() << ".{txt,json,timing.json}\n";
}

void cmd_crossval(const CommonArgs& args, const fs::path& dataset, const TrainOverrides& overrides,
                  bool shape_metrics, std::ostream& log) {
  require_out(args, "crossval");
  const TrainSettings settings = settings_from(args, overrides);
  const auto samples = load_nonempty(dataset);
  const std::uint64_t seed = resolve_seed(args.seed, args.quiet ? std::cerr : log);
  EvaluationOptions options;
  options.shape_metrics = shape_metrics;
  const CrossvalResult result = run_crossval(samples, settings, seed, options);
  fs::create_directories(args.out);
  for (const auto& f : result.folds) {
    write_report(f.report, args.out / ("fold_" + f.fold.test_family));
    if (!args.quiet) {
      log << "fold " << f.fold.test_family << ": trained on " << f.fold.train.size() << " segments, tested on "
          << f.fold.test.size() << "\n";
    }
  }
  write_report(result.combined, args.out / "crossval");
  if (!args.quiet) log << result.combined.to_text() << "wrote " << (args.out / "crossval").string() << ".*\n";
}

}  // namespace stentgcn
