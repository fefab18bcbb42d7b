#include "stentgcn/gcn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <string>

#include <json.hpp>

#include "stentgcn/error.hpp"

namespace stentgcn {

using json = nlohmann::json;

void GcnConfig::validate() const {
  if (hidden_layers < 1) throw Error(ErrorKind::InvalidArgument, "hidden_layers must be >= 1");
  if (channels < 1) throw Error(ErrorKind::InvalidArgument, "channels must be >= 1");
  if (kernel_size < 1) throw Error(ErrorKind::InvalidArgument, "kernel_size must be >= 1");
  if (!(leaky_slope > 0.0 && leaky_slope <= 1.0)) {
    // A slope of exactly 1 is accepted so the network can be reduced to a linear map in tests.
    throw Error(ErrorKind::InvalidArgument, "leaky_slope must lie in (0, 1]");
  }
  if (in_channels < 1 || out_channels < 1) {
    throw Error(ErrorKind::InvalidArgument, "in/out channels must be >= 1");
  }
}

std::vector<int> GcnConfig::channel_chain() const {
  std::vector<int> chain;
  chain.push_back(in_channels);
  for (int i = 0; i < hidden_layers; ++i) chain.push_back(channels);
  chain.push_back(out_channels);
  return chain;
}

// ---------------------------------------------------------------------------
// Parameter storage

GcnParams GcnParams::zeros(const GcnConfig& config) {
  config.validate();
  GcnParams p;
  p.chain_ = config.channel_chain();
  p.kernel_size_ = config.kernel_size;
  Eigen::Index offset = 0;
  for (int layer = 0; layer + 1 < static_cast<int>(p.chain_.size()); ++layer) {
    p.layer_offsets_.push_back(offset);
    offset += static_cast<Eigen::Index>(p.kernel_size_) * p.chain_[layer] * p.chain_[layer + 1] +
              p.chain_[layer + 1];
  }
  p.layer_offsets_.push_back(offset);
  p.values_ = Eigen::VectorXd::Zero(offset);
  return p;
}

Eigen::Index GcnParams::theta_offset(int layer, int k) const {
  return layer_offsets_[layer] + static_cast<Eigen::Index>(k) * in_channels(layer) * out_channels(layer);
}

Eigen::Index GcnParams::bias_offset(int layer) const {
  return layer_offsets_[layer] +
         static_cast<Eigen::Index>(kernel_size_) * in_channels(layer) * out_channels(layer);
}

Eigen::Map<Eigen::MatrixXd> GcnParams::theta(int layer, int k) {
  return {values_.data() + theta_offset(layer, k), in_channels(layer), out_channels(layer)};
}

Eigen::Map<const Eigen::MatrixXd> GcnParams::theta(int layer, int k) const {
  return {values_.data() + theta_offset(layer, k), in_channels(layer), out_channels(layer)};
}

Eigen::Map<Eigen::RowVectorXd> GcnParams::bias(int layer) {
  return {values_.data() + bias_offset(layer), out_channels(layer)};
}

Eigen::Map<const Eigen::RowVectorXd> GcnParams::bias(int layer) const {
  return {values_.data() + bias_offset(layer), out_channels(layer)};
}

double GcnParams::theta_norm() const {
  double sq = 0.0;
  for (int layer = 0; layer < layer_count(); ++layer) {
    for (int k = 0; k < kernel_size_; ++k) sq += theta(layer, k).squaredNorm();
  }
  return std::sqrt(sq);
}

std::vector<bool> GcnParams::theta_mask() const {
  std::vector<bool> mask(static_cast<std::size_t>(values_.size()), false);
  for (int layer = 0; layer < layer_count(); ++layer) {
    const Eigen::Index begin = theta_offset(layer, 0);
    const Eigen::Index end = bias_offset(layer);
    for (Eigen::Index i = begin; i < end; ++i) mask[static_cast<std::size_t>(i)] = true;
  }
  return mask;
}

GcnModel GcnModel::zeros(const GcnConfig& config) { return {config, GcnParams::zeros(config)}; }

GcnModel GcnModel::initialize(const GcnConfig& config, std::uint64_t seed) {
  GcnModel model = zeros(config);
  std::mt19937_64 rng(seed);
  for (int layer = 0; layer < model.params.layer_count(); ++layer) {
    const int c_in = model.params.in_channels(layer);
    const int c_out = model.params.out_channels(layer);
    const double half_width = std::sqrt(6.0 / (config.kernel_size * c_in + c_out));
    std::uniform_real_distribution<double> dist(-half_width, half_width);
    for (int k = 0; k < config.kernel_size; ++k) {
      auto theta = model.params.theta(layer, k);
      for (Eigen::Index j = 0; j < theta.cols(); ++j) {
        for (Eigen::Index i = 0; i < theta.rows(); ++i) theta(i, j) = dist(rng);
      }
    }
  }
  return model;
}

// ---------------------------------------------------------------------------
// Forward / backward

namespace {

void check_model(const GcnModel& model, const NodeFeatures& input, const MarkerGraph& graph) {
  if (model.params.layer_count() != model.config.hidden_layers + 1 ||
      model.params.kernel_size() != model.config.kernel_size) {
    throw Error(ErrorKind::ShapeMismatch, "parameters do not match the model configuration");
  }
  if (input.rows() != graph.node_count() || input.cols() != model.config.in_channels) {
    throw Error(ErrorKind::ShapeMismatch, "input must be " + std::to_string(graph.node_count()) + "x" +
                                              std::to_string(model.config.in_channels));
  }
}

/// Expands `input` into its Chebyshev basis T_0 F, T_1 F, ..., T_{K-1} F.
std::vector<NodeFeatures> chebyshev_basis(const Eigen::MatrixXd& Ls, const NodeFeatures& input, int K) {
  std::vector<NodeFeatures> basis;
  basis.reserve(static_cast<std::size_t>(K));
  basis.push_back(input);
  if (K > 1) basis.push_back(Ls * input);
  for (int k = 2; k < K; ++k) basis.push_back(2.0 * (Ls * basis[k - 1]) - basis[k - 2]);
  return basis;
}

double leaky(double x, double slope) { return x > 0.0 ? x : slope * x; }
double leaky_grad(double x, double slope) { return x > 0.0 ? 1.0 : slope; }

/// Adds the data-term gradient of one sample into `grad`, given dL/d(output).
void backpropagate(const GcnModel& model, const MarkerGraph& graph, const ForwardCache& cache,
                   NodeFeatures upstream, GcnParams& grad) {
  const auto& params = model.params;
  const int K = params.kernel_size();
  for (int layer = params.layer_count() - 1; layer >= 0; --layer) {
    const bool hidden = layer + 1 < params.layer_count();
    NodeFeatures g_pre = std::move(upstream);
    if (hidden) {
      const NodeFeatures& pre = cache.pre_activation[layer];
      g_pre = g_pre.binaryExpr(pre, [&](double g, double a) {
        return g * leaky_grad(a, model.config.leaky_slope);
      });
    }
    for (int k = 0; k < K; ++k) {
      grad.theta(layer, k).noalias() += cache.basis[layer][k].transpose() * g_pre;
    }
    grad.bias(layer) += g_pre.colwise().sum();
    if (layer == 0) break;

    std::vector<NodeFeatures> per_order;
    per_order.reserve(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k) per_order.push_back(g_pre * params.theta(layer, k).transpose());
    upstream = chebyshev_combine(graph, per_order);
  }
}

void add_regularizer_gradient(const GcnParams& params, double alpha, GcnParams& grad) {
  const double norm = params.theta_norm();
  if (alpha == 0.0 || norm == 0.0) return;
  const double scale = alpha / norm;
  for (int layer = 0; layer < params.layer_count(); ++layer) {
    for (int k = 0; k < params.kernel_size(); ++k) grad.theta(layer, k) += scale * params.theta(layer, k);
  }
}

NodeFeatures residual_gradient(const NodeFeatures& pred, const NodeFeatures& target) {
  NodeFeatures r = pred - target;
  const double norm = r.norm();
  if (norm == 0.0) return NodeFeatures::Zero(r.rows(), r.cols());
  return r / norm;
}

}  // namespace

ForwardResult forward(const GcnModel& model, const MarkerGraph& graph, const NodeFeatures& input) {
  check_model(model, input, graph);
  const auto& params = model.params;
  const Eigen::MatrixXd& Ls = graph.scaled_laplacian();
  const int K = params.kernel_size();

  ForwardResult result;
  result.cache.basis.reserve(static_cast<std::size_t>(params.layer_count()));
  result.cache.pre_activation.reserve(static_cast<std::size_t>(params.layer_count()));

  NodeFeatures current = input;
  for (int layer = 0; layer < params.layer_count(); ++layer) {
    std::vector<NodeFeatures> basis = chebyshev_basis(Ls, current, K);
    NodeFeatures pre = basis[0] * params.theta(layer, 0);
    for (int k = 1; k < K; ++k) pre.noalias() += basis[k] * params.theta(layer, k);
    pre.rowwise() += params.bias(layer);

    const bool hidden = layer + 1 < params.layer_count();
    current = hidden ? pre.unaryExpr([&](double x) { return leaky(x, model.config.leaky_slope); }).eval()
                     : pre;
    result.cache.basis.push_back(std::move(basis));
    result.cache.pre_activation.push_back(std::move(pre));
  }
  result.output = std::move(current);
  return result;
}

double loss(const NodeFeatures& pred, const NodeFeatures& target, const GcnParams& params, double alpha) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw Error(ErrorKind::ShapeMismatch, "prediction and target shapes differ");
  }
  return (pred - target).norm() + alpha * params.theta_norm();
}

double batch_loss(std::span<const NodeFeatures> preds, std::span<const NodeFeatures> targets,
                  const GcnParams& params, double alpha) {
  if (preds.size() != targets.size() || preds.empty()) {
    throw Error(ErrorKind::ShapeMismatch, "batch prediction/target counts differ or are empty");
  }
  double data = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) data += loss(preds[i], targets[i], params, 0.0);
  return data / static_cast<double>(preds.size()) + alpha * params.theta_norm();
}

GcnParams gradients(const GcnModel& model, const MarkerGraph& graph, const NodeFeatures& input,
                    const NodeFeatures& target, double alpha) {
  ForwardResult fwd = forward(model, graph, input);
  if (target.rows() != fwd.output.rows() || target.cols() != fwd.output.cols()) {
    throw Error(ErrorKind::ShapeMismatch, "target shape does not match network output");
  }
  GcnParams grad = GcnParams::zeros(model.config);
  backpropagate(model, graph, fwd.cache, residual_gradient(fwd.output, target), grad);
  add_regularizer_gradient(model.params, alpha, grad);
  return grad;
}

// ---------------------------------------------------------------------------
// Training

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw Error(ErrorKind::InvalidArgument, "learning_rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw Error(ErrorKind::InvalidArgument, "momentum must lie in [0, 1)");
  if (!(l2_weight >= 0.0)) throw Error(ErrorKind::InvalidArgument, "l2_weight must be nonnegative");
  if (batch_size < 1) throw Error(ErrorKind::InvalidArgument, "batch_size must be >= 1");
  if (!(noise_sigma >= 0.0)) throw Error(ErrorKind::InvalidArgument, "noise_sigma must be nonnegative");
  if (epochs < 0) throw Error(ErrorKind::InvalidArgument, "epochs must be nonnegative");
}

TrainResult train(const GcnModel& model, const MarkerGraph& graph, std::span<const TrainingPair> dataset,
                  const TrainConfig& cfg) {
  cfg.validate();
  model.config.validate();
  if (dataset.empty()) throw Error(ErrorKind::EmptyDataset, "training set is empty");

  GcnModel working = model;
  GcnParams grad = GcnParams::zeros(model.config);
  Eigen::VectorXd velocity = Eigen::VectorXd::Zero(working.params.values().size());

  std::mt19937_64 rng(cfg.rng_seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult result;
  result.loss_history.reserve(static_cast<std::size_t>(cfg.epochs));
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const double count = static_cast<double>(stop - start);
      grad.values().setZero();
      double data_loss = 0.0;
      for (std::size_t i = start; i < stop; ++i) {
        const TrainingPair& pair = dataset[order[i]];
        NodeFeatures input = to_node_features(pair.fully_deployed);
        if (cfg.noise_sigma > 0.0) {
          for (Eigen::Index c = 0; c < input.cols(); ++c) {
            for (Eigen::Index r = 0; r < input.rows(); ++r) input(r, c) += cfg.noise_sigma * noise(rng);
          }
        }
        const NodeFeatures target = to_node_features(pair.partially_deployed);
        ForwardResult fwd = forward(working, graph, input);
        data_loss += (fwd.output - target).norm();
        backpropagate(working, graph, fwd.cache, residual_gradient(fwd.output, target), grad);
      }
      grad.values() /= count;
      add_regularizer_gradient(working.params, cfg.l2_weight, grad);

      const double batch = data_loss / count + cfg.l2_weight * working.params.theta_norm();
      if (!std::isfinite(batch) || !grad.values().allFinite()) {
        throw Error(ErrorKind::NonFiniteLoss, "training diverged at epoch " + std::to_string(epoch));
      }
      velocity = cfg.momentum * velocity - cfg.learning_rate * grad.values();
      working.params.values() += velocity;
      epoch_loss += batch;
      ++batches;
    }
    result.loss_history.push_back(epoch_loss / batches);
  }
  result.params = std::move(working.params);
  return result;
}

NodeFeatures to_node_features(const MarkerSet3D& markers) { return markers.transpose(); }

MarkerSet3D to_marker_set(const NodeFeatures& features) {
  if (features.rows() != kMarkerCount || features.cols() != 3) {
    throw Error(ErrorKind::ShapeMismatch, "expected 5x3 node features");
  }
  return features.transpose();
}

MarkerSet3D predict_references(const GcnModel& model, const MarkerGraph& graph,
                               const MarkerSet3D& fully_deployed_local) {
  if (model.config.in_channels != 3 || model.config.out_channels != 3 || graph.node_count() != kMarkerCount) {
    throw Error(ErrorKind::ShapeMismatch, "reference prediction needs a 3->3 channel model on the 5-marker graph");
  }
  return to_marker_set(forward(model, graph, to_node_features(fully_deployed_local)).output);
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

json config_to_json(const GcnConfig& c) {
  return {{"hidden_layers", c.hidden_layers}, {"channels", c.channels},       {"kernel_size", c.kernel_size},
          {"leaky_slope", c.leaky_slope},     {"in_channels", c.in_channels}, {"out_channels", c.out_channels}};
}

json train_config_to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate}, {"momentum", c.momentum},       {"l2_weight", c.l2_weight},
          {"batch_size", c.batch_size},       {"noise_sigma", c.noise_sigma}, {"epochs", c.epochs},
          {"rng_seed", c.rng_seed}};
}

template <typename T>
T field(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw Error(ErrorKind::ParseError, where + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ParseError, where + ": field '" + key + "' has the wrong type");
  }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  const GcnParams& params = checkpoint.model.params;
  json layers = json::array();
  for (int layer = 0; layer < params.layer_count(); ++layer) {
    const int K = params.kernel_size();
    const int c_in = params.in_channels(layer);
    const int c_out = params.out_channels(layer);
    std::vector<double> theta;
    theta.reserve(static_cast<std::size_t>(K * c_in * c_out));
    for (int k = 0; k < K; ++k) {
      const auto t = params.theta(layer, k);
      for (int i = 0; i < c_in; ++i) {
        for (int j = 0; j < c_out; ++j) theta.push_back(t(i, j));
      }
    }
    const auto b = params.bias(layer);
    layers.push_back({{"theta", {{"shape", {K, c_in, c_out}}, {"values", theta}}},
                      {"bias", std::vector<double>(b.data(), b.data() + b.size())}});
  }
  json doc = {{"format_version", kCheckpointFormatVersion},
              {"config", config_to_json(checkpoint.model.config)},
              {"layers", layers},
              {"train_config", train_config_to_json(checkpoint.train_config)},
              {"final_loss", std::isfinite(checkpoint.final_loss) ? json(checkpoint.final_loss) : json(nullptr)}};
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write checkpoint " + path.string());
  out << doc.dump(1) << '\n';
  if (!out) throw Error(ErrorKind::Io, "failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open checkpoint " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::ParseError, path.string() + ": " + e.what());
  }
  const std::string where = path.string();
  const int version = field<int>(doc, "format_version", where);
  if (version != kCheckpointFormatVersion) {
    throw Error(ErrorKind::SchemaVersionMismatch,
                where + ": checkpoint version " + std::to_string(version) + ", expected " +
                    std::to_string(kCheckpointFormatVersion));
  }
  Checkpoint cp;
  const json& cfg = field<json>(doc, "config", where);
  cp.model.config.hidden_layers = field<int>(cfg, "hidden_layers", where + ".config");
  cp.model.config.channels = field<int>(cfg, "channels", where + ".config");
  cp.model.config.kernel_size = field<int>(cfg, "kernel_size", where + ".config");
  cp.model.config.leaky_slope = field<double>(cfg, "leaky_slope", where + ".config");
  cp.model.config.in_channels = field<int>(cfg, "in_channels", where + ".config");
  cp.model.config.out_channels = field<int>(cfg, "out_channels", where + ".config");
  cp.model.config.validate();
  cp.model.params = GcnParams::zeros(cp.model.config);

  const json& layers = field<json>(doc, "layers", where);
  if (!layers.is_array() || static_cast<int>(layers.size()) != cp.model.params.layer_count()) {
    throw Error(ErrorKind::ParseError, where + ": layer count does not match config");
  }
  for (int layer = 0; layer < cp.model.params.layer_count(); ++layer) {
    const std::string lw = where + ".layers[" + std::to_string(layer) + "]";
    const json& entry = layers[static_cast<std::size_t>(layer)];
    const json& theta = field<json>(entry, "theta", lw);
    const auto shape = field<std::vector<int>>(theta, "shape", lw + ".theta");
    const int K = cp.model.params.kernel_size();
    const int c_in = cp.model.params.in_channels(layer);
    const int c_out = cp.model.params.out_channels(layer);
    if (shape != std::vector<int>{K, c_in, c_out}) {
      throw Error(ErrorKind::ParseError, lw + ": theta shape does not match config");
    }
    const auto values = field<std::vector<double>>(theta, "values", lw + ".theta");
    if (values.size() != static_cast<std::size_t>(K * c_in * c_out)) {
      throw Error(ErrorKind::ParseError, lw + ": theta has " + std::to_string(values.size()) + " values");
    }
    std::size_t idx = 0;
    for (int k = 0; k < K; ++k) {
      auto t = cp.model.params.theta(layer, k);
      for (int i = 0; i < c_in; ++i) {
        for (int j = 0; j < c_out; ++j) t(i, j) = values[idx++];
      }
    }
    const auto bias = field<std::vector<double>>(entry, "bias", lw);
    if (bias.size() != static_cast<std::size_t>(c_out)) {
      throw Error(ErrorKind::ParseError, lw + ": bias has " + std::to_string(bias.size()) + " values");
    }
    for (int j = 0; j < c_out; ++j) cp.model.params.bias(layer)(j) = bias[static_cast<std::size_t>(j)];
  }

  const json& tc = field<json>(doc, "train_config", where);
  cp.train_config.learning_rate = field<double>(tc, "learning_rate", where + ".train_config");
  cp.train_config.momentum = field<double>(tc, "momentum", where + ".train_config");
  cp.train_config.l2_weight = field<double>(tc, "l2_weight", where + ".train_config");
  cp.train_config.batch_size = field<int>(tc, "batch_size", where + ".train_config");
  cp.train_config.noise_sigma = field<double>(tc, "noise_sigma", where + ".train_config");
  cp.train_config.epochs = field<int>(tc, "epochs", where + ".train_config");
  cp.train_config.rng_seed = field<std::uint64_t>(tc, "rng_seed", where + ".train_config");
  const json& fl = field<json>(doc, "final_loss", where);
  cp.final_loss = fl.is_null() ? std::nan("") : fl.get<double>();
  return cp;
}

}  // namespace stentgcn
