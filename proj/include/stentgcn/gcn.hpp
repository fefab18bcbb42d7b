#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "stentgcn/graph_spectral.hpp"
#include "stentgcn/types.hpp"

namespace stentgcn {

struct GcnConfig {
  int hidden_layers = 8;
  int channels = 32;
  int kernel_size = 2;  // Chebyshev order K
  double leaky_slope = 0.1;
  int in_channels = 3;
  int out_channels = 3;

  void validate() const;
  /// Channel count entering each layer, plus the final output width.
  std::vector<int> channel_chain() const;
};

/// Trainable state of the network: per layer, K filter matrices of shape
/// C_in x C_out and one bias per output channel. All values live in a single
/// flat vector so that optimizers and gradient checks can treat them uniformly.
class GcnParams {
 public:
  GcnParams() = default;
  static GcnParams zeros(const GcnConfig& config);

  int layer_count() const { return static_cast<int>(chain_.size()) - 1; }
  int kernel_size() const { return kernel_size_; }
  int in_channels(int layer) const { return chain_[layer]; }
  int out_channels(int layer) const { return chain_[layer + 1]; }

  Eigen::Map<Eigen::MatrixXd> theta(int layer, int k);
  Eigen::Map<const Eigen::MatrixXd> theta(int layer, int k) const;
  Eigen::Map<Eigen::RowVectorXd> bias(int layer);
  Eigen::Map<const Eigen::RowVectorXd> bias(int layer) const;

  Eigen::VectorXd& values() { return values_; }
  const Eigen::VectorXd& values() const { return values_; }

  /// Euclidean norm over every filter coefficient, biases excluded.
  double theta_norm() const;
  /// True for flat indices holding filter coefficients, false for biases.
  std::vector<bool> theta_mask() const;

  bool same_shape(const GcnParams& other) const {
    return chain_ == other.chain_ && kernel_size_ == other.kernel_size_;
  }

 private:
  Eigen::Index theta_offset(int layer, int k) const;
  Eigen::Index bias_offset(int layer) const;

  std::vector<int> chain_;
  int kernel_size_ = 0;
  std::vector<Eigen::Index> layer_offsets_;
  Eigen::VectorXd values_;
};

struct GcnModel {
  GcnConfig config;
  GcnParams params;

  /// Zero-mean uniform init with half-width sqrt(6 / (K*C_in + C_out)), zero biases.
  static GcnModel initialize(const GcnConfig& config, std::uint64_t seed);
  static GcnModel zeros(const GcnConfig& config);
};

struct ForwardCache {
  /// basis[i][k] = T_k(L_scaled) * F^{i}, the input of layer i expanded per order.
  std::vector<std::vector<NodeFeatures>> basis;
  /// Pre-activation of every layer.
  std::vector<NodeFeatures> pre_activation;
};

struct ForwardResult {
  NodeFeatures output;
  ForwardCache cache;
};

ForwardResult forward(const GcnModel& model, const MarkerGraph& graph, const NodeFeatures& input);

/// ||pred - target||_F + alpha * ||theta||_2.
double loss(const NodeFeatures& pred, const NodeFeatures& target, const GcnParams& params, double alpha);

/// Mean data term over the batch plus the regularizer once.
double batch_loss(std::span<const NodeFeatures> preds, std::span<const NodeFeatures> targets,
                  const GcnParams& params, double alpha);

/// Exact gradient of loss(forward(input), target, params, alpha).
GcnParams gradients(const GcnModel& model, const MarkerGraph& graph, const NodeFeatures& input,
                    const NodeFeatures& target, double alpha);

struct TrainConfig {
  double learning_rate = 1e-4;
  double momentum = 0.9;
  double l2_weight = 5e-4;
  int batch_size = 10;
  double noise_sigma = 0.1;  // mm, standard deviation of input corruption
  int epochs = 1;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

struct TrainingPair {
  MarkerSet3D fully_deployed;
  MarkerSet3D partially_deployed;
};

struct TrainResult {
  GcnParams params;
  /// Mean mini-batch loss per epoch.
  std::vector<double> loss_history;
};

/// Mini-batch momentum SGD with fresh Gaussian input noise per presentation.
TrainResult train(const GcnModel& model, const MarkerGraph& graph, std::span<const TrainingPair> dataset,
                  const TrainConfig& cfg);

/// Noise-free inference of partially-deployed references from fully-deployed markers.
MarkerSet3D predict_references(const GcnModel& model, const MarkerGraph& graph,
                               const MarkerSet3D& fully_deployed_local);

NodeFeatures to_node_features(const MarkerSet3D& markers);
MarkerSet3D to_marker_set(const NodeFeatures& features);

struct Checkpoint {
  GcnModel model;
  TrainConfig train_config;
  double final_loss = 0.0;
};

constexpr int kCheckpointFormatVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace stentgcn
