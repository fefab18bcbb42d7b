#pragma once

#include <span>

#include <Eigen/Core>

namespace stentgcn {

/// Node signals, one row per graph node and one column per channel.
using NodeFeatures = Eigen::MatrixXd;

/// Weighted undirected graph together with its normalized Laplacian and
/// spectral decomposition. Immutable after construction.
class MarkerGraph {
 public:
  /// Throws ZeroDegreeNode for an isolated node, InvalidArgument when W is not
  /// square, symmetric, nonnegative with zero diagonal.
  explicit MarkerGraph(const Eigen::MatrixXd& adjacency);

  int node_count() const { return static_cast<int>(W_.rows()); }

  const Eigen::MatrixXd& adjacency() const { return W_; }
  const Eigen::MatrixXd& degree() const { return D_; }
  const Eigen::MatrixXd& laplacian() const { return L_; }
  /// Ascending.
  const Eigen::VectorXd& eigenvalues() const { return eigvals_; }
  /// Orthonormal columns, matching eigenvalues().
  const Eigen::MatrixXd& eigenvectors() const { return eigvecs_; }
  double lambda_max() const { return lambda_max_; }
  /// 2L/lambda_max - I, the domain of the Chebyshev recursion.
  const Eigen::MatrixXd& scaled_laplacian() const { return L_scaled_; }

 private:
  Eigen::MatrixXd W_;
  Eigen::MatrixXd D_;
  Eigen::MatrixXd L_;
  Eigen::VectorXd eigvals_;
  Eigen::MatrixXd eigvecs_;
  double lambda_max_ = 0.0;
  Eigen::MatrixXd L_scaled_;
};

/// The five-marker cycle 1-2-3-4-5-1. Neighbouring markers are weighted
/// exp(-(5/4)^2); the closing edge between markers 5 and 1 exp(-(5/8)^2).
MarkerGraph build_marker_graph();

/// D^{-1/2} (D - W) D^{-1/2}.
Eigen::MatrixXd normalized_laplacian(const Eigen::MatrixXd& adjacency);

/// sum_k theta_k T_k(L_scaled) F by the three-term recursion on the signal.
/// Every column of F is filtered independently.
NodeFeatures chebyshev_apply(const MarkerGraph& graph, std::span<const double> theta,
                             const NodeFeatures& features);

/// U g(Lambda') U^T F with the same Chebyshev filter evaluated on the spectrum.
/// Reference path for tests.
NodeFeatures spectral_conv_direct(const MarkerGraph& graph, std::span<const double> theta,
                                  const NodeFeatures& features);

/// sum_k T_k(L_scaled) C_k for per-order coefficient signals C_k (Clenshaw).
/// Used by backpropagation, where each order has its own upstream signal.
NodeFeatures chebyshev_combine(const MarkerGraph& graph, std::span<const NodeFeatures> coefficients);

}  // namespace stentgcn
