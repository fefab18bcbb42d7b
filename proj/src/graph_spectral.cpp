#include "stentgcn/graph_spectral.hpp"

#include <cmath>
#include <string>

#include <Eigen/Eigenvalues>

#include "stentgcn/error.hpp"

namespace stentgcn {

namespace {

void check_adjacency(const Eigen::MatrixXd& W) {
  if (W.rows() != W.cols() || W.rows() == 0) {
    throw Error(ErrorKind::InvalidArgument, "adjacency must be a non-empty square matrix");
  }
  for (Eigen::Index i = 0; i < W.rows(); ++i) {
    if (W(i, i) != 0.0) {
      throw Error(ErrorKind::InvalidArgument, "adjacency diagonal must be zero");
    }
    for (Eigen::Index j = 0; j < W.cols(); ++j) {
      if (!std::isfinite(W(i, j)) || W(i, j) < 0.0) {
        throw Error(ErrorKind::InvalidArgument, "adjacency entries must be finite and nonnegative");
      }
      if (W(i, j) != W(j, i)) {
        throw Error(ErrorKind::InvalidArgument, "adjacency must be symmetric");
      }
    }
  }
}

void check_rows(const MarkerGraph& graph, const NodeFeatures& features) {
  if (features.rows() != graph.node_count()) {
    throw Error(ErrorKind::DimensionMismatch,
                "signal has " + std::to_string(features.rows()) + " rows, graph has " +
                    std::to_string(graph.node_count()) + " nodes");
  }
}

}  // namespace

Eigen::MatrixXd normalized_laplacian(const Eigen::MatrixXd& adjacency) {
  check_adjacency(adjacency);
  const Eigen::VectorXd degree = adjacency.rowwise().sum();
  for (Eigen::Index i = 0; i < degree.size(); ++i) {
    if (!(degree(i) > 0.0)) {
      throw Error(ErrorKind::ZeroDegreeNode, "node " + std::to_string(i) + " has no incident edge");
    }
  }
  const Eigen::VectorXd inv_sqrt = degree.cwiseSqrt().cwiseInverse();
  const Eigen::Index n = adjacency.rows();
  Eigen::MatrixXd L = Eigen::MatrixXd::Identity(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      L(i, j) -= inv_sqrt(i) * adjacency(i, j) * inv_sqrt(j);
    }
  }
  return L;
}

MarkerGraph::MarkerGraph(const Eigen::MatrixXd& adjacency)
    : W_(adjacency), L_(normalized_laplacian(adjacency)) {
  D_ = W_.rowwise().sum().asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(L_);
  if (solver.info() != Eigen::Success) {
    throw Error(ErrorKind::NoConvergence, "Laplacian eigendecomposition failed");
  }
  eigvals_ = solver.eigenvalues();
  eigvecs_ = solver.eigenvectors();
  lambda_max_ = eigvals_(eigvals_.size() - 1);
  const Eigen::Index n = L_.rows();
  if (lambda_max_ > 0.0) {
    L_scaled_ = (2.0 / lambda_max_) * L_ - Eigen::MatrixXd::Identity(n, n);
  } else {
    // Only reachable for an edgeless graph, which normalization already rejects.
    L_scaled_ = -Eigen::MatrixXd::Identity(n, n);
  }
}

MarkerGraph build_marker_graph() {
  const double near = std::exp(-std::pow(5.0 / 4.0, 2));
  const double closing = std::exp(-std::pow(5.0 / 8.0, 2));
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(5, 5);
  for (int i = 0; i < 4; ++i) {
    W(i, i + 1) = W(i + 1, i) = near;
  }
  W(0, 4) = W(4, 0) = closing;
  return MarkerGraph(W);
}

NodeFeatures chebyshev_apply(const MarkerGraph& graph, std::span<const double> theta,
                             const NodeFeatures& features) {
  if (theta.empty()) {
    throw Error(ErrorKind::InvalidArgument, "Chebyshev filter needs at least one coefficient");
  }
  check_rows(graph, features);
  const Eigen::MatrixXd& Ls = graph.scaled_laplacian();

  NodeFeatures t_prev = features;
  NodeFeatures out = theta[0] * t_prev;
  if (theta.size() == 1) return out;

  NodeFeatures t_cur = Ls * features;
  out += theta[1] * t_cur;
  for (std::size_t k = 2; k < theta.size(); ++k) {
    NodeFeatures t_next = 2.0 * (Ls * t_cur) - t_prev;
    out += theta[k] * t_next;
    t_prev = std::move(t_cur);
    t_cur = std::move(t_next);
  }
  return out;
}

NodeFeatures spectral_conv_direct(const MarkerGraph& graph, std::span<const double> theta,
                                  const NodeFeatures& features) {
  if (theta.empty()) {
    throw Error(ErrorKind::InvalidArgument, "Chebyshev filter needs at least one coefficient");
  }
  check_rows(graph, features);
  const Eigen::VectorXd& lambda = graph.eigenvalues();
  const Eigen::MatrixXd& U = graph.eigenvectors();

  Eigen::VectorXd response(lambda.size());
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    const double x = 2.0 * lambda(i) / graph.lambda_max() - 1.0;
    double t_prev = 1.0;
    double t_cur = x;
    double g = theta[0];
    if (theta.size() > 1) g += theta[1] * x;
    for (std::size_t k = 2; k < theta.size(); ++k) {
      const double t_next = 2.0 * x * t_cur - t_prev;
      g += theta[k] * t_next;
      t_prev = t_cur;
      t_cur = t_next;
    }
    response(i) = g;
  }
  return U * response.asDiagonal() * (U.transpose() * features);
}

NodeFeatures chebyshev_combine(const MarkerGraph& graph, std::span<const NodeFeatures> coefficients) {
  if (coefficients.empty()) {
    throw Error(ErrorKind::InvalidArgument, "Chebyshev combination needs at least one term");
  }
  for (const auto& c : coefficients) check_rows(graph, c);
  const Eigen::MatrixXd& Ls = graph.scaled_laplacian();
  const std::size_t K = coefficients.size();
  if (K == 1) return coefficients[0];

  const Eigen::Index rows = coefficients[0].rows();
  const Eigen::Index cols = coefficients[0].cols();
  NodeFeatures b_next = NodeFeatures::Zero(rows, cols);  // b_{k+1}
  NodeFeatures b_next2 = NodeFeatures::Zero(rows, cols);  // b_{k+2}
  for (std::size_t k = K - 1; k >= 1; --k) {
    NodeFeatures b = coefficients[k] + 2.0 * (Ls * b_next) - b_next2;
    b_next2 = std::move(b_next);
    b_next = std::move(b);
  }
  return coefficients[0] + Ls * b_next - b_next2;
}

}  // namespace stentgcn
