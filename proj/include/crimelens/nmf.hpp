#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace crimelens {

/// Sparse NMF settings. Defaults follow the hotspot view: rank 3, ten restarts.
struct NmfConfig {
    int rank = 3;
    /// Frobenius weight on W.
    double sparsity_w = 0.01;
    /// Weight on the squared L1 norm of each row of W. Discourages a site
    /// from loading on several hotspots.
    double row_sparsity_w = 0.1;
    /// Weight on the squared L1 norm of each column of H. Unset means
    /// 0.01 * max(X)^2.
    std::optional<double> sparsity_h;
    int max_iters = 500;
    double rel_tol = 1e-4;
    int restarts = 10;
    std::uint64_t seed = 0;
};

/// Non-negative least squares on the normal equations: minimizes
/// 0.5 x'Gx - b'x subject to x >= 0 (Lawson-Hanson active set).
Eigen::VectorXd nnls_gram(const Eigen::MatrixXd& gram, const Eigen::VectorXd& rhs);

/// Column-wise nnls_gram for every column of `rhs`.
Eigen::MatrixXd nnls_gram_columns(const Eigen::MatrixXd& gram, const Eigen::MatrixXd& rhs);

/// ||X - WH||_F^2 + eta ||W||_F^2 + alpha sum_i ||W(i,:)||_1^2 + beta sum_j ||H(:,j)||_1^2
double snmf_objective(const Eigen::MatrixXd& X, const Eigen::MatrixXd& W, const Eigen::MatrixXd& H, double eta,
                      double alpha, double beta);

double residual_norm2(const Eigen::MatrixXd& X, const Eigen::MatrixXd& W, const Eigen::MatrixXd& H);

struct RestartTrace {
    std::vector<double> objective;  // penalized objective, initial then one entry per iteration
    double residual = 0.0;          // final ||X - WH||^2
    int iterations = 0;
    bool converged = false;
};

struct NmfSolution {
    Eigen::MatrixXd W;  // m x k
    Eigen::MatrixXd H;  // k x n
    double residual = 0.0;   // ||X - WH||^2 of the kept restart
    double objective = 0.0;  // penalized objective of the kept restart
    std::size_t best_restart = 0;
    std::vector<RestartTrace> restarts;
    double sparsity_w = 0.0;
    double sparsity_h = 0.0;
    bool degenerate = false;
};

/// Called after every half-step with (restart, iteration, W, H).
using IterateObserver =
    std::function<void(std::size_t, int, const Eigen::MatrixXd&, const Eigen::MatrixXd&)>;

/// Alternating non-negative least squares for
///   min ||X - WH||^2 + eta ||W||^2 + alpha sum_i ||w^i||_1^2 + beta sum_j ||h_j||_1^2
/// subject to W, H >= 0. Each half-step is an exact NNLS solve, so the
/// penalized objective never increases within a restart. Runs cfg.restarts
/// seeded restarts and keeps the smallest final penalized objective (ties:
/// lowest restart index). Throws InputError for negative input or a rank
/// above min(m, n).
NmfSolution sparse_nmf(const Eigen::MatrixXd& X, const NmfConfig& cfg, const IterateObserver& observer = {});

}  // namespace crimelens
