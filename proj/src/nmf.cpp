#include "crimelens/nmf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>

#include "crimelens/core.hpp"

namespace crimelens {

Eigen::VectorXd nnls_gram(const Eigen::MatrixXd& gram, const Eigen::VectorXd& rhs) {
    const Eigen::Index k = rhs.size();
    Eigen::VectorXd x = Eigen::VectorXd::Zero(k);
    std::vector<bool> passive(static_cast<std::size_t>(k), false);

    const double scale = std::max({gram.cwiseAbs().maxCoeff(), rhs.cwiseAbs().maxCoeff(), 1e-300});
    const double tol = 1e-12 * scale * static_cast<double>(std::max<Eigen::Index>(k, 1));

    auto solve_passive = [&]() {
        std::vector<Eigen::Index> idx;
        for (Eigen::Index i = 0; i < k; ++i)
            if (passive[static_cast<std::size_t>(i)]) idx.push_back(i);
        Eigen::VectorXd s = Eigen::VectorXd::Zero(k);
        if (idx.empty()) return s;
        const auto p = static_cast<Eigen::Index>(idx.size());
        Eigen::MatrixXd g(p, p);
        Eigen::VectorXd b(p);
        for (Eigen::Index a = 0; a < p; ++a) {
            b(a) = rhs(idx[a]);
            for (Eigen::Index c = 0; c < p; ++c) g(a, c) = gram(idx[a], idx[c]);
        }
        Eigen::VectorXd sp = g.ldlt().solve(b);
        for (Eigen::Index a = 0; a < p; ++a) s(idx[a]) = sp(a);
        return s;
    };

    const int max_outer = 3 * static_cast<int>(k) + 10;
    for (int outer = 0; outer < max_outer; ++outer) {
        const Eigen::VectorXd grad = rhs - gram * x;
        Eigen::Index best = -1;
        double best_val = tol;
        for (Eigen::Index i = 0; i < k; ++i)
            if (!passive[static_cast<std::size_t>(i)] && grad(i) > best_val) {
                best_val = grad(i);
                best = i;
            }
        if (best < 0) break;
        passive[static_cast<std::size_t>(best)] = true;

        for (int inner = 0; inner <= k; ++inner) {
            Eigen::VectorXd s = solve_passive();
            bool feasible = true;
            double alpha = 1.0;
            for (Eigen::Index i = 0; i < k; ++i) {
                if (!passive[static_cast<std::size_t>(i)] || s(i) > 0.0) continue;
                feasible = false;
                const double denom = x(i) - s(i);
                if (denom > 0.0) alpha = std::min(alpha, x(i) / denom);
            }
            if (feasible) {
                x = s;
                break;
            }
            x += alpha * (s - x);
            for (Eigen::Index i = 0; i < k; ++i)
                if (passive[static_cast<std::size_t>(i)] && x(i) <= tol * 1e-3) {
                    passive[static_cast<std::size_t>(i)] = false;
                    x(i) = 0.0;
                }
        }
    }
    return x.cwiseMax(0.0);
}

Eigen::MatrixXd nnls_gram_columns(const Eigen::MatrixXd& gram, const Eigen::MatrixXd& rhs) {
    Eigen::MatrixXd out(rhs.rows(), rhs.cols());
    for (Eigen::Index j = 0; j < rhs.cols(); ++j) out.col(j) = nnls_gram(gram, rhs.col(j));
    return out;
}

double residual_norm2(const Eigen::MatrixXd& X, const Eigen::MatrixXd& W, const Eigen::MatrixXd& H) {
    return (X - W * H).squaredNorm();
}

double snmf_objective(const Eigen::MatrixXd& X, const Eigen::MatrixXd& W, const Eigen::MatrixXd& H, double eta,
                      double alpha, double beta) {
    return residual_norm2(X, W, H) + eta * W.squaredNorm() + alpha * W.rowwise().sum().array().square().sum() +
           beta * H.colwise().sum().array().square().sum();
}

namespace {

struct RestartResult {
    Eigen::MatrixXd W, H;
    RestartTrace trace;
};

RestartResult run_restart(const Eigen::MatrixXd& X, int k, double eta, double beta, const NmfConfig& cfg,
                          std::size_t restart, const IterateObserver& observer) {
    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                      static_cast<std::uint32_t>(restart), 0x5eedu};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> normal(0.0, 1.0);

    // E[|N|]^2 = 2/pi, so mean(W0 * |N|) over k terms matches mean(X).
    const double mean = X.mean();
    const double w_scale = mean / (static_cast<double>(k) * 2.0 / std::numbers::pi);
    RestartResult r;
    r.W.resize(X.rows(), k);
    for (Eigen::Index j = 0; j < r.W.cols(); ++j)
        for (Eigen::Index i = 0; i < r.W.rows(); ++i) r.W(i, j) = std::abs(normal(rng)) * w_scale;

    const Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(k, k);
    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(k, k);

    auto h_step = [&] { r.H = nnls_gram_columns(r.W.transpose() * r.W + beta * ones, r.W.transpose() * X); };
    auto w_step = [&] {
        r.W = nnls_gram_columns(r.H * r.H.transpose() + eta * eye + cfg.row_sparsity_w * ones, r.H * X.transpose()).transpose();
    };

    h_step();
    if (observer) observer(restart, 0, r.W, r.H);
    r.trace.objective.push_back(snmf_objective(X, r.W, r.H, eta, cfg.row_sparsity_w, beta));
    for (int it = 1; it <= cfg.max_iters; ++it) {
        w_step();
        if (observer) observer(restart, it, r.W, r.H);
        h_step();
        if (observer) observer(restart, it, r.W, r.H);
        const double prev = r.trace.objective.back();
        const double cur = snmf_objective(X, r.W, r.H, eta, cfg.row_sparsity_w, beta);
        r.trace.objective.push_back(cur);
        r.trace.iterations = it;
        if (prev - cur <= cfg.rel_tol * std::max(prev, 1e-300)) {
            r.trace.converged = true;
            break;
        }
    }
    r.trace.residual = residual_norm2(X, r.W, r.H);
    return r;
}

}  // namespace

NmfSolution sparse_nmf(const Eigen::MatrixXd& X, const NmfConfig& cfg, const IterateObserver& observer) {
    const auto m = X.rows(), n = X.cols();
    if (m == 0 || n == 0) throw InputError("cannot factorize an empty matrix");
    if ((X.array() < 0.0).any()) throw InputError("matrix has negative entries");
    if (cfg.rank < 1 || cfg.rank > std::min(m, n))
        throw InputError("rank k=" + std::to_string(cfg.rank) + " must lie in [1, min(m, n)=" +
                         std::to_string(std::min(m, n)) + "]");
    if (cfg.restarts < 1) throw InputError("restarts must be >= 1");
    if (cfg.sparsity_w < 0.0 || cfg.row_sparsity_w < 0.0 || (cfg.sparsity_h && *cfg.sparsity_h < 0.0))
        throw InputError("sparsity weights must be non-negative");

    const double max_x = X.maxCoeff();
    NmfSolution sol;
    sol.sparsity_w = cfg.sparsity_w;
    sol.sparsity_h = cfg.sparsity_h.value_or(0.01 * max_x * max_x);
    if (max_x == 0.0) {
        sol.W = Eigen::MatrixXd::Zero(m, cfg.rank);
        sol.H = Eigen::MatrixXd::Zero(cfg.rank, n);
        sol.degenerate = true;
        return sol;
    }

    // Restarts are independent; ties keep the lowest restart index.
    double best = std::numeric_limits<double>::infinity();
    for (int r = 0; r < cfg.restarts; ++r) {
        auto result = run_restart(X, cfg.rank, sol.sparsity_w, sol.sparsity_h, cfg, static_cast<std::size_t>(r),
                                  observer);
        const double score = result.trace.objective.back();
        if (score < best) {
            best = score;
            sol.W = std::move(result.W);
            sol.H = std::move(result.H);
            sol.best_restart = static_cast<std::size_t>(r);
        }
        sol.restarts.push_back(std::move(result.trace));
    }
    sol.objective = best;
    sol.residual = sol.restarts[sol.best_restart].residual;
    return sol;
}

}  // namespace crimelens
