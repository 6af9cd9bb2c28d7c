#ifndef N2D_LINALG_HPP
#define N2D_LINALG_HPP

#include "common.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <algorithm>
#include <functional>
#include <thread>
#include <vector>

/**
 * @file linalg.hpp
 *
 * @brief Small numerical helpers: a chunked parallel loop and a symmetric
 * eigensolver for the few largest eigenpairs of an implicit operator.
 */

namespace n2d {

/**
 * Run `fn(begin, end)` over contiguous chunks of `[0, n)`.
 * With `threads <= 1` everything runs on the calling thread, in order.
 */
inline void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t, std::size_t)>& fn) {
    if (threads <= 1 || n < 2) {
        fn(0, n);
        return;
    }
    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
    const std::size_t chunk = (n + workers - 1) / workers;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t begin = w * chunk;
        const std::size_t end = std::min(n, begin + chunk);
        if (begin >= end) {
            break;
        }
        pool.emplace_back([&fn, begin, end] { fn(begin, end); });
    }
    for (auto& t : pool) {
        t.join();
    }
}

struct EigenResult {
    Eigen::VectorXd values;  // descending
    Eigen::MatrixXd vectors; // one eigenvector per column
    bool converged = false;
    int iterations = 0;
    double max_residual = 0.0;
};

struct SubspaceOptions {
    int max_iterations = 3000;
    double tolerance = 1e-8; // on ||A v - lambda v|| relative to the largest |lambda|
    int extra_vectors = 10;
    std::uint64_t seed = 0;
};

/**
 * Largest-algebraic `k` eigenpairs of a symmetric positive semi-definite
 * operator by subspace iteration with Rayleigh-Ritz projection.
 *
 * `apply(X, Y)` must set `Y = A * X` for an `n x p` block `X`. For
 * indefinite matrices the caller shifts the spectrum first.
 */
inline EigenResult top_eigenpairs(const std::function<void(const Eigen::MatrixXd&, Eigen::MatrixXd&)>& apply,
                                  Eigen::Index n, Eigen::Index k, const SubspaceOptions& opts = {}) {
    const Eigen::Index p = std::min<Eigen::Index>(n, k + std::max(opts.extra_vectors, 0));
    Rng rng(opts.seed);
    Eigen::MatrixXd x(n, p);
    for (Eigen::Index j = 0; j < p; ++j) {
        for (Eigen::Index i = 0; i < n; ++i) {
            x(i, j) = rng.normal();
        }
    }
    x = Eigen::HouseholderQR<Eigen::MatrixXd>(x).householderQ() * Eigen::MatrixXd::Identity(n, p);

    EigenResult out;
    Eigen::MatrixXd ax(n, p);
    for (int it = 1; it <= opts.max_iterations; ++it) {
        apply(x, ax);
        const Eigen::MatrixXd h = x.transpose() * ax;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> small(0.5 * (h + h.transpose()));
        // Reverse to descending order.
        const Eigen::VectorXd vals = small.eigenvalues().reverse();
        const Eigen::MatrixXd rot = small.eigenvectors().rowwise().reverse();
        const Eigen::MatrixXd ritz = x * rot;
        const Eigen::MatrixXd aritz = ax * rot;

        const double scale = std::max(std::abs(vals(0)), 1e-300);
        double worst = 0.0;
        for (Eigen::Index j = 0; j < k; ++j) {
            worst = std::max(worst, (aritz.col(j) - vals(j) * ritz.col(j)).norm() / scale);
        }
        out.iterations = it;
        out.max_residual = worst;
        if (!std::isfinite(worst)) {
            break;
        }
        if (worst < opts.tolerance || it == opts.max_iterations) {
            out.values = vals.head(k);
            out.vectors = ritz.leftCols(k);
            out.converged = worst < opts.tolerance;
            return out;
        }
        x = Eigen::HouseholderQR<Eigen::MatrixXd>(aritz).householderQ() * Eigen::MatrixXd::Identity(n, p);
    }
    out.converged = false;
    return out;
}

/// Largest-algebraic `k` eigenpairs of a dense symmetric matrix via full decomposition.
inline EigenResult top_eigenpairs_dense(const Eigen::MatrixXd& a, Eigen::Index k) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(a);
    EigenResult out;
    if (solver.info() != Eigen::Success) {
        return out;
    }
    out.values = solver.eigenvalues().reverse().head(k);
    out.vectors = solver.eigenvectors().rowwise().reverse().leftCols(k);
    out.converged = true;
    out.iterations = 1;
    return out;
}

} // namespace n2d

#endif
