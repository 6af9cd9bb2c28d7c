#ifndef N2D_TSNE_HPP
#define N2D_TSNE_HPP

#include "common.hpp"
#include "embedding.hpp"

#include <cmath>
#include <limits>
#include <tuple>
#include <string>
#include <vector>

/**
 * @file tsne.hpp
 *
 * @brief Exact t-SNE with O(n^2) affinities and gradients.
 *
 * There is no tree approximation, so any target dimensionality works, at
 * the cost of quadratic memory (guarded by `TsneConfig::max_samples`).
 */

namespace n2d {

struct TsneConfig {
    double perplexity = 30.0;
    std::size_t n_components = 2;
    int n_iter = 1000;
    double early_exaggeration = 12.0;
    int exaggeration_iters = 250;
    double learning_rate = 200.0;
    double initial_momentum = 0.5;
    double final_momentum = 0.8;
    int momentum_switch_iter = 250;
    std::uint64_t seed = 0;
    std::size_t max_samples = 20000;
    /// Realized perplexity must land within this of the target.
    double perplexity_tolerance = 1e-4;
    int calibration_iterations = 50;

    void validate(std::size_t n) const {
        if (!(perplexity > 1.0) || !(perplexity < static_cast<double>(n))) {
            throw PreconditionError("tsne perplexity must satisfy 1 < perplexity < n");
        }
        if (n_iter < 250) {
            throw ConfigError("tsne n_iter must be >= 250");
        }
        if (n_components < 1) {
            throw ConfigError("tsne n_components must be >= 1");
        }
    }
};

/// Joint affinities plus the perplexity each row actually reached.
struct TsneAffinities {
    Eigen::MatrixXd p;
    std::vector<double> row_perplexity;
};

/**
 * Conditional Gaussian affinities with per-row precision found by bisection
 * (doubling until bracketed), then symmetrized as `(P + P^T) / (2n)`.
 */
inline TsneAffinities tsne_affinities(const Matrix& points, const TsneConfig& cfg) {
    const Eigen::Index n = points.rows();
    TsneAffinities out;
    out.row_perplexity.resize(static_cast<std::size_t>(n));
    out.p.resize(n, n);
    const double target_entropy = std::log(cfg.perplexity);
    std::vector<double> dist(static_cast<std::size_t>(n)), row(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        double dmin = std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j < n; ++j) {
            const double d2 = (points.row(i) - points.row(j)).squaredNorm();
            dist[static_cast<std::size_t>(j)] = d2;
            if (j != i) {
                dmin = std::min(dmin, d2);
            }
        }
        auto evaluate = [&](double beta) {
            double sum = 0.0, weighted = 0.0;
            for (Eigen::Index j = 0; j < n; ++j) {
                if (j == i) {
                    row[static_cast<std::size_t>(j)] = 0.0;
                    continue;
                }
                const double shifted = dist[static_cast<std::size_t>(j)] - dmin;
                const double v = std::exp(-beta * shifted);
                row[static_cast<std::size_t>(j)] = v;
                sum += v;
                weighted += shifted * v;
            }
            const double entropy = std::log(sum) + beta * weighted / sum;
            return std::make_pair(sum, entropy);
        };

        double beta = 1.0, lo = -std::numeric_limits<double>::infinity(), hi = std::numeric_limits<double>::infinity();
        auto [sum, entropy] = evaluate(beta);
        for (int it = 0; it < cfg.calibration_iterations; ++it) {
            if (std::abs(std::exp(entropy) - cfg.perplexity) < cfg.perplexity_tolerance) {
                break;
            }
            if (entropy > target_entropy) {
                lo = beta;
                beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
            } else {
                hi = beta;
                beta = std::isinf(lo) ? beta / 2.0 : 0.5 * (beta + lo);
            }
            std::tie(sum, entropy) = evaluate(beta);
        }
        out.row_perplexity[static_cast<std::size_t>(i)] = std::exp(entropy);
        for (Eigen::Index j = 0; j < n; ++j) {
            out.p(i, j) = row[static_cast<std::size_t>(j)] / sum;
        }
    }
    // Symmetrize in place.
    const double scale = 1.0 / (2.0 * static_cast<double>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        out.p(i, i) = 0.0;
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double v = (out.p(i, j) + out.p(j, i)) * scale;
            out.p(i, j) = v;
            out.p(j, i) = v;
        }
    }
    return out;
}

/// Student-t (one degree of freedom) kernel matrix with zero diagonal.
inline Eigen::MatrixXd tsne_kernel(const Matrix& y) {
    const Eigen::Index n = y.rows();
    const Eigen::VectorXd sq = y.rowwise().squaredNorm();
    Eigen::MatrixXd num(n, n);
    num.noalias() = y * y.transpose();
    for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index i = 0; i < n; ++i) {
            num(i, j) = i == j ? 0.0 : 1.0 / (1.0 + std::max(sq(i) + sq(j) - 2.0 * num(i, j), 0.0));
        }
    }
    return num;
}

/// KL(P || Q) for the layout `y`; zero entries of P contribute nothing.
inline double tsne_kl(const Eigen::MatrixXd& p, const Matrix& y) {
    const Eigen::MatrixXd num = tsne_kernel(y);
    const double z = num.sum();
    double kl = 0.0;
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        for (Eigen::Index j = 0; j < p.cols(); ++j) {
            const double pij = p(i, j);
            if (i != j && pij > 0.0) {
                kl += pij * std::log(pij / std::max(num(i, j) / z, 1e-300));
            }
        }
    }
    return kl;
}

struct TsneResult {
    Embedding embedding;
    double kl_after_exaggeration = 0.0;
    double kl_final = 0.0;
    std::vector<double> row_perplexity;
};

/**
 * Gradient descent with momentum, per-coordinate adaptive gains and early
 * exaggeration of P, from a seeded Gaussian start with standard deviation
 * 1e-4. The layout is re-centered after every step.
 */
inline TsneResult tsne_run(const Embedding& input, const TsneConfig& cfg) {
    const std::size_t n = input.n();
    cfg.validate(n);
    if (n > cfg.max_samples) {
        throw GuardError("exact t-SNE refuses n=" + std::to_string(n) + " above the guard of " +
                         std::to_string(cfg.max_samples) + " samples");
    }
    if (!input.coords.allFinite()) {
        throw PreconditionError("tsne input contains non-finite values");
    }

    TsneAffinities aff = tsne_affinities(input.coords, cfg);
    const auto rows = static_cast<Eigen::Index>(n);
    const auto dims = static_cast<Eigen::Index>(cfg.n_components);

    Rng rng(cfg.seed);
    Matrix y(rows, dims);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < dims; ++j) {
            y(i, j) = rng.normal(0.0, 1e-4);
        }
    }
    Matrix update = Matrix::Zero(rows, dims);
    Matrix gains = Matrix::Ones(rows, dims);
    Matrix grad(rows, dims);

    TsneResult result;
    const Eigen::MatrixXd& p = aff.p;
    for (int iter = 0; iter < cfg.n_iter; ++iter) {
        if (iter == cfg.exaggeration_iters) {
            result.kl_after_exaggeration = tsne_kl(p, y);
        }
        const double exaggeration = iter < cfg.exaggeration_iters ? cfg.early_exaggeration : 1.0;
        const double momentum = iter < cfg.momentum_switch_iter ? cfg.initial_momentum : cfg.final_momentum;

        Eigen::MatrixXd w = tsne_kernel(y);
        const double z = w.sum();
        // w_ij <- (p_ij - q_ij) * num_ij, reusing the kernel buffer.
        w = ((exaggeration * p.array() - w.array() / z) * w.array()).matrix();
        const Eigen::VectorXd weight_sums = w.rowwise().sum();
        grad = 4.0 * (weight_sums.asDiagonal() * y - w * y);

        for (Eigen::Index i = 0; i < rows; ++i) {
            for (Eigen::Index j = 0; j < dims; ++j) {
                double& g = gains(i, j);
                g = ((grad(i, j) > 0.0) != (update(i, j) > 0.0)) ? g + 0.2 : g * 0.8;
                g = std::max(g, 0.01);
                update(i, j) = momentum * update(i, j) - cfg.learning_rate * g * grad(i, j);
            }
        }
        y += update;
        y.rowwise() -= y.colwise().mean();
        if (!y.allFinite()) {
            throw DivergenceError("tsne produced non-finite coordinates at iteration " + std::to_string(iter + 1));
        }
    }
    result.kl_final = tsne_kl(p, y);
    if (cfg.n_iter <= cfg.exaggeration_iters) {
        result.kl_after_exaggeration = result.kl_final;
    }
    result.row_perplexity = std::move(aff.row_perplexity);
    result.embedding.coords = std::move(y);
    result.embedding.provenance = Provenance::manifold;
    result.embedding.method = "tsne";
    result.embedding.notes.push_back("kl_after_exaggeration=" + std::to_string(result.kl_after_exaggeration));
    result.embedding.notes.push_back("kl_final=" + std::to_string(result.kl_final));
    return result;
}

inline Embedding tsne_fit(const Embedding& input, const TsneConfig& cfg) {
    return tsne_run(input, cfg).embedding;
}

} // namespace n2d

#endif
