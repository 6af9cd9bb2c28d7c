#ifndef N2D_UMAP_HPP
#define N2D_UMAP_HPP

#include "common.hpp"
#include "embedding.hpp"
#include "knn.hpp"
#include "linalg.hpp"

#include <Eigen/SparseCore>

#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

/**
 * @file umap.hpp
 *
 * @brief UMAP: a fuzzy k-neighbor graph laid out by stochastic
 * attraction/repulsion in a low-dimensional space.
 */

namespace n2d {

using SparseGraph = Eigen::SparseMatrix<double, Eigen::RowMajor>;

struct UmapConfig {
    std::size_t n_neighbors = 20;
    double min_dist = 0.0;
    std::size_t n_components = 2;
    /// Non-positive means 500 below 10000 samples, else 200.
    int n_epochs = -1;
    double learning_rate = 1.0;
    int negative_sample_rate = 5;
    double repulsion_strength = 1.0;
    double spread = 1.0;
    std::uint64_t seed = 0;
    KnnMode knn_mode = KnnMode::exact;
    int threads = 1;
    /// Sequential layout updates; otherwise edges are split across threads
    /// that update shared coordinates without locking.
    bool deterministic = true;
    /// Bisection tolerance on the membership sum of each node.
    double bandwidth_tolerance = 1e-5;
    int bandwidth_iterations = 64;

    int resolved_epochs(std::size_t n) const {
        if (n_epochs > 0) {
            return n_epochs;
        }
        return n < 10000 ? 500 : 200;
    }

    void validate(std::size_t n) const {
        if (n_neighbors < 2 || n_neighbors >= n) {
            throw ConfigError("umap n_neighbors must satisfy 2 <= n_neighbors < n");
        }
        if (!(min_dist >= 0.0)) {
            throw ConfigError("umap min_dist must be >= 0");
        }
        if (!(spread > 0.0)) {
            throw ConfigError("umap spread must be > 0");
        }
        if (n_components < 1) {
            throw ConfigError("umap n_components must be >= 1");
        }
        if (negative_sample_rate < 0 || !(learning_rate > 0.0)) {
            throw ConfigError("umap negative_sample_rate must be >= 0 and learning_rate > 0");
        }
    }
};

struct CurveParams {
    double a = 0.0;
    double b = 0.0;
    double rms = 0.0;
};

/// Target low-dimensional membership: 1 up to `min_dist`, then exponential decay with scale `spread`.
inline double umap_target_curve(double d, double min_dist, double spread) {
    return d <= min_dist ? 1.0 : std::exp(-(d - min_dist) / spread);
}

inline double umap_fitted_curve(double d, double a, double b) {
    return 1.0 / (1.0 + a * std::pow(d, 2.0 * b));
}

/**
 * Fit `(a, b)` so that `1 / (1 + a d^{2b})` matches the target curve in
 * least squares over 300 evenly spaced `d` in `(0, 3 * spread]`, by
 * Levenberg-Marquardt on `(log a, b)`. The residual RMS is returned rather
 * than gated: the least-squares optimum for `min_dist = 0, spread = 1` sits
 * near 0.024.
 */
inline CurveParams fit_ab(double min_dist, double spread) {
    if (!(spread > 0.0) || !(min_dist >= 0.0)) {
        throw PreconditionError("fit_ab needs spread > 0 and min_dist >= 0");
    }
    constexpr int samples = 300;
    std::vector<double> xs(samples), ys(samples);
    for (int i = 0; i < samples; ++i) {
        xs[i] = 3.0 * spread * static_cast<double>(i + 1) / samples;
        ys[i] = umap_target_curve(xs[i], min_dist, spread);
    }

    auto sse = [&](double la, double b) {
        double s = 0.0;
        for (int i = 0; i < samples; ++i) {
            const double r = umap_fitted_curve(xs[i], std::exp(la), b) - ys[i];
            s += r * r;
        }
        return s;
    };

    double la = 0.0, b = 1.0, lambda = 1e-3;
    double current = sse(la, b);
    for (int it = 0; it < 500; ++it) {
        Eigen::Matrix2d jtj = Eigen::Matrix2d::Zero();
        Eigen::Vector2d jtr = Eigen::Vector2d::Zero();
        const double a = std::exp(la);
        for (int i = 0; i < samples; ++i) {
            const double x = xs[i];
            const double p = std::pow(x, 2.0 * b);
            const double f = 1.0 / (1.0 + a * p);
            const double r = f - ys[i];
            // df/d(log a) = -f^2 a p ; df/db = -f^2 a p 2 ln x
            const double dla = -f * f * a * p;
            const double db = dla * 2.0 * std::log(x);
            jtj(0, 0) += dla * dla;
            jtj(0, 1) += dla * db;
            jtj(1, 1) += db * db;
            jtr(0) += dla * r;
            jtr(1) += db * r;
        }
        jtj(1, 0) = jtj(0, 1);
        bool improved = false;
        for (int tries = 0; tries < 30 && !improved; ++tries) {
            Eigen::Matrix2d damped = jtj;
            damped(0, 0) *= 1.0 + lambda;
            damped(1, 1) *= 1.0 + lambda;
            const Eigen::Vector2d step = damped.ldlt().solve(-jtr);
            const double candidate = sse(la + step(0), b + step(1));
            if (std::isfinite(candidate) && candidate < current) {
                la += step(0);
                b += step(1);
                const double gain = current - candidate;
                current = candidate;
                lambda = std::max(lambda / 10.0, 1e-12);
                improved = true;
                if (gain < 1e-16 * std::max(1.0, current)) {
                    it = 500;
                }
            } else {
                lambda *= 10.0;
            }
        }
        if (!improved) {
            break;
        }
    }

    CurveParams out{std::exp(la), b, std::sqrt(current / samples)};
    if (!std::isfinite(out.a) || !std::isfinite(out.b) || !std::isfinite(out.rms) || !(out.a > 0.0)) {
        throw DivergenceError("fit_ab did not converge (residual RMS " + std::to_string(out.rms) + ")");
    }
    return out;
}

/// Per-node distance offset `rho` and bandwidth `sigma`.
struct Bandwidths {
    std::vector<double> rho;
    std::vector<double> sigma;
    std::vector<double> membership_sum;
};

/**
 * For each node, `rho` is the distance to its nearest neighbor and `sigma`
 * is found by bisection so that the sum of
 * `exp(-max(0, d - rho) / sigma)` over its neighbors equals `log2(k)`.
 */
inline Bandwidths smooth_knn_distances(const NeighborGraph& g, double tolerance = 1e-5, int iterations = 64) {
    const double target = std::log2(static_cast<double>(g.k));
    double global_mean = 0.0;
    for (double d : g.distances) {
        global_mean += d;
    }
    global_mean /= static_cast<double>(g.distances.size());

    Bandwidths out;
    out.rho.resize(g.n);
    out.sigma.resize(g.n);
    out.membership_sum.resize(g.n);
    for (std::size_t i = 0; i < g.n; ++i) {
        const double rho = g.distance(i, 0);
        auto total = [&](double sigma) {
            double s = 0.0;
            for (std::size_t j = 0; j < g.k; ++j) {
                const double excess = g.distance(i, j) - rho;
                s += excess > 0.0 ? std::exp(-excess / sigma) : 1.0;
            }
            return s;
        };

        double lo = 0.0, hi = std::numeric_limits<double>::infinity(), mid = 1.0;
        for (int it = 0; it < iterations; ++it) {
            const double s = total(mid);
            if (std::abs(s - target) < tolerance) {
                break;
            }
            if (s > target) {
                hi = mid;
                mid = 0.5 * (lo + hi);
            } else {
                lo = mid;
                mid = std::isinf(hi) ? mid * 2.0 : 0.5 * (lo + hi);
            }
        }

        // Keep bandwidths away from zero relative to the local distance scale.
        double local_mean = 0.0;
        for (std::size_t j = 0; j < g.k; ++j) {
            local_mean += g.distance(i, j);
        }
        local_mean /= static_cast<double>(g.k);
        const double floor = 1e-3 * (rho > 0.0 ? local_mean : global_mean);
        mid = std::max(mid, floor);
        out.rho[i] = rho;
        out.sigma[i] = mid;
        out.membership_sum[i] = total(mid);
    }
    return out;
}

/// Directed memberships `w_ij` in the same layout as the neighbor graph.
inline std::vector<double> directed_memberships(const NeighborGraph& g, const Bandwidths& bw) {
    std::vector<double> w(g.n * g.k);
    for (std::size_t i = 0; i < g.n; ++i) {
        for (std::size_t j = 0; j < g.k; ++j) {
            const double excess = g.distance(i, j) - bw.rho[i];
            w[i * g.k + j] = excess > 0.0 ? std::exp(-excess / bw.sigma[i]) : 1.0;
        }
    }
    return w;
}

/// Probabilistic union `w_ij + w_ji - w_ij * w_ji`; zero weights are dropped.
inline SparseGraph fuzzy_union(const NeighborGraph& g, const std::vector<double>& directed) {
    const auto n = static_cast<Eigen::Index>(g.n);
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(directed.size());
    for (std::size_t i = 0; i < g.n; ++i) {
        for (std::size_t j = 0; j < g.k; ++j) {
            if (directed[i * g.k + j] > 0.0) {
                triplets.emplace_back(static_cast<Eigen::Index>(i), g.index(i, j), directed[i * g.k + j]);
            }
        }
    }
    SparseGraph w(n, n);
    w.setFromTriplets(triplets.begin(), triplets.end());
    const SparseGraph wt = SparseGraph(w.transpose());
    SparseGraph sym = w + wt;
    for (Eigen::Index i = 0; i < sym.outerSize(); ++i) {
        for (SparseGraph::InnerIterator it(sym, i); it; ++it) {
            const double a = w.coeff(i, it.col());
            const double b = wt.coeff(i, it.col());
            // Same value either way round, and exactly 1 when either side is 1.
            const double hi = std::max(a, b), lo = std::min(a, b);
            it.valueRef() = hi + lo * (1.0 - hi);
        }
    }
    sym.prune(0.0);
    return sym;
}

struct FuzzyGraph {
    NeighborGraph knn;
    Bandwidths bandwidths;
    std::vector<double> directed;
    SparseGraph symmetric;
};

inline FuzzyGraph fuzzy_graph(const Matrix& points, const UmapConfig& cfg) {
    FuzzyGraph out;
    out.knn = knn_graph(points, cfg.n_neighbors, KnnOptions{cfg.knn_mode, cfg.seed, cfg.threads});
    out.bandwidths = smooth_knn_distances(out.knn, cfg.bandwidth_tolerance, cfg.bandwidth_iterations);
    out.directed = directed_memberships(out.knn, out.bandwidths);
    out.symmetric = fuzzy_union(out.knn, out.directed);
    return out;
}

/// Connected component id per node, numbered in order of first appearance.
inline std::vector<int> connected_components(const SparseGraph& g, int* count = nullptr) {
    const auto n = static_cast<std::size_t>(g.rows());
    std::vector<int> comp(n, -1);
    int next = 0;
    std::vector<std::size_t> stack;
    for (std::size_t s = 0; s < n; ++s) {
        if (comp[s] >= 0) {
            continue;
        }
        comp[s] = next;
        stack.push_back(s);
        while (!stack.empty()) {
            const std::size_t v = stack.back();
            stack.pop_back();
            for (SparseGraph::InnerIterator it(g, static_cast<Eigen::Index>(v)); it; ++it) {
                const auto u = static_cast<std::size_t>(it.col());
                if (comp[u] < 0) {
                    comp[u] = next;
                    stack.push_back(u);
                }
            }
        }
        ++next;
    }
    if (count != nullptr) {
        *count = next;
    }
    return comp;
}

namespace detail {

/**
 * Eigenvectors 2..dim+1 of the symmetric normalized Laplacian of a connected
 * graph, i.e. the top eigenvectors of `(I + D^{-1/2} W D^{-1/2}) / 2` after
 * the trivial one. Empty on failure.
 */
inline std::optional<Matrix> spectral_layout_connected(const SparseGraph& g, std::size_t dim, std::uint64_t seed) {
    const Eigen::Index n = g.rows();
    if (static_cast<std::size_t>(n) <= dim + 1) {
        return std::nullopt;
    }
    Eigen::VectorXd inv_sqrt_deg(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double deg = g.row(i).sum();
        if (!(deg > 0.0)) {
            return std::nullopt;
        }
        inv_sqrt_deg(i) = 1.0 / std::sqrt(deg);
    }
    auto apply = [&](const Eigen::MatrixXd& x, Eigen::MatrixXd& y) {
        const Eigen::MatrixXd scaled = inv_sqrt_deg.asDiagonal() * x;
        y.noalias() = g * scaled;
        y = 0.5 * (x + inv_sqrt_deg.asDiagonal() * y);
    };

    const auto k = static_cast<Eigen::Index>(dim + 1);
    EigenResult eig;
    if (n <= 1500) {
        Eigen::MatrixXd dense = Eigen::MatrixXd::Identity(n, n);
        Eigen::MatrixXd op(n, n);
        apply(dense, op);
        eig = top_eigenpairs_dense(0.5 * (op + op.transpose()), k);
    } else {
        SubspaceOptions opts;
        opts.tolerance = 1e-4;
        opts.max_iterations = 5000;
        opts.extra_vectors = static_cast<int>(k);
        opts.seed = seed;
        eig = top_eigenpairs(apply, n, k, opts);
    }
    if (!eig.converged || !eig.vectors.allFinite()) {
        return std::nullopt;
    }
    Matrix coords = eig.vectors.rightCols(static_cast<Eigen::Index>(dim));
    return coords;
}

inline Matrix random_layout(std::size_t n, std::size_t dim, Rng& rng, double lo, double hi) {
    Matrix out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        for (Eigen::Index j = 0; j < out.cols(); ++j) {
            out(i, j) = rng.uniform(lo, hi);
        }
    }
    return out;
}

/**
 * Spectral layout; graphs with several components get one layout per
 * component, placed at classical-MDS positions of the component centroids.
 */
inline std::optional<Matrix> spectral_init(const SparseGraph& g, const Matrix& points, std::size_t dim, std::uint64_t seed) {
    int ncomp = 0;
    const auto comp = connected_components(g, &ncomp);
    const auto n = static_cast<std::size_t>(g.rows());
    if (ncomp == 1) {
        return spectral_layout_connected(g, dim, seed);
    }

    // Component centroids in the input space, then MDS into `dim` dimensions.
    Matrix centroids = Matrix::Zero(ncomp, points.cols());
    std::vector<double> sizes(static_cast<std::size_t>(ncomp), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        centroids.row(comp[i]) += points.row(static_cast<Eigen::Index>(i));
        sizes[static_cast<std::size_t>(comp[i])] += 1.0;
    }
    for (int c = 0; c < ncomp; ++c) {
        centroids.row(c) /= sizes[static_cast<std::size_t>(c)];
    }
    Eigen::MatrixXd sq(ncomp, ncomp);
    for (int a = 0; a < ncomp; ++a) {
        for (int b = 0; b < ncomp; ++b) {
            sq(a, b) = (centroids.row(a) - centroids.row(b)).squaredNorm();
        }
    }
    const Eigen::MatrixXd center = Eigen::MatrixXd::Identity(ncomp, ncomp) - Eigen::MatrixXd::Constant(ncomp, ncomp, 1.0 / ncomp);
    const Eigen::MatrixXd gram = -0.5 * center * sq * center;
    const auto meta_dims = std::min<Eigen::Index>(static_cast<Eigen::Index>(dim), ncomp);
    const EigenResult meta_eig = top_eigenpairs_dense(gram, meta_dims);
    Matrix meta = Matrix::Zero(ncomp, static_cast<Eigen::Index>(dim));
    for (Eigen::Index j = 0; j < meta_dims; ++j) {
        meta.col(j) = meta_eig.vectors.col(j) * std::sqrt(std::max(meta_eig.values(j), 0.0));
    }
    const double meta_scale = meta.cwiseAbs().maxCoeff();
    if (meta_scale > 0.0) {
        meta /= meta_scale;
    }

    Rng rng(seed);
    Matrix out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
    for (int c = 0; c < ncomp; ++c) {
        std::vector<Eigen::Index> members;
        for (std::size_t i = 0; i < n; ++i) {
            if (comp[i] == c) {
                members.push_back(static_cast<Eigen::Index>(i));
            }
        }
        double nearest = std::numeric_limits<double>::infinity();
        for (int o = 0; o < ncomp; ++o) {
            if (o != c) {
                nearest = std::min(nearest, (meta.row(c) - meta.row(o)).norm());
            }
        }
        const double half_range = (std::isfinite(nearest) && nearest > 0.0) ? nearest / 2.0 : 1.0;

        std::optional<Matrix> local;
        if (members.size() > 2 * dim) {
            std::vector<Eigen::Triplet<double>> trips;
            std::vector<Eigen::Index> position(n, -1);
            for (std::size_t m = 0; m < members.size(); ++m) {
                position[static_cast<std::size_t>(members[m])] = static_cast<Eigen::Index>(m);
            }
            for (Eigen::Index v : members) {
                for (SparseGraph::InnerIterator it(g, v); it; ++it) {
                    trips.emplace_back(position[static_cast<std::size_t>(v)], position[static_cast<std::size_t>(it.col())], it.value());
                }
            }
            SparseGraph sub(static_cast<Eigen::Index>(members.size()), static_cast<Eigen::Index>(members.size()));
            sub.setFromTriplets(trips.begin(), trips.end());
            local = spectral_layout_connected(sub, dim, seed + static_cast<std::uint64_t>(c));
        }
        if (!local) {
            local = random_layout(members.size(), dim, rng, -1.0, 1.0);
        }
        const double scale = local->cwiseAbs().maxCoeff();
        if (scale > 0.0) {
            *local *= half_range / scale;
        }
        for (std::size_t m = 0; m < members.size(); ++m) {
            out.row(members[m]) = local->row(static_cast<Eigen::Index>(m)) + meta.row(c);
        }
    }
    return out;
}

struct LayoutEdges {
    std::vector<int> head;
    std::vector<int> tail;
    std::vector<double> epochs_per_sample;
};

/// One entry per stored (directed) graph entry; weak edges never sampled are dropped.
inline LayoutEdges layout_edges(const SparseGraph& g, int n_epochs) {
    double max_w = 0.0;
    for (Eigen::Index r = 0; r < g.outerSize(); ++r) {
        for (SparseGraph::InnerIterator it(g, r); it; ++it) {
            max_w = std::max(max_w, it.value());
        }
    }
    LayoutEdges e;
    const double cutoff = max_w / static_cast<double>(n_epochs);
    for (Eigen::Index r = 0; r < g.outerSize(); ++r) {
        for (SparseGraph::InnerIterator it(g, r); it; ++it) {
            if (it.value() < cutoff || it.value() <= 0.0) {
                continue;
            }
            e.head.push_back(static_cast<int>(r));
            e.tail.push_back(static_cast<int>(it.col()));
            e.epochs_per_sample.push_back(max_w / it.value());
        }
    }
    return e;
}

inline double clip4(double v) {
    return v > 4.0 ? 4.0 : (v < -4.0 ? -4.0 : v);
}

struct LayoutState {
    std::vector<double> next_sample;
    std::vector<double> next_negative;
    std::vector<double> negative_period;
};

/**
 * Process edges [begin, end) for one epoch. With `Atomic` the coordinates
 * are read and written through relaxed atomic references so that several
 * workers may share them.
 */
template <bool Atomic>
void layout_epoch(double* coords, std::size_t dim, std::size_t n, const LayoutEdges& edges, LayoutState& st,
                  std::size_t begin, std::size_t end, int epoch, double alpha, double a, double b, double gamma,
                  Rng& rng) {
    auto load = [&](std::size_t idx) -> double {
        if constexpr (Atomic) {
            return std::atomic_ref<double>(coords[idx]).load(std::memory_order_relaxed);
        } else {
            return coords[idx];
        }
    };
    auto add = [&](std::size_t idx, double delta) {
        if constexpr (Atomic) {
            std::atomic_ref<double> ref(coords[idx]);
            ref.store(ref.load(std::memory_order_relaxed) + delta, std::memory_order_relaxed);
        } else {
            coords[idx] += delta;
        }
    };

    std::vector<double> current(dim), other(dim);
    const double ep = static_cast<double>(epoch);
    for (std::size_t e = begin; e < end; ++e) {
        if (st.next_sample[e] > ep) {
            continue;
        }
        const auto j = static_cast<std::size_t>(edges.head[e]);
        const auto k = static_cast<std::size_t>(edges.tail[e]);
        double dist2 = 0.0;
        for (std::size_t d = 0; d < dim; ++d) {
            current[d] = load(j * dim + d);
            other[d] = load(k * dim + d);
            const double diff = current[d] - other[d];
            dist2 += diff * diff;
        }
        double coeff = 0.0;
        if (dist2 > 0.0) {
            coeff = -2.0 * a * b * std::pow(dist2, b - 1.0) / (a * std::pow(dist2, b) + 1.0);
        }
        for (std::size_t d = 0; d < dim; ++d) {
            const double grad = clip4(coeff * (current[d] - other[d])) * alpha;
            current[d] += grad;
            add(j * dim + d, grad);
            add(k * dim + d, -grad);
        }
        st.next_sample[e] += edges.epochs_per_sample[e];

        const auto negatives = static_cast<int>((ep - st.next_negative[e]) / st.negative_period[e]);
        for (int p = 0; p < negatives; ++p) {
            const std::size_t r = rng.index(n);
            if (r == j) {
                continue;
            }
            dist2 = 0.0;
            for (std::size_t d = 0; d < dim; ++d) {
                other[d] = load(r * dim + d);
                const double diff = current[d] - other[d];
                dist2 += diff * diff;
            }
            if (!(dist2 > 0.0)) {
                continue;
            }
            const double rcoeff = 2.0 * gamma * b / ((0.001 + dist2) * (a * std::pow(dist2, b) + 1.0));
            for (std::size_t d = 0; d < dim; ++d) {
                const double grad = clip4(rcoeff * (current[d] - other[d])) * alpha;
                current[d] += grad;
                add(j * dim + d, grad);
            }
        }
        st.next_negative[e] += static_cast<double>(negatives) * st.negative_period[e];
    }
}

} // namespace detail

/**
 * Stochastic layout optimization of `coords` (n x dim, modified in place)
 * against the fuzzy graph, with the learning rate decaying linearly to 0.
 */
inline void optimize_layout(Matrix& coords, const SparseGraph& graph, const UmapConfig& cfg, const CurveParams& ab,
                            int n_epochs) {
    const auto n = static_cast<std::size_t>(coords.rows());
    const auto dim = static_cast<std::size_t>(coords.cols());
    const detail::LayoutEdges edges = detail::layout_edges(graph, n_epochs);
    const std::size_t m = edges.head.size();
    detail::LayoutState st;
    st.next_sample = edges.epochs_per_sample;
    st.negative_period.resize(m);
    for (std::size_t e = 0; e < m; ++e) {
        st.negative_period[e] = cfg.negative_sample_rate > 0
                                    ? edges.epochs_per_sample[e] / static_cast<double>(cfg.negative_sample_rate)
                                    : std::numeric_limits<double>::infinity();
    }
    st.next_negative = st.negative_period;

    const bool sequential = cfg.deterministic || cfg.threads <= 1;
    const std::size_t workers = sequential ? 1 : static_cast<std::size_t>(cfg.threads);
    std::vector<Rng> rngs;
    Rng root(cfg.seed ^ 0xa0761d6478bd642fULL);
    for (std::size_t w = 0; w < workers; ++w) {
        rngs.emplace_back(root.fork());
    }

    double* data = coords.data();
    for (int epoch = 0; epoch < n_epochs; ++epoch) {
        const double alpha = cfg.learning_rate * (1.0 - static_cast<double>(epoch) / static_cast<double>(n_epochs));
        if (sequential) {
            detail::layout_epoch<false>(data, dim, n, edges, st, 0, m, epoch, alpha, ab.a, ab.b, cfg.repulsion_strength, rngs[0]);
        } else {
            const std::size_t chunk = (m + workers - 1) / workers;
            std::vector<std::thread> pool;
            for (std::size_t w = 0; w < workers; ++w) {
                const std::size_t begin = std::min(m, w * chunk);
                const std::size_t end = std::min(m, begin + chunk);
                pool.emplace_back([&, begin, end, w] {
                    detail::layout_epoch<true>(data, dim, n, edges, st, begin, end, epoch, alpha, ab.a, ab.b,
                                               cfg.repulsion_strength, rngs[w]);
                });
            }
            for (auto& t : pool) {
                t.join();
            }
        }
        if (!coords.allFinite()) {
            throw DivergenceError("umap layout produced non-finite coordinates in epoch " + std::to_string(epoch + 1) +
                                  " (a=" + std::to_string(ab.a) + ", b=" + std::to_string(ab.b) + ")");
        }
    }
}

/**
 * Full UMAP fit: fuzzy graph, spectral (or random) initialization scaled to
 * [0, 10] per axis, then layout optimization.
 */
inline Embedding umap_fit(const Embedding& input, const UmapConfig& cfg) {
    const std::size_t n = input.n();
    cfg.validate(n);
    if (!input.coords.allFinite()) {
        throw PreconditionError("umap input contains non-finite values");
    }
    const int n_epochs = cfg.resolved_epochs(n);
    const CurveParams ab = fit_ab(cfg.min_dist, cfg.spread);
    const FuzzyGraph fg = fuzzy_graph(input.coords, cfg);

    Embedding out;
    out.provenance = Provenance::manifold;
    out.method = "umap";

    Rng rng(cfg.seed);
    std::optional<Matrix> init = detail::spectral_init(fg.symmetric, input.coords, cfg.n_components, cfg.seed);
    Matrix coords;
    if (init && init->allFinite()) {
        const double max_abs = init->cwiseAbs().maxCoeff();
        coords = *init * (max_abs > 0.0 ? 10.0 / max_abs : 1.0);
        for (Eigen::Index i = 0; i < coords.rows(); ++i) {
            for (Eigen::Index j = 0; j < coords.cols(); ++j) {
                coords(i, j) += rng.normal(0.0, 1e-4);
            }
        }
        out.notes.push_back("init=spectral");
    } else {
        coords = detail::random_layout(n, cfg.n_components, rng, -10.0, 10.0);
        out.notes.push_back("init=random (spectral eigensolve failed)");
    }
    for (Eigen::Index j = 0; j < coords.cols(); ++j) {
        auto col = coords.col(j);
        const double lo = col.minCoeff();
        const double range = col.maxCoeff() - lo;
        if (range > 0.0) {
            col = ((col.array() - lo) * (10.0 / range)).matrix();
        } else {
            col.setZero();
        }
    }

    optimize_layout(coords, fg.symmetric, cfg, ab, n_epochs);
    out.coords = std::move(coords);
    out.notes.push_back("a=" + std::to_string(ab.a) + " b=" + std::to_string(ab.b) + " rms=" + std::to_string(ab.rms) + " epochs=" + std::to_string(n_epochs));
    return out;
}

} // namespace n2d

#endif
