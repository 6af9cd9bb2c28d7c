#ifndef N2D_ISOMAP_HPP
#define N2D_ISOMAP_HPP

#include "common.hpp"
#include "embedding.hpp"
#include "knn.hpp"
#include "linalg.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <queue>
#include <string>
#include <utility>
#include <vector>

/**
 * @file isomap.hpp
 *
 * @brief Isomap: graph geodesics followed by classical scaling.
 */

namespace n2d {

struct IsomapConfig {
    std::size_t n_neighbors = 5;
    std::size_t n_components = 2;
    /// Geodesic matrix is n x n doubles; larger inputs are refused.
    std::size_t max_samples = 30000;
    int threads = 1;
    /// Up to this many samples the eigenproblem is solved by full decomposition.
    std::size_t dense_eigen_limit = 2000;
    std::uint64_t seed = 0;

    void validate(std::size_t n) const {
        if (n_neighbors < 1 || n_neighbors >= n) {
            throw ConfigError("isomap n_neighbors must satisfy 1 <= n_neighbors < n");
        }
        if (n_components < 1) {
            throw ConfigError("isomap n_components must be >= 1");
        }
    }
};

struct Bridge {
    int from = 0;
    int to = 0;
    double length = 0.0;
};

struct Geodesics {
    Eigen::MatrixXd distances;
    std::vector<Bridge> bridges;
};

using Adjacency = std::vector<std::vector<std::pair<int, double>>>;

/// Undirected kNN graph: an edge exists if either endpoint lists the other.
inline Adjacency union_adjacency(const NeighborGraph& g) {
    Adjacency adj(g.n);
    for (std::size_t i = 0; i < g.n; ++i) {
        for (std::size_t j = 0; j < g.k; ++j) {
            const int other = g.index(i, j);
            const double d = g.distance(i, j);
            adj[i].emplace_back(other, d);
            adj[static_cast<std::size_t>(other)].emplace_back(static_cast<int>(i), d);
        }
    }
    for (auto& list : adj) {
        std::sort(list.begin(), list.end());
        list.erase(std::unique(list.begin(), list.end(),
                               [](const auto& a, const auto& b) { return a.first == b.first; }),
                   list.end());
    }
    return adj;
}

/**
 * Join the components of `adj` by repeatedly adding the shortest Euclidean
 * edge between different components (Prim's order over components, which
 * selects the same edges). Returns the bridges that were added.
 */
inline std::vector<Bridge> bridge_components(const Matrix& points, Adjacency& adj) {
    const std::size_t n = adj.size();
    std::vector<int> comp(n, -1);
    int ncomp = 0;
    for (std::size_t s = 0; s < n; ++s) {
        if (comp[s] >= 0) {
            continue;
        }
        std::vector<std::size_t> stack{s};
        comp[s] = ncomp;
        while (!stack.empty()) {
            const auto v = stack.back();
            stack.pop_back();
            for (const auto& [u, d] : adj[v]) {
                if (comp[static_cast<std::size_t>(u)] < 0) {
                    comp[static_cast<std::size_t>(u)] = ncomp;
                    stack.push_back(static_cast<std::size_t>(u));
                }
            }
        }
        ++ncomp;
    }
    std::vector<Bridge> bridges;
    if (ncomp <= 1) {
        return bridges;
    }

    std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(ncomp));
    for (std::size_t i = 0; i < n; ++i) {
        members[static_cast<std::size_t>(comp[i])].push_back(i);
    }
    std::vector<char> in_tree(static_cast<std::size_t>(ncomp), 0);
    std::vector<double> best(n, std::numeric_limits<double>::infinity());
    std::vector<int> best_from(n, -1);
    auto absorb = [&](int c) {
        in_tree[static_cast<std::size_t>(c)] = 1;
        for (std::size_t t : members[static_cast<std::size_t>(c)]) {
            for (std::size_t v = 0; v < n; ++v) {
                if (in_tree[static_cast<std::size_t>(comp[v])]) {
                    continue;
                }
                const double d = euclidean(points, static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(v));
                if (d < best[v]) {
                    best[v] = d;
                    best_from[v] = static_cast<int>(t);
                }
            }
        }
    };
    absorb(0);
    for (int added = 1; added < ncomp; ++added) {
        std::size_t pick = n;
        for (std::size_t v = 0; v < n; ++v) {
            if (!in_tree[static_cast<std::size_t>(comp[v])] && (pick == n || best[v] < best[pick])) {
                pick = v;
            }
        }
        const Bridge b{best_from[pick], static_cast<int>(pick), best[pick]};
        adj[static_cast<std::size_t>(b.from)].emplace_back(b.to, b.length);
        adj[pick].emplace_back(b.from, b.length);
        bridges.push_back(b);
        absorb(comp[pick]);
    }
    return bridges;
}

/// Single-source shortest path lengths (Dijkstra with a binary heap).
inline void shortest_paths(const Adjacency& adj, std::size_t source, double* out) {
    const std::size_t n = adj.size();
    std::fill(out, out + n, std::numeric_limits<double>::infinity());
    using Item = std::pair<double, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
    out[source] = 0.0;
    heap.emplace(0.0, static_cast<int>(source));
    while (!heap.empty()) {
        const auto [d, v] = heap.top();
        heap.pop();
        if (d > out[v]) {
            continue;
        }
        for (const auto& [u, w] : adj[static_cast<std::size_t>(v)]) {
            const double nd = d + w;
            if (nd < out[u]) {
                out[u] = nd;
                heap.emplace(nd, u);
            }
        }
    }
}

/**
 * All-pairs geodesic distances over the union kNN graph, bridging
 * disconnected components first. The result is symmetric with a zero
 * diagonal.
 */
inline Geodesics isomap_geodesics(const Matrix& points, const IsomapConfig& cfg) {
    const auto n = static_cast<std::size_t>(points.rows());
    cfg.validate(n);
    if (n > cfg.max_samples) {
        throw GuardError("isomap refuses n=" + std::to_string(n) + " above the memory guard of " +
                         std::to_string(cfg.max_samples) + " samples");
    }
    const NeighborGraph g = knn_graph(points, cfg.n_neighbors, KnnOptions{KnnMode::exact, cfg.seed, cfg.threads});
    Adjacency adj = union_adjacency(g);
    Geodesics out;
    out.bridges = bridge_components(points, adj);

    const auto rows = static_cast<Eigen::Index>(n);
    out.distances.resize(rows, rows);
    // Column-major storage: column s holds the distances from source s.
    parallel_for(n, cfg.threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t s = begin; s < end; ++s) {
            shortest_paths(adj, s, out.distances.col(static_cast<Eigen::Index>(s)).data());
        }
    });
    for (Eigen::Index i = 0; i < rows; ++i) {
        out.distances(i, i) = 0.0;
        for (Eigen::Index j = i + 1; j < rows; ++j) {
            const double v = std::min(out.distances(i, j), out.distances(j, i));
            out.distances(i, j) = v;
            out.distances(j, i) = v;
        }
    }
    return out;
}

/**
 * Classical scaling of a distance matrix (consumed): `B = -1/2 J D^2 J`,
 * top eigenpairs, coordinates `v * sqrt(lambda)`. Components whose
 * eigenvalue is not positive are left at zero and counted in
 * `zero_padded`.
 */
inline Matrix classical_mds(Eigen::MatrixXd distances, std::size_t dims, std::size_t dense_limit, std::uint64_t seed,
                            std::size_t* zero_padded = nullptr) {
    const Eigen::Index n = distances.rows();
    Eigen::MatrixXd& b = distances;
    b = b.cwiseAbs2();
    const Eigen::VectorXd row_mean = b.rowwise().mean();
    const Eigen::RowVectorXd col_mean = b.colwise().mean();
    const double grand = row_mean.mean();
    for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index i = 0; i < n; ++i) {
            b(i, j) = -0.5 * (b(i, j) - row_mean(i) - col_mean(j) + grand);
        }
    }

    const auto k = std::min<Eigen::Index>(static_cast<Eigen::Index>(dims), n);
    EigenResult eig;
    if (static_cast<std::size_t>(n) <= dense_limit) {
        eig = top_eigenpairs_dense(b, k);
    } else {
        SubspaceOptions opts;
        opts.tolerance = 1e-7;
        opts.max_iterations = 5000;
        opts.extra_vectors = 16;
        opts.seed = seed;
        eig = top_eigenpairs([&](const Eigen::MatrixXd& x, Eigen::MatrixXd& y) { y.noalias() = b * x; }, n, k, opts);
    }
    if (eig.vectors.size() == 0 || !eig.vectors.allFinite()) {
        throw DivergenceError("classical scaling eigensolve failed (residual " + std::to_string(eig.max_residual) + ")");
    }

    Matrix coords = Matrix::Zero(n, static_cast<Eigen::Index>(dims));
    const double top = std::max(std::abs(eig.values(0)), 1e-300);
    std::size_t padded = static_cast<std::size_t>(static_cast<Eigen::Index>(dims) - k);
    for (Eigen::Index j = 0; j < k; ++j) {
        const double lambda = eig.values(j);
        if (lambda > 1e-12 * top) {
            coords.col(j) = eig.vectors.col(j) * std::sqrt(lambda);
        } else {
            ++padded;
        }
    }
    if (zero_padded != nullptr) {
        *zero_padded = padded;
    }
    return coords;
}

inline Embedding isomap_fit(const Embedding& input, const IsomapConfig& cfg) {
    if (!input.coords.allFinite()) {
        throw PreconditionError("isomap input contains non-finite values");
    }
    Geodesics geo = isomap_geodesics(input.coords, cfg);
    Embedding out;
    out.provenance = Provenance::manifold;
    out.method = "isomap";
    for (const auto& b : geo.bridges) {
        out.notes.push_back("bridge " + std::to_string(b.from) + "-" + std::to_string(b.to) + " length=" + std::to_string(b.length));
    }
    std::size_t padded = 0;
    out.coords = classical_mds(std::move(geo.distances), cfg.n_components, cfg.dense_eigen_limit, cfg.seed, &padded);
    if (padded > 0) {
        out.notes.push_back("zero_padded_components=" + std::to_string(padded));
    }
    return out;
}

} // namespace n2d

#endif
