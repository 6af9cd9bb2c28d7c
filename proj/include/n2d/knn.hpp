#ifndef N2D_KNN_HPP
#define N2D_KNN_HPP

#include "common.hpp"
#include "linalg.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

/**
 * @file knn.hpp
 *
 * @brief k-nearest-neighbor graphs shared by all manifold learners.
 */

namespace n2d {

enum class KnnMode { exact, approximate };

/**
 * For each node, the indices and Euclidean distances of its `k` nearest
 * other nodes, ascending by (distance, index). Stored flat, row `i`
 * occupying `[i*k, (i+1)*k)`.
 */
struct NeighborGraph {
    std::size_t n = 0;
    std::size_t k = 0;
    std::vector<int> indices;
    std::vector<double> distances;

    int index(std::size_t i, std::size_t j) const { return indices[i * k + j]; }
    double distance(std::size_t i, std::size_t j) const { return distances[i * k + j]; }
};

struct KnnOptions {
    KnnMode mode = KnnMode::exact;
    std::uint64_t seed = 0;
    int threads = 1;
    int max_iterations = 12; // NN-descent rounds
    double sample_rate = 1.0;
    double early_stop = 0.001;
};

inline double euclidean(const Matrix& points, Eigen::Index a, Eigen::Index b) {
    return std::sqrt((points.row(a) - points.row(b)).squaredNorm());
}

namespace detail {

using Candidate = std::pair<double, int>;

/// Ordering used everywhere for neighbor lists: distance, then lower index.
inline bool closer(const Candidate& a, const Candidate& b) {
    return a.first < b.first || (a.first == b.first && a.second < b.second);
}

inline NeighborGraph knn_exact(const Matrix& points, std::size_t k, int threads) {
    const auto n = static_cast<std::size_t>(points.rows());
    NeighborGraph g{n, k, std::vector<int>(n * k), std::vector<double>(n * k)};
    parallel_for(n, threads, [&](std::size_t begin, std::size_t end) {
        std::vector<Candidate> row;
        row.reserve(n);
        for (std::size_t i = begin; i < end; ++i) {
            row.clear();
            for (std::size_t j = 0; j < n; ++j) {
                if (j != i) {
                    row.emplace_back(euclidean(points, static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)),
                                     static_cast<int>(j));
                }
            }
            std::partial_sort(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(k), row.end(), closer);
            for (std::size_t j = 0; j < k; ++j) {
                g.indices[i * k + j] = row[j].second;
                g.distances[i * k + j] = row[j].first;
            }
        }
    });
    return g;
}

/// Bounded neighbor list kept sorted ascending; `fresh` marks entries not yet joined.
struct NeighborList {
    std::vector<Candidate> items;
    std::vector<char> fresh;

    bool contains(int idx) const {
        return std::any_of(items.begin(), items.end(), [idx](const Candidate& c) { return c.second == idx; });
    }

    bool push(const Candidate& c, std::size_t k) {
        if (items.size() == k && !closer(c, items.back())) {
            return false;
        }
        if (contains(c.second)) {
            return false;
        }
        auto pos = std::upper_bound(items.begin(), items.end(), c, closer);
        const auto offset = pos - items.begin();
        items.insert(pos, c);
        fresh.insert(fresh.begin() + offset, 1);
        if (items.size() > k) {
            items.pop_back();
            fresh.pop_back();
        }
        return true;
    }
};

/// NN-descent: iteratively refine random neighbor lists through neighbors of neighbors.
inline NeighborGraph knn_nndescent(const Matrix& points, std::size_t k, const KnnOptions& opts) {
    const auto n = static_cast<std::size_t>(points.rows());
    Rng rng(opts.seed);
    std::vector<NeighborList> lists(n);
    for (std::size_t i = 0; i < n; ++i) {
        while (lists[i].items.size() < k) {
            const auto j = rng.index(n);
            if (j != i) {
                lists[i].push({euclidean(points, static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)), static_cast<int>(j)}, k);
            }
        }
    }

    const std::size_t sample = std::max<std::size_t>(1, static_cast<std::size_t>(opts.sample_rate * static_cast<double>(k)));
    for (int iter = 0; iter < opts.max_iterations; ++iter) {
        std::vector<std::vector<int>> fresh(n), old(n), fresh_rev(n), old_rev(n);
        for (std::size_t i = 0; i < n; ++i) {
            auto& list = lists[i];
            for (std::size_t j = 0; j < list.items.size(); ++j) {
                const int other = list.items[j].second;
                if (list.fresh[j]) {
                    if (fresh[i].size() < sample) {
                        fresh[i].push_back(other);
                        fresh_rev[static_cast<std::size_t>(other)].push_back(static_cast<int>(i));
                        list.fresh[j] = 0;
                    }
                } else {
                    old[i].push_back(other);
                    old_rev[static_cast<std::size_t>(other)].push_back(static_cast<int>(i));
                }
            }
        }

        std::size_t updates = 0;
        std::vector<int> new_set, old_set;
        for (std::size_t v = 0; v < n; ++v) {
            new_set = fresh[v];
            for (std::size_t r = 0; r < fresh_rev[v].size() && r < sample; ++r) {
                new_set.push_back(fresh_rev[v][rng.index(fresh_rev[v].size())]);
            }
            old_set = old[v];
            for (std::size_t r = 0; r < old_rev[v].size() && r < sample; ++r) {
                old_set.push_back(old_rev[v][rng.index(old_rev[v].size())]);
            }
            std::sort(new_set.begin(), new_set.end());
            new_set.erase(std::unique(new_set.begin(), new_set.end()), new_set.end());
            std::sort(old_set.begin(), old_set.end());
            old_set.erase(std::unique(old_set.begin(), old_set.end()), old_set.end());

            auto join = [&](int a, int b) {
                if (a == b) {
                    return;
                }
                const double dist = euclidean(points, a, b);
                updates += lists[static_cast<std::size_t>(a)].push({dist, b}, k);
                updates += lists[static_cast<std::size_t>(b)].push({dist, a}, k);
            };
            for (std::size_t x = 0; x < new_set.size(); ++x) {
                for (std::size_t y = x + 1; y < new_set.size(); ++y) {
                    join(new_set[x], new_set[y]);
                }
                for (int o : old_set) {
                    join(new_set[x], o);
                }
            }
        }
        if (static_cast<double>(updates) <= opts.early_stop * static_cast<double>(n * k)) {
            break;
        }
    }

    NeighborGraph g{n, k, std::vector<int>(n * k), std::vector<double>(n * k)};
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            g.indices[i * k + j] = lists[i].items[j].second;
            g.distances[i * k + j] = lists[i].items[j].first;
        }
    }
    return g;
}

} // namespace detail

/**
 * Build the k-nearest-neighbor graph of the rows of `points`.
 *
 * Exact mode scans all pairs and breaks distance ties by lower index.
 * Approximate mode runs NN-descent from seeded random lists.
 */
inline NeighborGraph knn_graph(const Matrix& points, std::size_t k, const KnnOptions& opts = {}) {
    const auto n = static_cast<std::size_t>(points.rows());
    if (k < 1 || k >= n) {
        throw PreconditionError("knn_graph needs 1 <= k < n (k=" + std::to_string(k) + ", n=" + std::to_string(n) + ")");
    }
    if (opts.mode == KnnMode::exact) {
        return detail::knn_exact(points, k, opts.threads);
    }
    return detail::knn_nndescent(points, k, opts);
}

/**
 * Fraction of the exact neighbors of `sample_size` seeded random nodes that
 * the approximate graph also reports.
 */
inline double knn_recall(const Matrix& points, const NeighborGraph& approx, std::size_t sample_size, std::uint64_t seed) {
    const std::size_t n = approx.n;
    const std::size_t k = approx.k;
    std::vector<std::size_t> nodes(n);
    for (std::size_t i = 0; i < n; ++i) {
        nodes[i] = i;
    }
    Rng rng(seed);
    rng.shuffle(nodes);
    nodes.resize(std::min(sample_size, n));

    std::size_t hits = 0;
    std::vector<detail::Candidate> row;
    for (std::size_t i : nodes) {
        row.clear();
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) {
                row.emplace_back(euclidean(points, static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)), static_cast<int>(j));
            }
        }
        std::partial_sort(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(k), row.end(), detail::closer);
        for (std::size_t a = 0; a < k; ++a) {
            for (std::size_t b = 0; b < k; ++b) {
                if (approx.index(i, b) == row[a].second) {
                    ++hits;
                    break;
                }
            }
        }
    }
    return static_cast<double>(hits) / static_cast<double>(nodes.size() * k);
}

} // namespace n2d

#endif
