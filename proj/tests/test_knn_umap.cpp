#include "test_helpers.hpp"

#include <gtest/gtest.h>

#include <numeric>

using namespace n2d;
using n2d::testing::gaussian_blobs;

namespace {

Matrix random_points(int n, int d, std::uint64_t seed) {
    Rng rng(seed);
    Matrix m(n, d);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        m.data()[i] = rng.uniform();
    }
    return m;
}

/// Labels from single-linkage cut into `parts` clusters (Kruskal on all pairs).
Labels single_linkage(const Matrix& x, int parts) {
    const auto n = static_cast<int>(x.rows());
    std::vector<std::tuple<double, int, int>> edges;
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            edges.emplace_back((x.row(i) - x.row(j)).norm(), i, j);
        }
    }
    std::sort(edges.begin(), edges.end());
    std::vector<int> parent(static_cast<std::size_t>(n));
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int v) {
        while (parent[v] != v) {
            v = parent[v] = parent[parent[v]];
        }
        return v;
    };
    int components = n;
    for (const auto& [d, a, b] : edges) {
        if (components == parts) {
            break;
        }
        const int ra = find(a), rb = find(b);
        if (ra != rb) {
            parent[ra] = rb;
            --components;
        }
    }
    Labels out(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        out[i] = find(i);
    }
    return remap_labels(out);
}

} // namespace

TEST(KnnGraph, CollinearTieBreak) {
    Matrix pts(3, 1);
    pts << 0.0, 1.0, 2.0;
    const NeighborGraph g = knn_graph(pts, 1);
    EXPECT_EQ(g.index(0, 0), 1);
    EXPECT_EQ(g.index(2, 0), 1);
    EXPECT_EQ(g.index(1, 0), 0);
}

TEST(KnnGraph, ExactMatchesBruteForceScan) {
    const Matrix pts = random_points(100, 10, 7);
    const std::size_t k = 20;
    const NeighborGraph g = knn_graph(pts, k);
    for (int i = 0; i < 100; ++i) {
        std::vector<std::pair<double, int>> all;
        for (int j = 0; j < 100; ++j) {
            if (j != i) {
                double s = 0.0;
                for (int c = 0; c < 10; ++c) {
                    s += (pts(i, c) - pts(j, c)) * (pts(i, c) - pts(j, c));
                }
                all.emplace_back(std::sqrt(s), j);
            }
        }
        std::sort(all.begin(), all.end());
        for (std::size_t j = 0; j < k; ++j) {
            EXPECT_EQ(g.index(i, j), all[j].second);
            EXPECT_NEAR(g.distance(i, j), all[j].first, 1e-12);
            if (j > 0) {
                EXPECT_LE(g.distance(i, j - 1), g.distance(i, j));
            }
        }
    }
}

TEST(KnnGraph, DuplicatesAllowedSelfExcluded) {
    Matrix pts(4, 2);
    pts << 1, 1, 1, 1, 1, 1, 5, 5;
    const NeighborGraph g = knn_graph(pts, 2);
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = 0; j < 2; ++j) {
            EXPECT_NE(g.index(i, j), static_cast<int>(i));
        }
    }
    EXPECT_EQ(g.distance(0, 0), 0.0);
    EXPECT_EQ(g.distance(0, 1), 0.0);
}

TEST(KnnGraph, KMustBeBelowN) {
    const Matrix pts = random_points(5, 2, 1);
    EXPECT_THROW(knn_graph(pts, 5), PreconditionError);
    EXPECT_THROW(knn_graph(pts, 0), PreconditionError);
}

TEST(KnnGraph, ApproximateRecall) {
    const Matrix pts = random_points(3000, 10, 3);
    KnnOptions opts;
    opts.mode = KnnMode::approximate;
    opts.seed = 5;
    const NeighborGraph g = knn_graph(pts, 15, opts);
    EXPECT_GE(knn_recall(pts, g, 100, 9), 0.95);
}

TEST(UmapGraph, MembershipInvariants) {
    const Matrix pts = random_points(200, 5, 4);
    UmapConfig cfg;
    cfg.n_neighbors = 15;
    const FuzzyGraph fg = fuzzy_graph(pts, cfg);
    const double target = std::log2(15.0);
    for (std::size_t i = 0; i < fg.knn.n; ++i) {
        EXPECT_NEAR(fg.bandwidths.membership_sum[i], target, 1e-5);
        EXPECT_EQ(fg.directed[i * fg.knn.k], 1.0);
        for (std::size_t j = 0; j < fg.knn.k; ++j) {
            const double w = fg.directed[i * fg.knn.k + j];
            EXPECT_GT(w, 0.0);
            EXPECT_LE(w, 1.0);
        }
    }
    const Eigen::MatrixXd dense = Eigen::MatrixXd(fg.symmetric);
    EXPECT_EQ(dense, dense.transpose());
    EXPECT_LE(dense.maxCoeff(), 1.0);
    for (Eigen::Index i = 0; i < dense.rows(); ++i) {
        EXPECT_EQ(dense(i, i), 0.0);
        EXPECT_EQ(dense(i, fg.knn.index(static_cast<std::size_t>(i), 0)), 1.0);
    }
}

TEST(UmapGraph, ProbabilisticUnion) {
    NeighborGraph g;
    g.n = 3;
    g.k = 1;
    g.indices = {1, 0, 0};
    g.distances = {1.0, 1.0, 2.0};
    const SparseGraph sym = fuzzy_union(g, {0.5, 0.25, 0.4});
    EXPECT_DOUBLE_EQ(sym.coeff(0, 1), 0.5 + 0.25 - 0.125);
    EXPECT_DOUBLE_EQ(sym.coeff(1, 0), 0.5 + 0.25 - 0.125);
    EXPECT_DOUBLE_EQ(sym.coeff(2, 0), 0.4);
    EXPECT_DOUBLE_EQ(sym.coeff(0, 2), 0.4);
}

TEST(FitAb, AgreesWithScipyOracle) {
    // scipy.optimize.curve_fit on the same grid (tests/oracles/fit_ab_oracle.py).
    struct Case {
        double min_dist, spread, a, b, rms;
    };
    const Case cases[] = {{0.0, 1.0, 1.932808048383, 0.790493847630, 2.419978e-02},
                          {0.1, 1.0, 1.576942058494, 0.895061780159, 1.621779e-02},
                          {0.5, 2.0, 0.258874707444, 1.057507251433, 1.381438e-02}};
    for (const auto& c : cases) {
        const CurveParams p = fit_ab(c.min_dist, c.spread);
        EXPECT_NEAR(p.a, c.a, 1e-3);
        EXPECT_NEAR(p.b, c.b, 1e-3);
        EXPECT_NEAR(p.rms, c.rms, 1e-5);
    }
}

TEST(FitAb, CurveShape) {
    const CurveParams p = fit_ab(0.0, 1.0);
    EXPECT_NEAR(umap_fitted_curve(1e-12, p.a, p.b), 1.0, 1e-9);
    double previous = 1.0;
    for (int i = 1; i <= 300; ++i) {
        const double v = umap_fitted_curve(3.0 * i / 300.0, p.a, p.b);
        EXPECT_LE(v, previous);
        previous = v;
    }
    EXPECT_THROW(fit_ab(0.0, 0.0), PreconditionError);
    EXPECT_THROW(fit_ab(-1.0, 1.0), PreconditionError);
}

TEST(UmapFit, TwoBlobsSeparateUnderSingleLinkage) {
    const Dataset ds = gaussian_blobs(200, 2, 5, 10.0, 1.0, 31);
    UmapConfig cfg;
    cfg.n_neighbors = 15;
    cfg.n_components = 2;
    cfg.seed = 4;
    const Embedding e = umap_fit(from_dataset(ds), cfg);
    ASSERT_EQ(e.n(), 400u);
    ASSERT_TRUE(e.coords.allFinite());
    EXPECT_DOUBLE_EQ(accuracy(*ds.labels, single_linkage(e.coords, 2)).acc, 1.0);
    EXPECT_DOUBLE_EQ(accuracy(*ds.labels, gmm_fit(e, 2, 3, 1).assignment.labels).acc, 1.0);
}

TEST(UmapFit, SingleEpochSmoke) {
    const Matrix pts = random_points(60, 4, 2);
    UmapConfig cfg;
    cfg.n_neighbors = 5;
    cfg.n_components = 3;
    cfg.n_epochs = 1;
    const Embedding e = umap_fit(Embedding{pts, Provenance::raw, "", {}}, cfg);
    EXPECT_EQ(e.coords.rows(), 60);
    EXPECT_EQ(e.coords.cols(), 3);
    EXPECT_TRUE(e.coords.allFinite());
    EXPECT_EQ(e.provenance, Provenance::manifold);
}

TEST(UmapFit, DeterministicModeIsBitwiseReproducible) {
    const Matrix pts = random_points(150, 6, 8);
    UmapConfig cfg;
    cfg.n_neighbors = 10;
    cfg.n_components = 3;
    cfg.n_epochs = 50;
    cfg.seed = 77;
    const Embedding in{pts, Provenance::raw, "", {}};
    EXPECT_EQ(umap_fit(in, cfg).coords, umap_fit(in, cfg).coords);
}

TEST(UmapFit, AsyncModeStillSeparatesBlobs) {
    const Dataset ds = gaussian_blobs(150, 3, 4, 10.0, 1.0, 12);
    UmapConfig cfg;
    cfg.n_neighbors = 15;
    cfg.n_components = 2;
    cfg.deterministic = false;
    cfg.threads = 3;
    const Embedding e = umap_fit(from_dataset(ds), cfg);
    ASSERT_TRUE(e.coords.allFinite());
    EXPECT_DOUBLE_EQ(accuracy(*ds.labels, single_linkage(e.coords, 3)).acc, 1.0);
}

TEST(UmapFit, DisconnectedGraphIsHandled) {
    // Three far-apart tight groups: the 5-NN graph has three components.
    const Dataset ds = gaussian_blobs(30, 3, 3, 1000.0, 0.1, 5);
    UmapConfig cfg;
    cfg.n_neighbors = 5;
    cfg.n_components = 2;
    const FuzzyGraph fg = fuzzy_graph(ds.features, cfg);
    int count = 0;
    connected_components(fg.symmetric, &count);
    EXPECT_EQ(count, 3);
    const Embedding e = umap_fit(from_dataset(ds), cfg);
    EXPECT_TRUE(e.coords.allFinite());
    EXPECT_DOUBLE_EQ(accuracy(*ds.labels, single_linkage(e.coords, 3)).acc, 1.0);
}

TEST(UmapFit, ConfigValidation) {
    const Matrix pts = random_points(10, 2, 1);
    UmapConfig cfg;
    cfg.n_neighbors = 10;
    EXPECT_THROW(umap_fit(Embedding{pts, Provenance::raw, "", {}}, cfg), ConfigError);
    cfg.n_neighbors = 1;
    EXPECT_THROW(umap_fit(Embedding{pts, Provenance::raw, "", {}}, cfg), ConfigError);
    cfg.n_neighbors = 3;
    cfg.min_dist = -0.1;
    EXPECT_THROW(umap_fit(Embedding{pts, Provenance::raw, "", {}}, cfg), ConfigError);
}

TEST(Eigensolvers, SubspaceIterationMatchesDense) {
    Rng rng(2);
    Eigen::MatrixXd a(60, 60);
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        a.data()[i] = rng.normal();
    }
    a = a * a.transpose();
    const EigenResult dense = top_eigenpairs_dense(a, 4);
    SubspaceOptions opts;
    opts.seed = 3;
    const EigenResult iter = top_eigenpairs([&](const Eigen::MatrixXd& x, Eigen::MatrixXd& y) { y = a * x; }, 60, 4, opts);
    ASSERT_TRUE(iter.converged);
    for (int j = 0; j < 4; ++j) {
        EXPECT_NEAR(iter.values(j), dense.values(j), 1e-6 * dense.values(0));
        EXPECT_NEAR(std::abs(iter.vectors.col(j).dot(dense.vectors.col(j))), 1.0, 1e-6);
    }
}
