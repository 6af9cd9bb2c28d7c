#include "test_helpers.hpp"

#include <gtest/gtest.h>

#include <numeric>
#include <thread>

using namespace n2d;

namespace {

double brute_force_min(const Eigen::MatrixXd& cost) {
    const auto k = static_cast<int>(cost.rows());
    std::vector<int> perm(static_cast<std::size_t>(k));
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
        double total = 0.0;
        for (int i = 0; i < k; ++i) {
            total += cost(i, perm[static_cast<std::size_t>(i)]);
        }
        best = std::min(best, total);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

Eigen::MatrixXd random_integer_matrix(int k, Rng& rng) {
    Eigen::MatrixXd m(k, k);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        m.data()[i] = static_cast<double>(rng.index(100));
    }
    return m;
}

bool is_permutation(std::vector<int> p) {
    std::sort(p.begin(), p.end());
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] != static_cast<int>(i)) {
            return false;
        }
    }
    return true;
}

} // namespace

TEST(Hungarian, IdentityFavoringCost) {
    const Eigen::MatrixXd cost = Eigen::MatrixXd::Ones(5, 5) - Eigen::MatrixXd::Identity(5, 5);
    EXPECT_EQ(hungarian(cost), (std::vector<int>{0, 1, 2, 3, 4}));
}

TEST(Hungarian, AllEqualCosts) {
    const Eigen::MatrixXd cost = Eigen::MatrixXd::Constant(4, 4, 2.5);
    const auto p = hungarian(cost);
    EXPECT_TRUE(is_permutation(p));
    EXPECT_DOUBLE_EQ(assignment_cost(cost, p), 4 * 2.5);
}

TEST(Hungarian, SixBySixMatchesExhaustiveSearch) {
    Rng rng(2024);
    for (int trial = 0; trial < 1000; ++trial) {
        const Eigen::MatrixXd cost = random_integer_matrix(6, rng);
        const auto p = hungarian(cost);
        ASSERT_TRUE(is_permutation(p));
        ASSERT_EQ(assignment_cost(cost, p), brute_force_min(cost)) << "trial " << trial;
    }
}

TEST(Hungarian, AllSizesUpToSeven) {
    Rng rng(99);
    for (int k = 1; k <= 7; ++k) {
        for (int trial = 0; trial < 50; ++trial) {
            Eigen::MatrixXd cost = random_integer_matrix(k, rng);
            if (trial % 2 == 1) {
                cost = -cost; // negative entries
            }
            EXPECT_EQ(assignment_cost(cost, hungarian(cost)), brute_force_min(cost));
        }
    }
}

TEST(Hungarian, RectangularIsZeroPadded) {
    Eigen::MatrixXd cost(2, 3);
    cost << 5, 1, 9, 2, 8, 0;
    const auto p = hungarian(cost);
    ASSERT_EQ(p.size(), 3u);
    EXPECT_EQ(p[0], 1);
    EXPECT_EQ(p[1], 2);
    EXPECT_DOUBLE_EQ(assignment_cost(cost, p), 1.0);
}

TEST(Hungarian, RejectsNonFinite) {
    Eigen::MatrixXd cost = Eigen::MatrixXd::Zero(2, 2);
    cost(0, 1) = std::numeric_limits<double>::infinity();
    EXPECT_THROW(hungarian(cost), PreconditionError);
}

TEST(Accuracy, IdentityAndRelabeling) {
    const Labels y{0, 0, 1, 1, 2, 2, 2};
    EXPECT_EQ(accuracy(y, y).acc, 1.0);
    const Labels relabeled{7, 7, -2, -2, 4, 4, 4};
    const AccuracyResult r = accuracy(y, relabeled);
    EXPECT_EQ(r.acc, 1.0);
    EXPECT_EQ(r.mapping.at(7), 0);
    EXPECT_EQ(r.mapping.at(-2), 1);
    EXPECT_EQ(r.mapping.at(4), 2);
}

TEST(Accuracy, HandCase) {
    EXPECT_NEAR(accuracy({0, 0, 1, 1}, {1, 1, 1, 0}).acc, 0.75, 1e-12);
}

TEST(Accuracy, ConstantPredictionFloor) {
    Labels y;
    for (int k = 0; k < 4; ++k) {
        y.insert(y.end(), 25, k);
    }
    const Labels constant(100, 3);
    EXPECT_GE(accuracy(y, constant).acc, 0.25);
    EXPECT_DOUBLE_EQ(accuracy(y, constant).acc, 0.25);
}

TEST(Accuracy, InvariantUnderBijections) {
    Rng rng(5);
    Labels y(200), c(200);
    for (std::size_t i = 0; i < 200; ++i) {
        y[i] = static_cast<int>(rng.index(5));
        c[i] = rng.uniform() < 0.7 ? y[i] : static_cast<int>(rng.index(6));
    }
    const double base = accuracy(y, c).acc;
    std::vector<int> perm{3, 5, 0, 1, 4, 2};
    Labels c2(c.size()), y2(y.size());
    for (std::size_t i = 0; i < c.size(); ++i) {
        c2[i] = perm[static_cast<std::size_t>(c[i])] * 10 + 1;
        y2[i] = perm[static_cast<std::size_t>(y[i])] - 7;
    }
    EXPECT_NEAR(accuracy(y, c2).acc, base, 1e-12);
    EXPECT_NEAR(accuracy(y2, c).acc, base, 1e-12);
}

TEST(Accuracy, Errors) {
    EXPECT_THROW(accuracy({0, 1}, {0}), DimensionError);
    EXPECT_THROW(accuracy({}, {}), PreconditionError);
}

TEST(Nmi, ReferenceCases) {
    const Labels y{0, 0, 1, 1, 2, 2};
    EXPECT_NEAR(nmi(y, y), 1.0, 1e-12);
    EXPECT_NEAR(nmi({0, 0, 1, 1}, {5, 5, 5, 5}), 0.0, 1e-12);
    // Direct-formula oracle and sklearn agree (tests/oracles/misc_oracles.py).
    EXPECT_NEAR(nmi({0, 0, 1, 1}, {0, 1, 1, 1}), 0.34371101848545083, 1e-12);
    EXPECT_EQ(nmi({1, 1, 1}, {2, 2, 2}), 1.0);
    EXPECT_THROW(nmi({0, 1}, {0}), DimensionError);
}

TEST(Nmi, SymmetricAndBounded) {
    Rng rng(8);
    for (int trial = 0; trial < 50; ++trial) {
        Labels y(60), c(60);
        for (std::size_t i = 0; i < 60; ++i) {
            y[i] = static_cast<int>(rng.index(4));
            c[i] = static_cast<int>(rng.index(7));
        }
        const double a = nmi(y, c);
        EXPECT_NEAR(a, nmi(c, y), 1e-12);
        EXPECT_GE(a, 0.0);
        EXPECT_LE(a, 1.0);
    }
}

TEST(Contingency, EntriesSumToN) {
    const ContingencyTable t = contingency({0, 1, 1, 2}, {3, 3, 4, 4});
    EXPECT_EQ(t.counts.sum(), 4.0);
    EXPECT_EQ(t.counts.rows(), 3);
    EXPECT_EQ(t.counts.cols(), 2);
    EXPECT_EQ(t.counts(1, 0), 1.0);
}

TEST(StageTimer, NestedAndTotals) {
    StageTimer timer;
    {
        auto outer = timer.scope("outer");
        {
            auto inner = timer.scope("inner");
            std::this_thread::sleep_for(std::chrono::milliseconds(5));
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(2));
    }
    {
        auto other = timer.scope("other");
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    timer.stop();
    EXPECT_GT(timer.seconds("inner"), 0.0);
    EXPECT_LE(timer.seconds("inner"), timer.seconds("outer"));
    const double stages = timer.seconds("outer") + timer.seconds("other");
    EXPECT_GE(timer.total_seconds(), stages);
    EXPECT_LE(timer.total_seconds() - stages, 0.01 * timer.total_seconds() + 1e-3);
    EXPECT_DOUBLE_EQ(timer.minutes("outer"), timer.seconds("outer") / 60.0);
}

TEST(MetricsReport, JsonFieldNames) {
    MetricsReport r = evaluate({0, 0, 1}, {1, 1, 0});
    r.timings = {1.0, 2.0, 3.0, 6.5};
    const auto j = to_json(r);
    EXPECT_EQ(j.at("acc").get<double>(), 1.0);
    EXPECT_NEAR(j.at("nmi").get<double>(), 1.0, 1e-12);
    EXPECT_EQ(j.at("mapping").at("1").get<int>(), 0);
    EXPECT_EQ(j.at("timings").at("total_s").get<double>(), 6.5);
    const MetricsReport back = metrics_from_json(j);
    EXPECT_EQ(back.mapping, r.mapping);
    EXPECT_EQ(back.timings.cluster_s, 3.0);
}
