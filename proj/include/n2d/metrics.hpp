#ifndef N2D_METRICS_HPP
#define N2D_METRICS_HPP

#include "common.hpp"
#include "json.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

/**
 * @file metrics.hpp
 *
 * @brief Clustering accuracy under the best label matching, normalized
 * mutual information, and wall-clock stage timing.
 */

namespace n2d {

/**
 * Minimum-cost perfect matching on a square cost matrix (potential-based
 * Hungarian method, O(k^3)). Entry `i` of the result is the column assigned
 * to row `i`. Rectangular inputs are zero-padded to square first, in which
 * case the result has the padded size.
 */
inline std::vector<int> hungarian(const Eigen::MatrixXd& cost_in) {
    if (!cost_in.allFinite()) {
        throw PreconditionError("hungarian cost matrix contains non-finite entries");
    }
    const Eigen::Index k = std::max(cost_in.rows(), cost_in.cols());
    if (k == 0) {
        return {};
    }
    Eigen::MatrixXd cost = Eigen::MatrixXd::Zero(k, k);
    cost.topLeftCorner(cost_in.rows(), cost_in.cols()) = cost_in;

    const auto n = static_cast<std::size_t>(k);
    const double inf = std::numeric_limits<double>::infinity();
    // 1-based arrays; column 0 is the virtual source.
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = p[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) {
                    continue;
                }
                const double cur = cost(static_cast<Eigen::Index>(i0 - 1), static_cast<Eigen::Index>(j - 1)) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<int> assignment(n, -1);
    for (std::size_t j = 1; j <= n; ++j) {
        assignment[p[j] - 1] = static_cast<int>(j - 1);
    }
    return assignment;
}

/// Total cost of `assignment` on the zero-padded square version of `cost`.
inline double assignment_cost(const Eigen::MatrixXd& cost, const std::vector<int>& assignment) {
    double total = 0.0;
    for (std::size_t i = 0; i < assignment.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        const auto c = static_cast<Eigen::Index>(assignment[i]);
        if (r < cost.rows() && c < cost.cols()) {
            total += cost(r, c);
        }
    }
    return total;
}

/// Co-occurrence counts: rows are true labels, columns predicted labels (both in sorted id order).
struct ContingencyTable {
    Eigen::MatrixXd counts;
    std::vector<int> true_ids;
    std::vector<int> pred_ids;
    std::size_t n = 0;
};

inline ContingencyTable contingency(const Labels& y, const Labels& c) {
    if (y.size() != c.size()) {
        throw DimensionError("label vectors differ in length (" + std::to_string(y.size()) + " vs " + std::to_string(c.size()) + ")");
    }
    if (y.empty()) {
        throw PreconditionError("label vectors are empty");
    }
    ContingencyTable t;
    t.n = y.size();
    std::map<int, int> yi, ci;
    for (std::size_t i = 0; i < y.size(); ++i) {
        yi.emplace(y[i], 0);
        ci.emplace(c[i], 0);
    }
    for (auto& [id, slot] : yi) {
        slot = static_cast<int>(t.true_ids.size());
        t.true_ids.push_back(id);
    }
    for (auto& [id, slot] : ci) {
        slot = static_cast<int>(t.pred_ids.size());
        t.pred_ids.push_back(id);
    }
    t.counts = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(t.true_ids.size()), static_cast<Eigen::Index>(t.pred_ids.size()));
    for (std::size_t i = 0; i < y.size(); ++i) {
        t.counts(yi[y[i]], ci[c[i]]) += 1.0;
    }
    return t;
}

struct AccuracyResult {
    double acc = 0.0;
    /// Predicted cluster id -> matched true label id (-1 when left unmatched).
    std::map<int, int> mapping;
};

/// Fraction of points whose cluster maps to their label under the best one-to-one mapping.
inline AccuracyResult accuracy(const Labels& y, const Labels& c) {
    const ContingencyTable t = contingency(y, c);
    // Transpose so rows are clusters; the result reads directly as cluster -> label.
    const std::vector<int> match = hungarian(-t.counts.transpose());
    AccuracyResult out;
    double matched = 0.0;
    for (std::size_t r = 0; r < t.pred_ids.size(); ++r) {
        const auto col = static_cast<std::size_t>(match[r]);
        if (col < t.true_ids.size()) {
            out.mapping[t.pred_ids[r]] = t.true_ids[col];
            matched += t.counts(static_cast<Eigen::Index>(col), static_cast<Eigen::Index>(r));
        } else {
            out.mapping[t.pred_ids[r]] = -1;
        }
    }
    out.acc = matched / static_cast<double>(t.n);
    return out;
}

/// Normalized mutual information with arithmetic-mean normalization (natural log).
inline double nmi(const Labels& y, const Labels& c) {
    const ContingencyTable t = contingency(y, c);
    const double n = static_cast<double>(t.n);
    const Eigen::VectorXd row = t.counts.rowwise().sum();
    const Eigen::RowVectorXd col = t.counts.colwise().sum();
    auto entropy = [n](const auto& marginal) {
        double h = 0.0;
        for (Eigen::Index i = 0; i < marginal.size(); ++i) {
            if (marginal(i) > 0.0) {
                const double p = marginal(i) / n;
                h -= p * std::log(p);
            }
        }
        return h;
    };
    const double hy = entropy(row);
    const double hc = entropy(col);
    if (hy == 0.0 && hc == 0.0) {
        return 1.0;
    }
    if (hy == 0.0 || hc == 0.0) {
        return 0.0;
    }
    double mi = 0.0;
    for (Eigen::Index i = 0; i < t.counts.rows(); ++i) {
        for (Eigen::Index j = 0; j < t.counts.cols(); ++j) {
            const double nij = t.counts(i, j);
            if (nij > 0.0) {
                mi += nij / n * std::log(n * nij / (row(i) * col(j)));
            }
        }
    }
    return std::clamp(2.0 * mi / (hy + hc), 0.0, 1.0);
}

/**
 * Wall-clock stage durations from a steady clock. `scope(name)` returns a
 * guard that adds its lifetime to the named stage; the total runs from
 * construction until `stop()`.
 */
class StageTimer {
  public:
    using Clock = std::chrono::steady_clock;

    class Scope {
      public:
        Scope(StageTimer& owner, std::string name) : owner_(&owner), name_(std::move(name)), start_(Clock::now()) {}
        Scope(const Scope&) = delete;
        Scope& operator=(const Scope&) = delete;
        Scope(Scope&& other) noexcept : owner_(std::exchange(other.owner_, nullptr)), name_(std::move(other.name_)), start_(other.start_) {}
        Scope& operator=(Scope&&) = delete;
        ~Scope() { finish(); }

        /// Ends the measurement early; later calls are no-ops.
        void finish() {
            if (owner_ != nullptr) {
                owner_->add(name_, std::chrono::duration<double>(Clock::now() - start_).count());
                owner_ = nullptr;
            }
        }

      private:
        StageTimer* owner_;
        std::string name_;
        Clock::time_point start_;
    };

    StageTimer() : start_(Clock::now()) {}

    Scope scope(std::string name) { return Scope(*this, std::move(name)); }

    void add(const std::string& name, double seconds) { stages_[name] += seconds; }

    void stop() {
        if (!stopped_) {
            total_ = std::chrono::duration<double>(Clock::now() - start_).count();
            stopped_ = true;
        }
    }

    double seconds(const std::string& name) const {
        const auto it = stages_.find(name);
        return it == stages_.end() ? 0.0 : it->second;
    }

    double minutes(const std::string& name) const { return seconds(name) / 60.0; }

    double total_seconds() const {
        return stopped_ ? total_ : std::chrono::duration<double>(Clock::now() - start_).count();
    }

    const std::map<std::string, double>& stages() const { return stages_; }

  private:
    Clock::time_point start_;
    std::map<std::string, double> stages_;
    double total_ = 0.0;
    bool stopped_ = false;
};

struct StageTimings {
    double ae_s = 0.0;
    double manifold_s = 0.0;
    double cluster_s = 0.0;
    double total_s = 0.0;
};

struct MetricsReport {
    double acc = 0.0;
    double nmi = 0.0;
    std::map<int, int> mapping;
    StageTimings timings;
};

inline MetricsReport evaluate(const Labels& y, const Labels& c) {
    MetricsReport r;
    AccuracyResult a = accuracy(y, c);
    r.acc = a.acc;
    r.mapping = std::move(a.mapping);
    r.nmi = nmi(y, c);
    return r;
}

inline nlohmann::json to_json(const MetricsReport& r) {
    nlohmann::json mapping = nlohmann::json::object();
    for (const auto& [cluster, label] : r.mapping) {
        mapping[std::to_string(cluster)] = label;
    }
    return {{"acc", r.acc},
            {"nmi", r.nmi},
            {"mapping", mapping},
            {"timings",
             {{"ae_s", r.timings.ae_s},
              {"manifold_s", r.timings.manifold_s},
              {"cluster_s", r.timings.cluster_s},
              {"total_s", r.timings.total_s},
              {"ae_min", r.timings.ae_s / 60.0},
              {"manifold_min", r.timings.manifold_s / 60.0},
              {"cluster_min", r.timings.cluster_s / 60.0},
              {"total_min", r.timings.total_s / 60.0}}}};
}

inline MetricsReport metrics_from_json(const nlohmann::json& j) {
    MetricsReport r;
    r.acc = j.at("acc").get<double>();
    r.nmi = j.at("nmi").get<double>();
    for (const auto& [cluster, label] : j.at("mapping").items()) {
        r.mapping[std::stoi(cluster)] = label.get<int>();
    }
    const auto& t = j.at("timings");
    r.timings = {t.at("ae_s").get<double>(), t.at("manifold_s").get<double>(), t.at("cluster_s").get<double>(),
                 t.at("total_s").get<double>()};
    return r;
}

} // namespace n2d

#endif
