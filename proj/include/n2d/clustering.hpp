#ifndef N2D_CLUSTERING_HPP
#define N2D_CLUSTERING_HPP

#include "common.hpp"
#include "container.hpp"
#include "embedding.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

/**
 * @file clustering.hpp
 *
 * @brief Shallow clusterers: k-means (k-means++ seeding, Lloyd iterations)
 * and a full-covariance Gaussian mixture fitted by EM.
 */

namespace n2d {

struct ClusterAssignment {
    Labels labels;
    /// n x c, rows sum to one. Absent for hard clusterers.
    std::optional<Matrix> responsibilities;
};

enum class ClustererKind { gmm, kmeans };

inline std::string to_string(ClustererKind kind) {
    return kind == ClustererKind::gmm ? "gmm" : "kmeans";
}

inline ClustererKind parse_clusterer_kind(std::string_view text) {
    if (text == "gmm") {
        return ClustererKind::gmm;
    }
    if (text == "kmeans") {
        return ClustererKind::kmeans;
    }
    throw ConfigError("unknown clusterer '" + std::string(text) + "'");
}

struct KMeansResult {
    ClusterAssignment assignment;
    Matrix centers;
    double wcss = 0.0;
    int iterations = 0;
    /// WCSS after every assignment step of the winning restart.
    std::vector<double> wcss_history;
};

struct KMeansOptions {
    int max_iterations = 300;
    double tolerance = 1e-6; // largest center displacement
};

namespace detail {

inline Matrix kmeanspp_seed(const Matrix& x, int c, Rng& rng) {
    const Eigen::Index n = x.rows();
    Matrix centers(c, x.cols());
    centers.row(0) = x.row(static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(n))));
    Eigen::VectorXd d2 = (x.rowwise() - centers.row(0)).rowwise().squaredNorm();
    for (int k = 1; k < c; ++k) {
        const double total = d2.sum();
        Eigen::Index pick = 0;
        if (total > 0.0) {
            double target = rng.uniform() * total;
            pick = n - 1;
            for (Eigen::Index i = 0; i < n; ++i) {
                target -= d2(i);
                if (target < 0.0) {
                    pick = i;
                    break;
                }
            }
            // Never pick a zero-weight point through rounding.
            while (d2(pick) <= 0.0 && pick > 0) {
                --pick;
            }
        } else {
            pick = static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(n)));
        }
        centers.row(k) = x.row(pick);
        d2 = d2.cwiseMin((x.rowwise() - centers.row(k)).rowwise().squaredNorm());
    }
    return centers;
}

/// Nearest center per row (ties to the lower index); returns WCSS.
inline double assign_nearest(const Matrix& x, const Matrix& centers, Labels& labels, Eigen::VectorXd& dist2) {
    const Eigen::Index n = x.rows();
    labels.resize(static_cast<std::size_t>(n));
    dist2.resize(n);
    double wcss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        int best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (Eigen::Index k = 0; k < centers.rows(); ++k) {
            const double d = (x.row(i) - centers.row(k)).squaredNorm();
            if (d < best_d) {
                best_d = d;
                best = static_cast<int>(k);
            }
        }
        labels[static_cast<std::size_t>(i)] = best;
        dist2(i) = best_d;
        wcss += best_d;
    }
    return wcss;
}

/// Gives every empty cluster the point farthest from its center, taken from a
/// cluster that keeps at least one member. Returns true if anything moved.
inline bool repair_empty(int c, Labels& labels, Eigen::VectorXd& dist2) {
    std::vector<int> counts(static_cast<std::size_t>(c), 0);
    for (int l : labels) {
        ++counts[static_cast<std::size_t>(l)];
    }
    bool moved = false;
    for (int k = 0; k < c; ++k) {
        if (counts[static_cast<std::size_t>(k)] > 0) {
            continue;
        }
        Eigen::Index far = -1;
        for (Eigen::Index i = 0; i < dist2.size(); ++i) {
            if (counts[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])] > 1 && (far < 0 || dist2(i) > dist2(far))) {
                far = i;
            }
        }
        --counts[static_cast<std::size_t>(labels[static_cast<std::size_t>(far)])];
        labels[static_cast<std::size_t>(far)] = k;
        counts[static_cast<std::size_t>(k)] = 1;
        dist2(far) = 0.0;
        moved = true;
    }
    return moved;
}

inline Matrix cluster_means(const Matrix& x, const Labels& labels, const Matrix& previous) {
    Matrix sums = Matrix::Zero(previous.rows(), x.cols());
    std::vector<int> counts(static_cast<std::size_t>(previous.rows()), 0);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        sums.row(labels[static_cast<std::size_t>(i)]) += x.row(i);
        ++counts[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
    }
    Matrix out = previous;
    for (Eigen::Index k = 0; k < out.rows(); ++k) {
        if (counts[static_cast<std::size_t>(k)] > 0) {
            out.row(k) = sums.row(k) / counts[static_cast<std::size_t>(k)];
        }
    }
    return out;
}

inline KMeansResult lloyd(const Matrix& x, int c, Rng& rng, const KMeansOptions& opts) {
    KMeansResult r;
    r.centers = kmeanspp_seed(x, c, rng);
    Labels labels;
    Eigen::VectorXd dist2;
    for (int it = 1; it <= opts.max_iterations; ++it) {
        assign_nearest(x, r.centers, labels, dist2);
        r.iterations = it;
        repair_empty(c, labels, dist2);
        r.wcss = dist2.sum();
        r.wcss_history.push_back(r.wcss);

        Matrix updated = cluster_means(x, labels, r.centers);
        const double shift = (updated - r.centers).rowwise().norm().maxCoeff();
        r.centers = std::move(updated);
        if (shift < opts.tolerance) {
            break;
        }
    }
    r.wcss = assign_nearest(x, r.centers, labels, dist2);
    if (repair_empty(c, labels, dist2)) {
        r.centers = cluster_means(x, labels, r.centers);
        r.wcss = 0.0;
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            r.wcss += (x.row(i) - r.centers.row(labels[static_cast<std::size_t>(i)])).squaredNorm();
        }
    }
    if (r.wcss_history.empty() || r.wcss < r.wcss_history.back()) {
        r.wcss_history.push_back(r.wcss);
    }
    r.assignment.labels = std::move(labels);
    return r;
}

} // namespace detail

/**
 * k-means with k-means++ seeding; the restart with the lowest
 * within-cluster sum of squares wins (earliest on ties).
 */
inline KMeansResult kmeans_fit(const Embedding& emb, int c, int n_init, std::uint64_t seed, const KMeansOptions& opts = {}) {
    const auto n = static_cast<int>(emb.n());
    if (c < 1 || c > n) {
        throw PreconditionError("kmeans needs 1 <= c <= n (c=" + std::to_string(c) + ", n=" + std::to_string(n) + ")");
    }
    if (n_init < 1) {
        throw ConfigError("kmeans n_init must be >= 1");
    }
    Rng root(seed);
    std::optional<KMeansResult> best;
    for (int r = 0; r < n_init; ++r) {
        Rng rng(root.fork());
        KMeansResult run = detail::lloyd(emb.coords, c, rng, opts);
        if (!best || run.wcss < best->wcss) {
            best = std::move(run);
        }
    }
    return std::move(*best);
}

/**
 * Mixture weights, means (c x m) and full covariances. `ridge` is the
 * diagonal loading applied in every M-step of the run that produced it.
 */
struct GmmModel {
    Eigen::VectorXd weights;
    Matrix means;
    std::vector<Eigen::MatrixXd> covariances;
    bool converged = false;
    double final_log_likelihood = -std::numeric_limits<double>::infinity();
    double ridge = 0.0;
    int iterations = 0;
    std::vector<double> log_likelihood_history;

    std::size_t components() const { return static_cast<std::size_t>(weights.size()); }
    std::size_t dims() const { return static_cast<std::size_t>(means.cols()); }
};

struct GmmOptions {
    int max_iterations = 100;
    /// Stop when the log-likelihood gain drops below tolerance * |LL|.
    double tolerance = 1e-3;
    /// Ridge is ridge_scale * trace(data covariance) / m.
    double ridge_scale = 1e-6;
    int ridge_escalations = 3;
};

struct GmmFit {
    GmmModel model;
    ClusterAssignment assignment;
};

namespace detail {

struct Factorized {
    std::vector<Eigen::LLT<Eigen::MatrixXd>> chol;
    std::vector<double> log_norm; // log weight - 0.5 (m log 2pi + log det)
};

inline bool factorize(const GmmModel& model, Factorized& f) {
    const auto c = static_cast<std::size_t>(model.weights.size());
    const double m = static_cast<double>(model.means.cols());
    f.chol.resize(c);
    f.log_norm.resize(c);
    for (std::size_t k = 0; k < c; ++k) {
        f.chol[k].compute(model.covariances[k]);
        if (f.chol[k].info() != Eigen::Success) {
            return false;
        }
        const Eigen::MatrixXd l = f.chol[k].matrixL();
        const double logdet = 2.0 * l.diagonal().array().log().sum();
        if (!std::isfinite(logdet)) {
            return false;
        }
        f.log_norm[k] = std::log(model.weights(static_cast<Eigen::Index>(k))) - 0.5 * (m * std::log(2.0 * 3.14159265358979323846) + logdet);
    }
    return true;
}

/// Log-sum-exp stabilized responsibilities; returns the total log-likelihood.
inline double e_step(const Matrix& x, const GmmModel& model, const Factorized& f, Matrix& resp) {
    const Eigen::Index n = x.rows();
    const auto c = static_cast<Eigen::Index>(model.weights.size());
    resp.resize(n, c);
    Eigen::MatrixXd centered;
    for (Eigen::Index k = 0; k < c; ++k) {
        centered = (x.rowwise() - model.means.row(k)).transpose();
        f.chol[static_cast<std::size_t>(k)].matrixL().solveInPlace(centered);
        const Eigen::VectorXd maha = centered.colwise().squaredNorm().transpose();
        resp.col(k) = (f.log_norm[static_cast<std::size_t>(k)] - 0.5 * maha.array()).matrix();
    }
    const double log_min = std::log(std::numeric_limits<double>::min());
    double ll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double top = resp.row(i).maxCoeff();
        const double lse = top + std::log((resp.row(i).array() - top).exp().sum());
        // Vectorized exp saturates at the smallest normal double instead of reaching zero.
        const Eigen::ArrayXd shifted = (resp.row(i).array() - lse).transpose();
        resp.row(i) = (shifted < log_min).select(0.0, shifted.exp()).transpose();
        resp.row(i) /= resp.row(i).sum();
        ll += lse;
    }
    return ll;
}

inline void m_step(const Matrix& x, const Matrix& resp, double ridge, GmmModel& model) {
    const Eigen::Index n = x.rows();
    const Eigen::Index c = resp.cols();
    const Eigen::Index m = x.cols();
    Eigen::VectorXd nk = resp.colwise().sum().transpose();
    nk.array() += 10.0 * std::numeric_limits<double>::epsilon();
    model.weights = nk / nk.sum();
    model.means = (resp.transpose() * x).array().colwise() / nk.array();
    for (Eigen::Index k = 0; k < c; ++k) {
        const Matrix centered = x.rowwise() - model.means.row(k);
        Eigen::MatrixXd cov = centered.transpose() * (centered.array().colwise() * resp.col(k).array()).matrix();
        cov /= nk(k);
        cov = 0.5 * (cov + cov.transpose());
        cov.diagonal().array() += ridge;
        model.covariances[static_cast<std::size_t>(k)] = std::move(cov);
    }
    (void)n;
    (void)m;
}

inline Labels argmax_rows(const Matrix& resp) {
    Labels labels(static_cast<std::size_t>(resp.rows()));
    for (Eigen::Index i = 0; i < resp.rows(); ++i) {
        Eigen::Index best = 0;
        for (Eigen::Index k = 1; k < resp.cols(); ++k) {
            if (resp(i, k) > resp(i, best)) {
                best = k;
            }
        }
        labels[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
    return labels;
}

inline double data_ridge(const Matrix& x, double scale) {
    const Matrix centered = x.rowwise() - x.colwise().mean();
    const double trace = centered.squaredNorm() / static_cast<double>(x.rows());
    const double ridge = scale * trace / static_cast<double>(x.cols());
    return ridge > 0.0 ? ridge : scale;
}

} // namespace detail

/**
 * EM from a given starting model. The ridge is fixed for the run unless a
 * covariance fails to factorize, in which case it grows tenfold (at most
 * `ridge_escalations` times) and the M-step is repeated.
 */
inline GmmFit gmm_em(const Matrix& x, GmmModel model, const GmmOptions& opts = {}) {
    if (static_cast<std::size_t>(x.cols()) != model.dims()) {
        throw DimensionError("gmm model dimension does not match data");
    }
    Matrix resp;
    detail::Factorized f;
    int escalations = 0;
    auto ensure_factorized = [&](const Matrix* last_resp) {
        while (!detail::factorize(model, f)) {
            if (escalations >= opts.ridge_escalations || last_resp == nullptr) {
                throw DivergenceError("gmm covariance is singular with ridge " + std::to_string(model.ridge) +
                                      " after " + std::to_string(escalations) + " escalations");
            }
            ++escalations;
            model.ridge *= 10.0;
            detail::m_step(x, *last_resp, model.ridge, model);
        }
    };

    ensure_factorized(nullptr);
    double previous = -std::numeric_limits<double>::infinity();
    double ll = detail::e_step(x, model, f, resp);
    model.log_likelihood_history.push_back(ll);
    model.converged = false;
    for (int it = 1; it <= opts.max_iterations; ++it) {
        model.iterations = it;
        if (!std::isfinite(ll)) {
            throw DivergenceError("gmm log-likelihood became non-finite at iteration " + std::to_string(it));
        }
        if (it > 1 && ll - previous < opts.tolerance * std::abs(ll)) {
            model.converged = true;
            break;
        }
        previous = ll;
        const Matrix last = resp;
        detail::m_step(x, last, model.ridge, model);
        ensure_factorized(&last);
        ll = detail::e_step(x, model, f, resp);
        model.log_likelihood_history.push_back(ll);
    }
    model.final_log_likelihood = ll;
    GmmFit out;
    out.assignment.labels = detail::argmax_rows(resp);
    out.assignment.responsibilities = std::move(resp);
    out.model = std::move(model);
    return out;
}

/// Starting model from a hard partition: cluster means, covariances (+ridge) and fractions.
inline GmmModel gmm_init_from_partition(const Matrix& x, const Labels& labels, int c, double ridge) {
    const Eigen::Index m = x.cols();
    GmmModel model;
    model.ridge = ridge;
    model.weights = Eigen::VectorXd::Zero(c);
    model.means = Matrix::Zero(c, m);
    model.covariances.assign(static_cast<std::size_t>(c), Eigen::MatrixXd::Zero(m, m));
    const Matrix global_centered = x.rowwise() - x.colwise().mean();
    const Eigen::MatrixXd global_cov = global_centered.transpose() * global_centered / static_cast<double>(x.rows());
    for (int k = 0; k < c; ++k) {
        std::vector<Eigen::Index> members;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] == k) {
                members.push_back(static_cast<Eigen::Index>(i));
            }
        }
        const auto count = static_cast<double>(members.size());
        model.weights(k) = std::max(count, 1.0);
        if (members.empty()) {
            model.means.row(k) = x.colwise().mean();
            model.covariances[static_cast<std::size_t>(k)] = global_cov;
        } else {
            Matrix sub(static_cast<Eigen::Index>(members.size()), m);
            for (std::size_t r = 0; r < members.size(); ++r) {
                sub.row(static_cast<Eigen::Index>(r)) = x.row(members[r]);
            }
            model.means.row(k) = sub.colwise().mean();
            if (members.size() < 2) {
                model.covariances[static_cast<std::size_t>(k)] = global_cov;
            } else {
                const Matrix centered = sub.rowwise() - model.means.row(k);
                model.covariances[static_cast<std::size_t>(k)] = centered.transpose() * centered / count;
            }
        }
        model.covariances[static_cast<std::size_t>(k)].diagonal().array() += ridge;
    }
    model.weights /= model.weights.sum();
    return model;
}

/**
 * Full-covariance GMM. Each of the `n_init` restarts starts from a k-means
 * partition with its own seed; the restart with the highest final
 * log-likelihood wins (earliest on ties).
 */
inline GmmFit gmm_fit(const Embedding& emb, int c, int n_init, std::uint64_t seed, const GmmOptions& opts = {}) {
    const auto n = static_cast<int>(emb.n());
    if (c < 1 || c > n) {
        throw PreconditionError("gmm needs 1 <= c <= n (c=" + std::to_string(c) + ", n=" + std::to_string(n) + ")");
    }
    if (emb.m() < 1) {
        throw PreconditionError("gmm needs at least one dimension");
    }
    if (n_init < 1) {
        throw ConfigError("gmm n_init must be >= 1");
    }
    const double ridge = detail::data_ridge(emb.coords, opts.ridge_scale);
    Rng root(seed);
    std::optional<GmmFit> best;
    for (int r = 0; r < n_init; ++r) {
        const KMeansResult km = kmeans_fit(emb, c, 1, root.fork());
        GmmFit run = gmm_em(emb.coords, gmm_init_from_partition(emb.coords, km.assignment.labels, c, ridge), opts);
        if (!best || run.model.final_log_likelihood > best->model.final_log_likelihood) {
            best = std::move(run);
        }
    }
    return std::move(*best);
}

/// Responsibilities under `model`; hard labels by argmax with ties to the lower component.
inline ClusterAssignment predict(const GmmModel& model, const Embedding& emb) {
    if (emb.m() != model.dims()) {
        throw DimensionError("gmm expects " + std::to_string(model.dims()) + " dimensions, got " + std::to_string(emb.m()));
    }
    detail::Factorized f;
    if (!detail::factorize(model, f)) {
        throw DivergenceError("gmm covariance is not positive definite");
    }
    Matrix resp;
    detail::e_step(emb.coords, model, f, resp);
    ClusterAssignment out;
    out.labels = detail::argmax_rows(resp);
    out.responsibilities = std::move(resp);
    return out;
}

inline Container to_container(const GmmModel& model) {
    Container c;
    c.meta = {{"kind", "gmm"},
              {"converged", model.converged},
              {"final_log_likelihood", model.final_log_likelihood},
              {"ridge", model.ridge},
              {"iterations", model.iterations}};
    c.tensors["weights"] = model.weights.transpose();
    c.tensors["means"] = model.means;
    for (std::size_t k = 0; k < model.covariances.size(); ++k) {
        c.tensors["covariance" + std::to_string(k)] = model.covariances[k];
    }
    return c;
}

inline GmmModel gmm_from_container(const Container& c) {
    if (c.meta.value("kind", "") != "gmm") {
        throw FormatError("container does not hold a gmm model");
    }
    GmmModel model;
    model.weights = c.tensor("weights").transpose();
    model.means = c.tensor("means");
    for (Eigen::Index k = 0; k < model.weights.size(); ++k) {
        model.covariances.emplace_back(c.tensor("covariance" + std::to_string(k)));
    }
    model.converged = c.meta.value("converged", false);
    model.final_log_likelihood = c.meta.value("final_log_likelihood", 0.0);
    model.ridge = c.meta.value("ridge", 0.0);
    model.iterations = c.meta.value("iterations", 0);
    return model;
}

/// CSV `index,hard_label[,resp_0..resp_{c-1}]`.
inline void write_assignment_csv(const std::string& path, const ClusterAssignment& a, bool with_responsibilities = true) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write '" + path + "'");
    }
    const bool resp = with_responsibilities && a.responsibilities.has_value();
    out << "index,hard_label";
    if (resp) {
        for (Eigen::Index k = 0; k < a.responsibilities->cols(); ++k) {
            out << ",resp_" << k;
        }
    }
    out << '\n' << std::setprecision(17);
    for (std::size_t i = 0; i < a.labels.size(); ++i) {
        out << i << ',' << a.labels[i];
        if (resp) {
            for (Eigen::Index k = 0; k < a.responsibilities->cols(); ++k) {
                out << ',' << (*a.responsibilities)(static_cast<Eigen::Index>(i), k);
            }
        }
        out << '\n';
    }
}

} // namespace n2d

#endif
