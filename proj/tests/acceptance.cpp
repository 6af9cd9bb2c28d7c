// Acceptance runner. Prints one PASS/FAIL line per criterion and exits
// non-zero if any gating criterion fails.
//
//   n2d_acceptance --suite fast        criteria 3-12 (minutes)
//   n2d_acceptance --suite pendigits   criteria 1-2 (hours on one core)
//   n2d_acceptance --suite all

#include "test_helpers.hpp"

#include "CLI11.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <chrono>
#include <cstring>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <sstream>

using namespace n2d;
using n2d::testing::gaussian_blobs;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Tally {
    int passed = 0;
    int failed = 0;
};

std::string fmt(double v, int digits = 4) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(digits) << v;
    return s.str();
}

std::string sci(double v) {
    std::ostringstream s;
    s << std::scientific << std::setprecision(2) << v;
    return s.str();
}

void report(Tally& tally, int id, const std::string& title, const std::function<Outcome()>& check) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = check();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << "CRITERION " << std::setw(2) << id << ' ' << (o.pass ? "PASS" : "FAIL") << "  " << title << "  [" << o.detail
              << "] (" << fmt(secs, 1) << " s)" << std::endl;
    (o.pass ? tally.passed : tally.failed)++;
}

Embedding raw(const Matrix& m) {
    return Embedding{m, Provenance::raw, "", {}};
}

Dataset load_pendigits() {
    DatasetSpec spec;
    spec.path = std::string(N2D_DATA_DIR) + "/pendigits.csv";
    spec.name = "pendigits";
    spec.preprocess.mode = PreprocessMode::per_feature_minmax;
    return load_dataset(spec);
}

// ---- criterion 3 ----

Outcome raw_gmm_baseline() {
    const Dataset ds = load_pendigits();
    PipelineConfig cfg;
    cfg.ae_skip = true;
    cfg.manifold = ManifoldKind::none;
    cfg.clusterer = ClustererKind::gmm;
    const AblationTable t = run_ablation(ds, {0, 1, 2, 3, 4}, cfg, {"GMM"});
    const AblationRow& row = *t.row("GMM");
    const auto best = row.best();
    if (!best) {
        return {false, "all seeds failed: " + row.reason()};
    }
    std::string seeds;
    for (const auto& c : row.per_seed) {
        seeds += (seeds.empty() ? "" : " ") + fmt(c.acc, 3);
    }
    const bool ok = std::abs(best->acc - 0.674) <= 0.05 && std::abs(best->nmi - 0.683) <= 0.05;
    return {ok, "best ACC " + fmt(best->acc) + " NMI " + fmt(best->nmi) + " (target 0.674/0.683 +-0.05); per-seed ACC " + seeds};
}

// ---- criterion 5 ----

double brute_force_assignment(const Eigen::MatrixXd& cost) {
    std::vector<int> perm(static_cast<std::size_t>(cost.rows()));
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
        double total = 0.0;
        for (std::size_t i = 0; i < perm.size(); ++i) {
            total += cost(static_cast<Eigen::Index>(i), perm[i]);
        }
        best = std::min(best, total);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

Outcome hungarian_oracle() {
    Rng rng(20240501);
    int mismatches = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const int k = 2 + trial % 6;
        Eigen::MatrixXd cost(k, k);
        for (int i = 0; i < k; ++i) {
            for (int j = 0; j < k; ++j) {
                // Integer-valued entries keep every sum exact.
                cost(i, j) = std::floor(rng.uniform(-50.0, 100.0));
            }
        }
        const std::vector<int> a = hungarian(cost);
        std::vector<int> sorted = a;
        std::sort(sorted.begin(), sorted.end());
        bool permutation = true;
        for (int i = 0; i < k; ++i) {
            permutation = permutation && sorted[static_cast<std::size_t>(i)] == i;
        }
        if (!permutation || assignment_cost(cost, a) != brute_force_assignment(cost)) {
            ++mismatches;
        }
    }
    return {mismatches == 0, "1000 matrices, sizes 2-7, mismatches " + std::to_string(mismatches)};
}

// ---- criterion 6 ----

Outcome metric_suite() {
    Rng rng(6);
    Labels y(300);
    for (auto& v : y) {
        v = static_cast<int>(rng.index(5));
    }
    const double self = nmi(y, y);
    const double vs_const = nmi(y, Labels(y.size(), 7));
    // Relabel clusters through a fixed bijection.
    const int perm[5] = {3, 0, 4, 1, 2};
    Labels c(y.size()), c_perm(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
        c[i] = i % 11 == 0 ? (y[i] + 1) % 5 : y[i];
        c_perm[i] = perm[c[i]] + 10;
    }
    const double acc_a = accuracy(y, c).acc;
    const double acc_b = accuracy(y, c_perm).acc;
    const double nmi_a = nmi(y, c);
    const double nmi_b = nmi(y, c_perm);
    const double hand = accuracy({0, 0, 1, 1}, {1, 1, 1, 0}).acc;
    const bool ok = std::abs(self - 1.0) <= 1e-12 && std::abs(vs_const) <= 1e-12 && std::abs(acc_a - acc_b) <= 1e-12 &&
                    std::abs(nmi_a - nmi_b) <= 1e-12 && std::abs(accuracy(y, y).acc - 1.0) <= 1e-12 && std::abs(hand - 0.75) <= 1e-12;
    return {ok, "NMI(y,y)=" + fmt(self, 15) + " NMI(y,const)=" + fmt(vs_const, 15) + " ACC bijection " + fmt(acc_a, 6) + "/" +
                    fmt(acc_b, 6) + " hand case " + fmt(hand, 15)};
}

// ---- criterion 7 ----

Outcome gmm_checks() {
    int violations = 0;
    double worst_drop = 0.0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const Dataset ds = gaussian_blobs(60, 4, 3, 2.5, 1.0, 900 + seed);
        GmmOptions opts;
        opts.tolerance = 0.0;
        opts.max_iterations = 60;
        const GmmFit fit = gmm_fit(from_dataset(ds), 4, 1, seed, opts);
        const auto& h = fit.model.log_likelihood_history;
        for (std::size_t i = 1; i < h.size(); ++i) {
            worst_drop = std::max(worst_drop, h[i - 1] - h[i]);
            if (h[i] < h[i - 1] - 1e-8) {
                ++violations;
            }
        }
    }

    Rng rng(77);
    Matrix pts(4000, 2);
    Labels truth;
    const Eigen::RowVector2d mu[2] = {{0.0, 0.0}, {8.0, 0.0}};
    for (int i = 0; i < 4000; ++i) {
        const int k = i < 2000 ? 0 : 1;
        pts.row(i) = mu[k] + Eigen::RowVector2d(rng.normal(), rng.normal());
        truth.push_back(k);
    }
    const GmmFit fit = gmm_fit(raw(pts), 2, 5, 3);
    const AccuracyResult acc = accuracy(truth, fit.assignment.labels);
    double mean_err = 0.0;
    for (int k = 0; k < 2; ++k) {
        mean_err = std::max(mean_err, (fit.model.means.row(k) - mu[acc.mapping.at(k)]).norm());
    }
    const bool ok = violations == 0 && acc.acc == 1.0 && mean_err < 0.1;
    return {ok, "50 runs, LL decreases > 1e-8: " + std::to_string(violations) + " (largest drop " + fmt(worst_drop, 12) +
                    "); 2-Gaussian ACC " + fmt(acc.acc) + ", worst mean error " + fmt(mean_err)};
}

// ---- criterion 8 ----

Outcome gradient_check() {
    AeConfig cfg;
    cfg.input_dim = 6;
    cfg.hidden_dims = {8, 5};
    cfg.bottleneck_dim = 3;
    cfg.seed = 21;
    AeModel model = init(cfg);
    Rng rng(8);
    for (auto& layer : model.layers) {
        for (Eigen::Index j = 0; j < layer.bias.size(); ++j) {
            layer.bias(j) = rng.uniform(-0.1, 0.1);
        }
    }
    Matrix batch(9, 6);
    for (Eigen::Index i = 0; i < batch.size(); ++i) {
        batch.data()[i] = rng.uniform();
    }
    Gradients grads;
    loss_and_gradients(model, batch, grads);
    const double h = 1e-5;
    double worst = 0.0;
    std::size_t count = 0;
    auto check = [&](double& param, double analytic) {
        const double saved = param;
        param = saved + h;
        const double up = reconstruction_loss(model, batch);
        param = saved - h;
        const double down = reconstruction_loss(model, batch);
        param = saved;
        const double numeric = (up - down) / (2.0 * h);
        worst = std::max(worst, std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6}));
        ++count;
    };
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        auto& layer = model.layers[l];
        for (Eigen::Index i = 0; i < layer.weights.size(); ++i) {
            check(layer.weights.data()[i], grads.weights[l].data()[i]);
        }
        for (Eigen::Index i = 0; i < layer.bias.size(); ++i) {
            check(layer.bias.data()[i], grads.biases[l].data()[i]);
        }
    }
    return {worst < 1e-4, std::to_string(count) + " parameters, worst relative error " + sci(worst)};
}

// ---- criterion 9 ----

Outcome tsne_checks() {
    Dataset ds = gaussian_blobs(167, 3, 5, 12.0, 1.0, 19);
    ds.features.conservativeResize(500, Eigen::NoChange);
    ds.labels->resize(500);
    TsneConfig cfg;
    cfg.seed = 3;
    const TsneResult r = tsne_run(from_dataset(ds), cfg);
    double worst = 0.0;
    for (double p : r.row_perplexity) {
        worst = std::max(worst, std::abs(p - cfg.perplexity));
    }
    const KMeansResult km = kmeans_fit(r.embedding, 3, 10, 1);
    const double acc = accuracy(*ds.labels, km.assignment.labels).acc;
    const bool ok = worst <= 1e-3 && r.kl_final < r.kl_after_exaggeration && acc == 1.0;
    return {ok, "max |perplexity - " + fmt(cfg.perplexity, 0) + "| " + fmt(worst, 8) + ", KL " + fmt(r.kl_after_exaggeration) + " -> " +
                    fmt(r.kl_final) + ", 3-blob ACC " + fmt(acc)};
}

// ---- criterion 10 ----

double spearman(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    auto ranks = [](const Eigen::VectorXd& v) {
        std::vector<int> order(static_cast<std::size_t>(v.size()));
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](int x, int y) { return v(x) < v(y); });
        Eigen::VectorXd r(v.size());
        for (std::size_t i = 0; i < order.size(); ++i) {
            r(order[i]) = static_cast<double>(i);
        }
        return r;
    };
    const Eigen::VectorXd ra = ranks(a), rb = ranks(b);
    const Eigen::VectorXd ca = ra.array() - ra.mean(), cb = rb.array() - rb.mean();
    return ca.dot(cb) / std::sqrt(ca.squaredNorm() * cb.squaredNorm());
}

Outcome isomap_checks() {
    const int n = 300;
    Matrix arc(n, 3);
    Eigen::VectorXd length(n);
    for (int i = 0; i < n; ++i) {
        const double theta = 1.5 * 3.14159265358979323846 * i / (n - 1);
        arc.row(i) << 4.0 * std::cos(theta), 4.0 * std::sin(theta), 1.2 * std::cos(theta) * std::sin(theta);
        length(i) = theta;
    }
    IsomapConfig cfg;
    cfg.n_components = 1;
    const double rho = std::abs(spearman(isomap_fit(raw(arc), cfg).coords.col(0), length));

    Rng rng(10);
    Matrix pts(80, 4);
    for (int i = 0; i < 80; ++i) {
        pts.row(i) << 4.0 * rng.normal(), 2.0 * rng.normal(), 1.0 * rng.normal(), 0.3 * rng.normal();
    }
    IsomapConfig full;
    full.n_neighbors = 79;
    full.n_components = 3;
    const Eigen::MatrixXd x = isomap_fit(raw(pts), full).coords;
    const Eigen::MatrixXd centered = pts.rowwise() - pts.colwise().mean();
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinU);
    const Eigen::MatrixXd scores = svd.matrixU().leftCols(3) * svd.singularValues().head(3).asDiagonal();
    const Eigen::JacobiSVD<Eigen::MatrixXd> align(x.transpose() * scores, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const double residual = (x * align.matrixU() * align.matrixV().transpose() - scores).norm() / scores.norm();
    return {rho >= 0.99 && residual < 1e-8, "arc Spearman |rho| " + fmt(rho, 6) + ", full-graph Procrustes residual " +
                                                sci(residual)};
}

// ---- criterion 11 ----

Outcome umap_substrate() {
    Rng rng(11);
    Matrix pts(100, 10);
    for (Eigen::Index i = 0; i < pts.size(); ++i) {
        pts.data()[i] = rng.uniform();
    }
    const std::size_t k = 15;
    const NeighborGraph g = knn_graph(pts, k);
    int knn_mismatch = 0;
    for (int i = 0; i < 100; ++i) {
        std::vector<std::pair<double, int>> all;
        for (int j = 0; j < 100; ++j) {
            if (j != i) {
                all.emplace_back((pts.row(i) - pts.row(j)).norm(), j);
            }
        }
        std::sort(all.begin(), all.end());
        for (std::size_t j = 0; j < k; ++j) {
            if (g.index(static_cast<std::size_t>(i), j) != all[j].second ||
                std::abs(g.distance(static_cast<std::size_t>(i), j) - all[j].first) > 1e-12) {
                ++knn_mismatch;
            }
        }
    }

    UmapConfig ucfg;
    ucfg.n_neighbors = k;
    const FuzzyGraph fg = fuzzy_graph(pts, ucfg);
    int membership_bad = 0;
    for (std::size_t i = 0; i < fg.knn.n; ++i) {
        membership_bad += fg.directed[i * k] == 1.0 ? 0 : 1;
        for (std::size_t j = 0; j < k; ++j) {
            const double w = fg.directed[i * k + j];
            membership_bad += (w > 0.0 && w <= 1.0) ? 0 : 1;
        }
    }
    for (int outer = 0; outer < fg.symmetric.outerSize(); ++outer) {
        for (SparseGraph::InnerIterator it(fg.symmetric, outer); it; ++it) {
            membership_bad += (it.value() > 0.0 && it.value() <= 1.0) ? 0 : 1;
        }
    }

    const Dataset blobs = gaussian_blobs(200, 2, 5, 10.0, 1.0, 31);
    std::string accs;
    bool sep = true;
    for (bool deterministic : {true, false}) {
        UmapConfig cfg;
        cfg.n_neighbors = 15;
        cfg.n_components = 2;
        cfg.seed = 4;
        cfg.deterministic = deterministic;
        cfg.threads = deterministic ? 1 : 3;
        const Embedding e = umap_fit(from_dataset(blobs), cfg);
        const double acc = accuracy(*blobs.labels, gmm_fit(e, 2, 3, 1).assignment.labels).acc;
        sep = sep && acc == 1.0;
        accs += (accs.empty() ? "" : "/") + fmt(acc);
    }
    const bool ok = knn_mismatch == 0 && membership_bad == 0 && sep;
    return {ok, "kNN mismatches " + std::to_string(knn_mismatch) + ", membership violations " + std::to_string(membership_bad) +
                    ", two-blob ACC sequential/async " + accs};
}

// ---- criterion 12 ----

Outcome determinism() {
    Dataset ds = gaussian_blobs(50, 3, 6, 5.0, 1.0, 12);
    ds = preprocess(ds, PreprocessSpec{PreprocessMode::per_feature_minmax});
    PipelineConfig base;
    base.ae.hidden_dims = {32, 16};
    base.ae.epochs = 20;
    base.ae.batch_size = 32;
    base.manifold_params.umap.n_neighbors = 10;
    base.manifold_params.umap.n_epochs = 100;
    base.manifold_params.tsne.perplexity = 20;
    base.manifold_params.tsne.n_iter = 300;
    base.n_init = 3;
    base.seed = 42;
    base.visualize = false;
    base.deterministic = true;
    base.threads = 1;
    int identical = 0, total = 0;
    std::string names;
    for (const auto& s : ablation_settings()) {
        PipelineConfig cfg = base;
        cfg.ae_skip = !s.use_ae;
        cfg.manifold = s.manifold;
        const RunReport a = run_pipeline(cfg, ds);
        const RunReport b = run_pipeline(cfg, ds);
        const bool same = std::memcmp(&a.metrics.acc, &b.metrics.acc, sizeof(double)) == 0 &&
                          std::memcmp(&a.metrics.nmi, &b.metrics.nmi, sizeof(double)) == 0 && a.assignment == b.assignment &&
                          a.embedding.coords == b.embedding.coords;
        identical += same ? 1 : 0;
        ++total;
        if (!same) {
            names += " " + s.name;
        }
    }
    return {identical == total, std::to_string(identical) + "/" + std::to_string(total) + " configurations bitwise identical" +
                                    (names.empty() ? "" : "; differing:" + names)};
}

// ---- criteria 1 and 2 ----

struct SeedResult {
    std::uint64_t seed = 0;
    double gmm_acc = 0, gmm_nmi = 0, gmm_s = 0;
    double ae_acc = 0, ae_nmi = 0, ae_cluster_s = 0;
    double n2d_acc = 0, n2d_nmi = 0, n2d_manifold_s = 0, n2d_cluster_s = 0;
    double ae_train_s = 0;
    std::vector<double> losses;
};

nlohmann::json to_json(const SeedResult& r) {
    return {{"seed", r.seed},         {"gmm_acc", r.gmm_acc},           {"gmm_nmi", r.gmm_nmi},
            {"gmm_s", r.gmm_s},       {"ae_acc", r.ae_acc},             {"ae_nmi", r.ae_nmi},
            {"ae_cluster_s", r.ae_cluster_s}, {"n2d_acc", r.n2d_acc},   {"n2d_nmi", r.n2d_nmi},
            {"n2d_manifold_s", r.n2d_manifold_s}, {"n2d_cluster_s", r.n2d_cluster_s},
            {"ae_train_s", r.ae_train_s}, {"losses", r.losses}};
}

SeedResult seed_result_from_json(const nlohmann::json& j) {
    SeedResult r;
    r.seed = j.at("seed");
    r.gmm_acc = j.at("gmm_acc");
    r.gmm_nmi = j.at("gmm_nmi");
    r.gmm_s = j.at("gmm_s");
    r.ae_acc = j.at("ae_acc");
    r.ae_nmi = j.at("ae_nmi");
    r.ae_cluster_s = j.at("ae_cluster_s");
    r.n2d_acc = j.at("n2d_acc");
    r.n2d_nmi = j.at("n2d_nmi");
    r.n2d_manifold_s = j.at("n2d_manifold_s");
    r.n2d_cluster_s = j.at("n2d_cluster_s");
    r.ae_train_s = j.at("ae_train_s");
    r.losses = j.at("losses").get<std::vector<double>>();
    return r;
}

// Results are cached per seed under a key that includes the build stamp;
// the library is header-only, so any source change produces a new key.
std::string cache_key(std::uint64_t seed, int epochs) {
    return std::string(__DATE__ " " __TIME__) + "|seed=" + std::to_string(seed) + "|epochs=" + std::to_string(epochs);
}

SeedResult run_seed(const Dataset& ds, std::uint64_t seed, int epochs) {
    SeedResult r;
    r.seed = seed;
    PipelineConfig cfg;
    cfg.seed = seed;
    cfg.ae.epochs = epochs;
    cfg.visualize = false;

    AeConfig ae = cfg.ae;
    ae.input_dim = ds.d();
    ae.bottleneck_dim = 10;
    ae.seed = seed;
    const auto t0 = std::chrono::steady_clock::now();
    const TrainResult trained = train(init(ae), ds, ae, [&](int epoch, double loss) {
        if ((epoch + 1) % 100 == 0) {
            std::cout << "  seed " << seed << " epoch " << epoch + 1 << " loss " << loss << std::endl;
        }
    });
    r.ae_train_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    r.losses = trained.loss_history;

    cfg.ae_skip = true;
    cfg.manifold = ManifoldKind::none;
    RunReport rep = run_pipeline(cfg, ds);
    r.gmm_acc = rep.metrics.acc;
    r.gmm_nmi = rep.metrics.nmi;
    r.gmm_s = rep.metrics.timings.cluster_s;

    cfg.ae_skip = false;
    rep = run_pipeline(cfg, ds, &trained);
    r.ae_acc = rep.metrics.acc;
    r.ae_nmi = rep.metrics.nmi;
    r.ae_cluster_s = rep.metrics.timings.cluster_s;

    cfg.manifold = ManifoldKind::umap;
    rep = run_pipeline(cfg, ds, &trained);
    r.n2d_acc = rep.metrics.acc;
    r.n2d_nmi = rep.metrics.nmi;
    r.n2d_manifold_s = rep.metrics.timings.manifold_s;
    r.n2d_cluster_s = rep.metrics.timings.cluster_s;
    std::cout << "  seed " << seed << ": GMM " << fmt(r.gmm_acc) << "/" << fmt(r.gmm_nmi) << "  AE " << fmt(r.ae_acc) << "/"
              << fmt(r.ae_nmi) << "  N2D(UMAP) " << fmt(r.n2d_acc) << "/" << fmt(r.n2d_nmi) << "  (AE train " << fmt(r.ae_train_s / 60, 1)
              << " min)" << std::endl;
    return r;
}

std::vector<SeedResult> pendigits_runs(int epochs, const std::string& cache_path) {
    nlohmann::json cache = nlohmann::json::object();
    if (!cache_path.empty()) {
        std::ifstream in(cache_path);
        if (in) {
            try {
                in >> cache;
            } catch (const std::exception&) {
                cache = nlohmann::json::object();
            }
        }
    }
    const Dataset ds = load_pendigits();
    std::vector<SeedResult> out;
    for (std::uint64_t seed : {0ULL, 1ULL, 2ULL}) {
        const std::string key = cache_key(seed, epochs);
        if (cache.contains(key)) {
            std::cout << "  seed " << seed << ": reusing results computed by this build (" << cache_path << ")" << std::endl;
            out.push_back(seed_result_from_json(cache[key]));
            continue;
        }
        out.push_back(run_seed(ds, seed, epochs));
        if (!cache_path.empty()) {
            cache[key] = to_json(out.back());
            std::ofstream(cache_path) << cache.dump() << '\n';
        }
    }
    return out;
}

template <typename F>
const SeedResult& best_by(const std::vector<SeedResult>& runs, F acc) {
    return *std::max_element(runs.begin(), runs.end(), [&](const auto& a, const auto& b) { return acc(a) < acc(b); });
}

void pendigits_suite(Tally& tally, int epochs, const std::string& cache_path) {
    std::vector<SeedResult> runs;
    std::string failure;
    try {
        runs = pendigits_runs(epochs, cache_path);
    } catch (const std::exception& e) {
        failure = e.what();
    }
    const std::string suffix = epochs == 1000 ? "" : " (" + std::to_string(epochs) + " epochs, not the gating setting)";

    report(tally, 1, "pendigits N2D(UMAP) best-of-3 ACC >= 0.80, NMI >= 0.78" + suffix, [&]() -> Outcome {
        if (!failure.empty()) {
            return {false, failure};
        }
        const SeedResult& b = best_by(runs, [](const SeedResult& r) { return r.n2d_acc; });
        const double minutes = (b.ae_train_s + b.n2d_manifold_s + b.n2d_cluster_s) / 60.0;
        return {b.n2d_acc >= 0.80 && b.n2d_nmi >= 0.78 && epochs == 1000,
                "seed " + std::to_string(b.seed) + " ACC " + fmt(b.n2d_acc) + " NMI " + fmt(b.n2d_nmi) + "; wall time " + fmt(minutes, 1) +
                    " min on this machine"};
    });
    report(tally, 2, "pendigits ablation ordering N2D(UMAP) > AE > GMM, gaps >= 0.03" + suffix, [&]() -> Outcome {
        if (!failure.empty()) {
            return {false, failure};
        }
        const double n2d = best_by(runs, [](const SeedResult& r) { return r.n2d_acc; }).n2d_acc;
        const double ae = best_by(runs, [](const SeedResult& r) { return r.ae_acc; }).ae_acc;
        const double gmm = best_by(runs, [](const SeedResult& r) { return r.gmm_acc; }).gmm_acc;
        return {n2d - ae >= 0.03 && ae - gmm >= 0.03 && epochs == 1000,
                "best ACC N2D(UMAP) " + fmt(n2d) + ", AE " + fmt(ae) + ", GMM " + fmt(gmm) + "; gaps " + fmt(n2d - ae) + ", " + fmt(ae - gmm)};
    });
    if (!failure.empty()) {
        return;
    }

    // Informational: autoencoder convergence and stage timings.
    for (const auto& r : runs) {
        const auto& h = r.losses;
        const std::size_t w = 20;
        if (h.size() >= 2 * w) {
            const double last = std::accumulate(h.end() - static_cast<long>(w), h.end(), 0.0) / w;
            const double prev = std::accumulate(h.end() - static_cast<long>(2 * w), h.end() - static_cast<long>(w), 0.0) / w;
            std::cout << "INFO seed " << r.seed << " AE loss first " << h.front() << " last " << h.back() << "; 20-epoch moving average "
                      << prev << " -> " << last << " (relative change " << (prev - last) / prev << ")" << std::endl;
        }
        std::cout << "INFO seed " << r.seed << " minutes: AE " << fmt(r.ae_train_s / 60, 2) << ", UMAP " << fmt(r.n2d_manifold_s / 60, 2)
                  << ", GMM on UMAP " << fmt(r.n2d_cluster_s / 60, 2) << ", GMM on AE " << fmt(r.ae_cluster_s / 60, 2) << ", raw GMM "
                  << fmt(r.gmm_s / 60, 2) << std::endl;
    }
}

void fast_suite(Tally& tally) {
    report(tally, 3, "raw GMM on pendigits, best of 5 seeds, ACC 0.674+-0.05 and NMI 0.683+-0.05", raw_gmm_baseline);
    std::cout << "CRITERION  4 SKIP  USPS extended run (optional, not gating; dataset not bundled)" << std::endl;
    report(tally, 5, "Hungarian equals exhaustive enumeration", hungarian_oracle);
    report(tally, 6, "NMI/ACC unit suite", metric_suite);
    report(tally, 7, "GMM EM monotone log-likelihood and 2-Gaussian recovery", gmm_checks);
    report(tally, 8, "autoencoder gradient check", gradient_check);
    report(tally, 9, "t-SNE calibration, KL decrease, 3-blob recovery", tsne_checks);
    report(tally, 10, "Isomap arc ordering and PCA equivalence", isomap_checks);
    report(tally, 11, "UMAP substrate: exact kNN, memberships, two-blob separation", umap_substrate);
    report(tally, 12, "determinism: repeated runs are bitwise identical", determinism);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"n2d acceptance runner"};
    std::string suite = "fast";
    int epochs = 1000;
    std::string cache;
    app.add_option("--suite", suite, "fast | pendigits | all")->check(CLI::IsMember({"fast", "pendigits", "all"}));
    app.add_option("--epochs", epochs, "Autoencoder epochs for the pendigits suite (gating value 1000)");
    app.add_option("--cache", cache, "JSON file caching per-seed pendigits results for this build");
    CLI11_PARSE(app, argc, argv);

    Tally tally;
    if (suite == "fast" || suite == "all") {
        fast_suite(tally);
    }
    if (suite == "pendigits" || suite == "all") {
        pendigits_suite(tally, epochs, cache);
    }
    std::cout << "SUMMARY " << tally.passed << " passed, " << tally.failed << " failed" << std::endl;
    return tally.failed == 0 ? 0 : 1;
}
