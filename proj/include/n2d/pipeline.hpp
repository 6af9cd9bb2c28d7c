#ifndef N2D_PIPELINE_HPP
#define N2D_PIPELINE_HPP

#include "autoencoder.hpp"
#include "clustering.hpp"
#include "data_io.hpp"
#include "embedding.hpp"
#include "manifold.hpp"
#include "metrics.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

/**
 * @file pipeline.hpp
 *
 * @brief Autoencoder, manifold re-embedding and clustering composed into
 * one timed run, plus the component ablation table and 2-D scatter export.
 */

namespace n2d {

/// A stage failure; `what()` names the stage.
class StageError : public Error {
  public:
    StageError(std::string stage, const std::string& message)
        : Error("stage '" + stage + "' failed: " + message), stage_(std::move(stage)) {}

    const std::string& stage() const { return stage_; }

  private:
    std::string stage_;
};

struct DatasetSpec {
    /// CSV file, or IDX image file (optionally gzipped).
    std::string path;
    /// "csv", "idx", or "auto" (by extension).
    std::string format = "auto";
    std::optional<std::string> labels_path;
    /// Extra IDX pair appended to the first, e.g. a test split.
    std::optional<std::string> extra_path;
    std::optional<std::string> extra_labels_path;
    std::optional<std::string> label_column = std::string("label");
    std::string name;
    std::optional<int> c_hint;
    PreprocessSpec preprocess;
};

inline std::string resolved_format(const DatasetSpec& spec) {
    if (spec.format != "auto") {
        return spec.format;
    }
    std::string p = spec.path;
    if (detail::ends_with(p, ".gz")) {
        p.resize(p.size() - 3);
    }
    return detail::ends_with(p, ".csv") ? "csv" : "idx";
}

inline Dataset load_dataset(const DatasetSpec& spec) {
    if (spec.path.empty()) {
        throw ConfigError("dataset path is empty");
    }
    for (const auto* p : {&spec.path}) {
        if (!std::filesystem::exists(*p)) {
            throw ConfigError("dataset file '" + *p + "' does not exist");
        }
    }
    const std::string format = resolved_format(spec);
    Dataset ds;
    if (format == "csv") {
        std::optional<std::string> column = spec.label_column;
        if (column && !column->empty()) {
            std::ifstream in(spec.path);
            std::string header;
            std::getline(in, header);
            const auto names = detail::split_csv_line(header);
            if (std::none_of(names.begin(), names.end(), [&](const std::string& name) { return detail::trim(name) == *column; })) {
                column.reset();
            }
        } else {
            column.reset();
        }
        ds = load_csv(spec.path, column);
    } else if (format == "idx") {
        ds = load_idx(spec.path, spec.labels_path);
        if (spec.extra_path) {
            ds = concatenate(ds, load_idx(*spec.extra_path, spec.extra_labels_path), ds.name);
        }
    } else {
        throw ConfigError("unknown dataset format '" + format + "'");
    }
    if (!spec.name.empty()) {
        ds.name = spec.name;
    } else {
        std::filesystem::path stem(spec.path);
        if (stem.extension() == ".gz") {
            stem = stem.stem();
        }
        ds.name = stem.stem().string();
    }
    ds.c_hint = spec.c_hint;
    validate(ds);
    return preprocess(ds, spec.preprocess);
}

struct PipelineConfig {
    DatasetSpec dataset;
    /// Cluster raw (preprocessed) features instead of autoencoder output.
    bool ae_skip = false;
    /// input_dim and bottleneck_dim left at 0 are filled from the data and cluster count.
    AeConfig ae;
    ManifoldKind manifold = ManifoldKind::umap;
    /// 0 means "the cluster count".
    std::size_t manifold_dims = 0;
    ManifoldParams manifold_params;
    ClustererKind clusterer = ClustererKind::gmm;
    int n_init = 10;
    std::uint64_t seed = 0;
    bool deterministic = true;
    int threads = 1;
    /// Empty means nothing is written.
    std::string output_dir;
    /// Also write a 2-D scatter (a 2-D UMAP of the clustered embedding when it is not already 2-D).
    bool visualize = true;
    std::size_t max_points = 5000;
};

namespace detail {

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stage) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stage + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline nlohmann::json to_json(const UmapConfig& c) {
    return {{"n_neighbors", c.n_neighbors},
            {"min_dist", c.min_dist},
            {"n_epochs", c.n_epochs},
            {"learning_rate", c.learning_rate},
            {"negative_sample_rate", c.negative_sample_rate},
            {"repulsion_strength", c.repulsion_strength},
            {"spread", c.spread},
            {"knn", c.knn_mode == KnnMode::exact ? "exact" : "approximate"},
            {"bandwidth_tolerance", c.bandwidth_tolerance},
            {"bandwidth_iterations", c.bandwidth_iterations}};
}

inline void from_json(const nlohmann::json& j, UmapConfig& c) {
    c.n_neighbors = j.value("n_neighbors", c.n_neighbors);
    c.min_dist = j.value("min_dist", c.min_dist);
    c.n_epochs = j.value("n_epochs", c.n_epochs);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.negative_sample_rate = j.value("negative_sample_rate", c.negative_sample_rate);
    c.repulsion_strength = j.value("repulsion_strength", c.repulsion_strength);
    c.spread = j.value("spread", c.spread);
    const std::string knn = j.value("knn", std::string(c.knn_mode == KnnMode::exact ? "exact" : "approximate"));
    if (knn != "exact" && knn != "approximate") {
        throw ConfigError("umap knn must be 'exact' or 'approximate'");
    }
    c.knn_mode = knn == "exact" ? KnnMode::exact : KnnMode::approximate;
    c.bandwidth_tolerance = j.value("bandwidth_tolerance", c.bandwidth_tolerance);
    c.bandwidth_iterations = j.value("bandwidth_iterations", c.bandwidth_iterations);
}

inline nlohmann::json to_json(const TsneConfig& c) {
    return {{"perplexity", c.perplexity},
            {"n_iter", c.n_iter},
            {"early_exaggeration", c.early_exaggeration},
            {"exaggeration_iters", c.exaggeration_iters},
            {"learning_rate", c.learning_rate},
            {"initial_momentum", c.initial_momentum},
            {"final_momentum", c.final_momentum},
            {"momentum_switch_iter", c.momentum_switch_iter},
            {"max_samples", c.max_samples}};
}

inline void from_json(const nlohmann::json& j, TsneConfig& c) {
    c.perplexity = j.value("perplexity", c.perplexity);
    c.n_iter = j.value("n_iter", c.n_iter);
    c.early_exaggeration = j.value("early_exaggeration", c.early_exaggeration);
    c.exaggeration_iters = j.value("exaggeration_iters", c.exaggeration_iters);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.initial_momentum = j.value("initial_momentum", c.initial_momentum);
    c.final_momentum = j.value("final_momentum", c.final_momentum);
    c.momentum_switch_iter = j.value("momentum_switch_iter", c.momentum_switch_iter);
    c.max_samples = j.value("max_samples", c.max_samples);
}

inline nlohmann::json to_json(const IsomapConfig& c) {
    return {{"n_neighbors", c.n_neighbors}, {"max_samples", c.max_samples}, {"dense_eigen_limit", c.dense_eigen_limit}};
}

inline void from_json(const nlohmann::json& j, IsomapConfig& c) {
    c.n_neighbors = j.value("n_neighbors", c.n_neighbors);
    c.max_samples = j.value("max_samples", c.max_samples);
    c.dense_eigen_limit = j.value("dense_eigen_limit", c.dense_eigen_limit);
}

template <typename T>
std::optional<T> optional_from(const nlohmann::json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) {
        return std::nullopt;
    }
    return j.at(key).get<T>();
}

} // namespace detail

inline nlohmann::json to_json(const PipelineConfig& cfg) {
    nlohmann::json ds = {{"path", cfg.dataset.path},
                         {"format", cfg.dataset.format},
                         {"name", cfg.dataset.name},
                         {"preprocess", to_string(cfg.dataset.preprocess.mode)}};
    ds["labels_path"] = cfg.dataset.labels_path ? nlohmann::json(*cfg.dataset.labels_path) : nlohmann::json(nullptr);
    ds["extra_path"] = cfg.dataset.extra_path ? nlohmann::json(*cfg.dataset.extra_path) : nlohmann::json(nullptr);
    ds["extra_labels_path"] =
        cfg.dataset.extra_labels_path ? nlohmann::json(*cfg.dataset.extra_labels_path) : nlohmann::json(nullptr);
    ds["label_column"] = cfg.dataset.label_column ? nlohmann::json(*cfg.dataset.label_column) : nlohmann::json(nullptr);
    ds["c_hint"] = cfg.dataset.c_hint ? nlohmann::json(*cfg.dataset.c_hint) : nlohmann::json(nullptr);
    return {{"dataset", ds},
            {"ae", cfg.ae_skip ? nlohmann::json("skip") : to_json(cfg.ae)},
            {"manifold",
             {{"method", to_string(cfg.manifold)},
              {"n_components", cfg.manifold_dims},
              {"umap", detail::to_json(cfg.manifold_params.umap)},
              {"tsne", detail::to_json(cfg.manifold_params.tsne)},
              {"isomap", detail::to_json(cfg.manifold_params.isomap)}}},
            {"clusterer", {{"method", to_string(cfg.clusterer)}, {"n_init", cfg.n_init}}},
            {"seed", cfg.seed},
            {"deterministic", cfg.deterministic},
            {"threads", cfg.threads},
            {"output_dir", cfg.output_dir},
            {"visualize", cfg.visualize},
            {"max_points", cfg.max_points}};
}

/// Fields missing from `j` keep their value in `base`.
inline PipelineConfig pipeline_config_from_json(const nlohmann::json& j, PipelineConfig cfg = {}) {
    try {
        if (j.contains("dataset")) {
            const auto& d = j.at("dataset");
            if (d.is_string()) {
                cfg.dataset.path = d.get<std::string>();
            } else {
                cfg.dataset.path = d.value("path", cfg.dataset.path);
                cfg.dataset.format = d.value("format", cfg.dataset.format);
                cfg.dataset.name = d.value("name", cfg.dataset.name);
                if (d.contains("preprocess")) {
                    cfg.dataset.preprocess.mode = parse_preprocess_mode(d.at("preprocess").get<std::string>());
                }
                if (d.contains("labels_path")) {
                    cfg.dataset.labels_path = detail::optional_from<std::string>(d, "labels_path");
                }
                if (d.contains("extra_path")) {
                    cfg.dataset.extra_path = detail::optional_from<std::string>(d, "extra_path");
                }
                if (d.contains("extra_labels_path")) {
                    cfg.dataset.extra_labels_path = detail::optional_from<std::string>(d, "extra_labels_path");
                }
                if (d.contains("label_column")) {
                    cfg.dataset.label_column = detail::optional_from<std::string>(d, "label_column");
                }
                if (d.contains("c_hint")) {
                    cfg.dataset.c_hint = detail::optional_from<int>(d, "c_hint");
                }
            }
        }
        if (j.contains("ae")) {
            const auto& a = j.at("ae");
            if (a.is_string()) {
                if (a.get<std::string>() != "skip") {
                    throw ConfigError("ae must be an object or \"skip\"");
                }
                cfg.ae_skip = true;
            } else {
                cfg.ae_skip = false;
                cfg.ae = ae_config_from_json(a, cfg.ae);
            }
        }
        if (j.contains("manifold")) {
            const auto& m = j.at("manifold");
            if (m.is_string()) {
                cfg.manifold = parse_manifold_kind(m.get<std::string>());
            } else {
                if (m.contains("method")) {
                    cfg.manifold = parse_manifold_kind(m.at("method").get<std::string>());
                }
                cfg.manifold_dims = m.value("n_components", cfg.manifold_dims);
                if (m.contains("umap")) {
                    detail::from_json(m.at("umap"), cfg.manifold_params.umap);
                }
                if (m.contains("tsne")) {
                    detail::from_json(m.at("tsne"), cfg.manifold_params.tsne);
                }
                if (m.contains("isomap")) {
                    detail::from_json(m.at("isomap"), cfg.manifold_params.isomap);
                }
            }
        }
        if (j.contains("clusterer")) {
            const auto& c = j.at("clusterer");
            if (c.is_string()) {
                cfg.clusterer = parse_clusterer_kind(c.get<std::string>());
            } else {
                if (c.contains("method")) {
                    cfg.clusterer = parse_clusterer_kind(c.at("method").get<std::string>());
                }
                cfg.n_init = c.value("n_init", cfg.n_init);
            }
        }
        cfg.seed = j.value("seed", cfg.seed);
        cfg.deterministic = j.value("deterministic", cfg.deterministic);
        cfg.threads = j.value("threads", cfg.threads);
        cfg.output_dir = j.value("output_dir", cfg.output_dir);
        cfg.visualize = j.value("visualize", cfg.visualize);
        cfg.max_points = j.value("max_points", cfg.max_points);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("invalid pipeline config: ") + e.what());
    }
    return cfg;
}

inline PipelineConfig load_pipeline_config(const std::string& path, PipelineConfig base = {}) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config '" + path + "'");
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
    }
    return pipeline_config_from_json(j, std::move(base));
}

struct LossSummary {
    int epochs = 0;
    double first = 0.0;
    double last = 0.0;
    double min = 0.0;
};

inline LossSummary summarize_losses(const std::vector<double>& history) {
    LossSummary s;
    if (history.empty()) {
        return s;
    }
    s.epochs = static_cast<int>(history.size());
    s.first = history.front();
    s.last = history.back();
    s.min = *std::min_element(history.begin(), history.end());
    return s;
}

struct RunReport {
    /// Timings are always filled; acc/nmi/mapping only when `labeled`.
    MetricsReport metrics;
    bool labeled = false;
    nlohmann::json config;
    std::optional<LossSummary> loss;
    std::map<std::string, std::string> artifacts;
    nlohmann::json environment;
    std::vector<std::string> notes;
    int clusters = 0;
    Labels assignment;
    /// Input to the clusterer.
    Embedding embedding;
};

/// Reference per-stage minutes (AE, manifold, total) for the default N2D(UMAP)
/// setup trained for 1000 epochs on an RTX 2080 Ti GPU.
inline std::optional<std::array<double, 3>> reference_gpu_minutes(const std::string& dataset) {
    static const std::map<std::string, std::array<double, 3>> table{
        {"mnist", {18.0, 1.5, 19.5}},   {"mnist-test", {2.6, 0.4, 3.0}}, {"usps", {2.1, 0.4, 2.5}},
        {"fashion", {18.0, 1.5, 19.5}}, {"pendigits", {2.2, 0.3, 2.5}},  {"har", {3.6, 0.2, 3.8}}};
    std::string key = dataset;
    std::transform(key.begin(), key.end(), key.begin(), [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    const auto it = table.find(key);
    return it == table.end() ? std::nullopt : std::optional(it->second);
}

inline nlohmann::json to_json(const RunReport& r) {
    nlohmann::json j;
    nlohmann::json metrics = to_json(r.metrics);
    if (!r.labeled) {
        metrics["acc"] = nullptr;
        metrics["nmi"] = nullptr;
    }
    j["metrics"] = metrics;
    j["config"] = r.config;
    j["clusters"] = r.clusters;
    if (r.loss) {
        j["loss"] = {{"epochs", r.loss->epochs}, {"first", r.loss->first}, {"last", r.loss->last}, {"min", r.loss->min}};
    } else {
        j["loss"] = nullptr;
    }
    j["artifacts"] = r.artifacts;
    j["environment"] = r.environment;
    const std::string dataset = r.config.contains("dataset") && r.config["dataset"].contains("name") && r.config["dataset"]["name"].is_string()
                                    ? r.config["dataset"]["name"].get<std::string>()
                                    : std::string();
    if (const auto ref = reference_gpu_minutes(dataset)) {
        const auto& t = r.metrics.timings;
        j["timing_reference"] = {{"gpu_ae_min", (*ref)[0]},
                                 {"gpu_manifold_min", (*ref)[1]},
                                 {"gpu_total_min", (*ref)[2]},
                                 {"total_ratio", t.total_s / 60.0 / (*ref)[2]}};
    } else {
        j["timing_reference"] = nullptr;
    }
    j["notes"] = r.notes;
    return j;
}

struct VizExport {
    std::string csv_path;
    std::string svg_path;
    std::size_t count = 0;
};

namespace detail {

inline std::string label_color(int label) {
    static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
    if (label >= 0 && label < 10) {
        return palette[label];
    }
    // Golden-angle hues for larger label sets.
    const int hue = static_cast<int>(std::fmod(std::abs(label) * 137.508, 360.0));
    return "hsl(" + std::to_string(hue) + ",65%,45%)";
}

inline std::vector<std::size_t> subsample(std::size_t n, std::size_t max_points, std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (n <= max_points) {
        return idx;
    }
    Rng rng(seed);
    for (std::size_t i = 0; i < max_points; ++i) {
        std::swap(idx[i], idx[i + rng.index(n - i)]);
    }
    idx.resize(max_points);
    std::sort(idx.begin(), idx.end());
    return idx;
}

} // namespace detail

/**
 * Writes `<stem>.csv` (x,y,label) and `<stem>.svg` for at most `max_points`
 * points drawn uniformly without replacement using `seed`.
 */
inline VizExport export_visualization(const Embedding& emb2d, const Labels* labels, std::size_t max_points,
                                      const std::string& out_dir, std::uint64_t seed = 0,
                                      const std::string& stem = "scatter") {
    if (emb2d.m() != 2) {
        throw DimensionError("visualization needs a 2-D embedding, got " + std::to_string(emb2d.m()) + " columns");
    }
    if (labels != nullptr && labels->size() != emb2d.n()) {
        throw DimensionError("visualization labels do not match the embedding length");
    }
    std::filesystem::create_directories(out_dir);
    const auto picks = detail::subsample(emb2d.n(), max_points, seed);
    VizExport out;
    out.count = picks.size();
    out.csv_path = (std::filesystem::path(out_dir) / (stem + ".csv")).string();
    out.svg_path = (std::filesystem::path(out_dir) / (stem + ".svg")).string();

    std::ofstream csv(out.csv_path);
    if (!csv) {
        throw IoError("cannot write '" + out.csv_path + "'");
    }
    csv << "x,y,label\n" << std::setprecision(17);
    for (auto i : picks) {
        const auto r = static_cast<Eigen::Index>(i);
        csv << emb2d.coords(r, 0) << ',' << emb2d.coords(r, 1) << ',' << (labels ? (*labels)[i] : 0) << '\n';
    }

    double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
    if (!picks.empty()) {
        xmin = ymin = std::numeric_limits<double>::infinity();
        xmax = ymax = -std::numeric_limits<double>::infinity();
        for (auto i : picks) {
            const auto r = static_cast<Eigen::Index>(i);
            xmin = std::min(xmin, emb2d.coords(r, 0));
            xmax = std::max(xmax, emb2d.coords(r, 0));
            ymin = std::min(ymin, emb2d.coords(r, 1));
            ymax = std::max(ymax, emb2d.coords(r, 1));
        }
    }
    const double size = 800.0, margin = 20.0;
    const double sx = (size - 2 * margin) / std::max(xmax - xmin, 1e-12);
    const double sy = (size - 2 * margin) / std::max(ymax - ymin, 1e-12);
    std::ofstream svg(out.svg_path);
    if (!svg) {
        throw IoError("cannot write '" + out.svg_path + "'");
    }
    svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
        << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size << "\" viewBox=\"0 0 "
        << size << ' ' << size << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << std::fixed << std::setprecision(2);
    for (auto i : picks) {
        const auto r = static_cast<Eigen::Index>(i);
        const double x = margin + (emb2d.coords(r, 0) - xmin) * sx;
        const double y = size - margin - (emb2d.coords(r, 1) - ymin) * sy;
        svg << "<circle cx=\"" << x << "\" cy=\"" << y << "\" r=\"1.5\" fill=\"" << detail::label_color(labels ? (*labels)[i] : 0)
            << "\"/>\n";
    }
    svg << "</svg>\n";
    return out;
}

/// Resolved cluster count and validated stage configs; throws ConfigError on any problem.
inline int validate_pipeline(const PipelineConfig& cfg, const Dataset& ds) {
    const auto c = ds.cluster_count();
    if (!c || *c < 1) {
        throw ConfigError("cluster count unknown: dataset '" + ds.name + "' has no labels and no c_hint");
    }
    if (cfg.n_init < 1) {
        throw ConfigError("n_init must be >= 1");
    }
    if (cfg.threads < 1) {
        throw ConfigError("threads must be >= 1");
    }
    if (!cfg.ae_skip) {
        AeConfig ae = cfg.ae;
        ae.input_dim = ds.d();
        ae.bottleneck_dim = cfg.ae.bottleneck_dim > 0 ? cfg.ae.bottleneck_dim : static_cast<std::size_t>(*c);
        ae.validate();
    }
    switch (cfg.manifold) {
    case ManifoldKind::umap:
        cfg.manifold_params.umap.validate(ds.n());
        break;
    case ManifoldKind::tsne:
        if (!(cfg.manifold_params.tsne.perplexity > 1.0)) {
            throw ConfigError("tsne perplexity must be > 1");
        }
        break;
    case ManifoldKind::isomap:
        cfg.manifold_params.isomap.validate(ds.n());
        break;
    case ManifoldKind::none:
        break;
    }
    return *c;
}

namespace detail {

template <typename Fn>
auto run_stage(const std::string& name, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const GuardError&) {
        throw;
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(name, e.what());
    }
}

inline std::string out_path(const PipelineConfig& cfg, const std::string& file) {
    return (std::filesystem::path(cfg.output_dir) / file).string();
}

} // namespace detail

/**
 * Runs the stages in order on an already-loaded dataset. A `pretrained`
 * autoencoder replaces training (its loss history is still reported).
 * Exceptions other than guard trips are rethrown as StageError.
 */
inline RunReport run_pipeline(const PipelineConfig& cfg, const Dataset& ds, const TrainResult* pretrained = nullptr) {
    const int c = validate_pipeline(cfg, ds);
    const bool writing = !cfg.output_dir.empty();
    if (writing) {
        std::filesystem::create_directories(cfg.output_dir);
    }

    RunReport report;
    report.clusters = c;
    PipelineConfig resolved = cfg;
    if (resolved.dataset.name.empty()) {
        resolved.dataset.name = ds.name;
    }
    StageTimer timer;
    Embedding current = from_dataset(ds);

    if (!cfg.ae_skip) {
        resolved.ae.input_dim = ds.d();
        if (resolved.ae.bottleneck_dim == 0) {
            resolved.ae.bottleneck_dim = static_cast<std::size_t>(c);
        }
        resolved.ae.seed = cfg.seed;
        auto scope = timer.scope("ae");
        const TrainResult* trained = pretrained;
        std::optional<TrainResult> local;
        if (trained == nullptr) {
            local = detail::run_stage("ae", [&] { return train(init(resolved.ae), ds, resolved.ae); });
            trained = &*local;
        }
        current = detail::run_stage("ae", [&] { return encode(trained->model, ds); });
        scope.finish();
        report.loss = summarize_losses(trained->loss_history);
        if (pretrained != nullptr) {
            report.notes.push_back("autoencoder reused from an earlier training run with the same seed");
        }
        if (writing) {
            report.artifacts["checkpoint"] = detail::out_path(cfg, "checkpoint.n2dc");
            save_checkpoint(report.artifacts["checkpoint"], trained->model);
        }
    }

    if (cfg.manifold != ManifoldKind::none) {
        ManifoldParams params = cfg.manifold_params;
        params.set_components(cfg.manifold_dims > 0 ? cfg.manifold_dims : static_cast<std::size_t>(c));
        params.set_seed(cfg.seed);
        params.umap.deterministic = cfg.deterministic;
        params.umap.threads = cfg.deterministic ? 1 : cfg.threads;
        params.isomap.threads = cfg.threads;
        resolved.manifold_params = params;
        resolved.manifold_dims = params.umap.n_components;
        auto scope = timer.scope("manifold");
        current = detail::run_stage("manifold", [&] { return manifold_fit(current, cfg.manifold, params); });
        scope.finish();
        for (const auto& note : current.notes) {
            report.notes.push_back(current.method + ": " + note);
        }
    }
    report.embedding = current;
    if (writing) {
        report.artifacts["embedding"] = detail::out_path(cfg, "embedding.csv");
        write_embedding_csv(report.artifacts["embedding"], current, ds.labels ? &*ds.labels : nullptr);
    }

    ClusterAssignment assignment;
    {
        auto scope = timer.scope("cluster");
        const std::uint64_t cseed = cfg.seed;
        if (cfg.clusterer == ClustererKind::gmm) {
            GmmFit fit = detail::run_stage("cluster", [&] { return gmm_fit(current, c, cfg.n_init, cseed); });
            report.notes.push_back("gmm: each restart initialized from its own k-means++ run; ridge=" +
                                   std::to_string(fit.model.ridge) + (fit.model.converged ? "; converged" : "; not converged"));
            assignment = std::move(fit.assignment);
            if (writing) {
                report.artifacts["model"] = detail::out_path(cfg, "gmm.n2dc");
                save_container(report.artifacts["model"], to_container(fit.model));
            }
        } else {
            KMeansResult km = detail::run_stage("cluster", [&] { return kmeans_fit(current, c, cfg.n_init, cseed); });
            assignment = std::move(km.assignment);
        }
    }
    timer.stop();

    report.assignment = assignment.labels;
    if (ds.labels) {
        report.metrics = evaluate(*ds.labels, assignment.labels);
        report.labeled = true;
    }
    report.metrics.timings = {timer.seconds("ae"), timer.seconds("manifold"), timer.seconds("cluster"), timer.total_seconds()};
    report.config = to_json(resolved);
    report.environment = {{"threads", cfg.threads},
                          {"hardware_threads", std::thread::hardware_concurrency()},
                          {"precision", "float64"},
                          {"deterministic", cfg.deterministic},
                          {"eigen_simd", Eigen::SimdInstructionSetsInUse()}};

    if (writing) {
        report.artifacts["assignment"] = detail::out_path(cfg, "assignment.csv");
        write_assignment_csv(report.artifacts["assignment"], assignment);

        report.artifacts["table"] = detail::out_path(cfg, "table.csv");
        std::ofstream table(report.artifacts["table"]);
        table << "dataset,ae,manifold,clusterer,seed,acc,nmi,total_s\n" << std::setprecision(17);
        table << ds.name << ',' << (cfg.ae_skip ? "skip" : "ae") << ',' << to_string(cfg.manifold) << ','
              << to_string(cfg.clusterer) << ',' << cfg.seed << ',';
        if (report.labeled) {
            table << report.metrics.acc << ',' << report.metrics.nmi;
        } else {
            table << ',';
        }
        table << ',' << report.metrics.timings.total_s << '\n';

        if (cfg.visualize) {
            Embedding flat = current;
            if (flat.m() != 2) {
                UmapConfig viz = cfg.manifold_params.umap;
                viz.n_components = 2;
                viz.seed = detail::derive_seed(cfg.seed, 3);
                viz.threads = 1;
                viz.deterministic = true;
                viz.n_neighbors = std::min<std::size_t>(viz.n_neighbors, flat.n() - 1);
                flat = flat.n() > 2 ? umap_fit(flat, viz) : Embedding{};
            }
            if (flat.m() == 2) {
                const VizExport v = export_visualization(flat, ds.labels ? &*ds.labels : &report.assignment,
                                                         cfg.max_points, cfg.output_dir, cfg.seed);
                report.artifacts["scatter"] = v.svg_path;
                report.artifacts["scatter_points"] = v.csv_path;
            }
        }
        report.artifacts["report"] = detail::out_path(cfg, "report.json");
        std::ofstream out(report.artifacts["report"]);
        out << std::setw(2) << to_json(report) << '\n';
    }
    return report;
}

inline RunReport run_pipeline(const PipelineConfig& cfg) {
    const Dataset ds = load_dataset(cfg.dataset);
    return run_pipeline(cfg, ds);
}

/// One of the eight component configurations.
struct AblationSetting {
    std::string name;
    bool use_ae = false;
    ManifoldKind manifold = ManifoldKind::none;
};

inline std::vector<AblationSetting> ablation_settings() {
    return {{"GMM", false, ManifoldKind::none},       {"AE", true, ManifoldKind::none},
            {"Isomap", false, ManifoldKind::isomap},  {"N2D (Isomap)", true, ManifoldKind::isomap},
            {"TSNE", false, ManifoldKind::tsne},      {"N2D (TSNE)", true, ManifoldKind::tsne},
            {"UMAP", false, ManifoldKind::umap},      {"N2D (UMAP)", true, ManifoldKind::umap}};
}

struct AblationCell {
    bool ok = false;
    double acc = 0.0;
    double nmi = 0.0;
    std::string reason;
};

struct AblationRow {
    std::string name;
    std::vector<AblationCell> per_seed;

    /// Seed with the highest ACC (earliest on ties); nullopt when every seed failed.
    std::optional<std::size_t> best_index() const {
        std::optional<std::size_t> best;
        for (std::size_t i = 0; i < per_seed.size(); ++i) {
            if (per_seed[i].ok && (!best || per_seed[i].acc > per_seed[*best].acc)) {
                best = i;
            }
        }
        return best;
    }

    std::optional<AblationCell> best() const {
        const auto i = best_index();
        return i ? std::optional<AblationCell>(per_seed[*i]) : std::nullopt;
    }

    std::optional<std::pair<double, double>> mean() const {
        double acc = 0.0, nmi = 0.0;
        int count = 0;
        for (const auto& cell : per_seed) {
            if (cell.ok) {
                acc += cell.acc;
                nmi += cell.nmi;
                ++count;
            }
        }
        if (count == 0) {
            return std::nullopt;
        }
        return std::make_pair(acc / count, nmi / count);
    }

    /// First failure reason, used for dash cells.
    std::string reason() const {
        for (const auto& cell : per_seed) {
            if (!cell.ok) {
                return cell.reason;
            }
        }
        return {};
    }
};

struct AblationTable {
    std::string dataset;
    std::vector<std::uint64_t> seeds;
    std::vector<AblationRow> rows;

    const AblationRow* row(const std::string& name) const {
        for (const auto& r : rows) {
            if (r.name == name) {
                return &r;
            }
        }
        return nullptr;
    }
};

inline std::string format_metric(const std::optional<double>& v) {
    if (!v) {
        return "-";
    }
    std::ostringstream s;
    s << std::fixed << std::setprecision(3) << *v;
    return s.str();
}

inline std::string to_csv(const AblationTable& t) {
    std::ostringstream out;
    out << "method,best_acc,best_nmi,mean_acc,mean_nmi,best_seed,note\n";
    for (const auto& r : t.rows) {
        const auto best = r.best();
        const auto mean = r.mean();
        const auto bi = r.best_index();
        out << '"' << r.name << "\"," << format_metric(best ? std::optional(best->acc) : std::nullopt) << ','
            << format_metric(best ? std::optional(best->nmi) : std::nullopt) << ','
            << format_metric(mean ? std::optional(mean->first) : std::nullopt) << ','
            << format_metric(mean ? std::optional(mean->second) : std::nullopt) << ',' << (bi ? std::to_string(t.seeds[*bi]) : "-")
            << ",\"";
        std::string reason = r.reason();
        std::replace(reason.begin(), reason.end(), '"', '\'');
        out << reason << "\"\n";
    }
    return out.str();
}

inline std::string to_markdown(const AblationTable& t) {
    std::ostringstream out;
    out << "| Method | ACC (best) | NMI (best) | ACC (mean) | NMI (mean) |\n|---|---|---|---|---|\n";
    for (const auto& r : t.rows) {
        const auto best = r.best();
        const auto mean = r.mean();
        out << "| " << r.name << " | " << format_metric(best ? std::optional(best->acc) : std::nullopt) << " | "
            << format_metric(best ? std::optional(best->nmi) : std::nullopt) << " | "
            << format_metric(mean ? std::optional(mean->first) : std::nullopt) << " | "
            << format_metric(mean ? std::optional(mean->second) : std::nullopt) << " |\n";
    }
    return out.str();
}

using AblationProgress = std::function<void(const std::string& setting, std::uint64_t seed, const AblationCell&)>;

/**
 * Runs each selected setting for every seed. The autoencoder is trained
 * once per seed and shared by all AE-based settings. Failures, including
 * guard trips, become dash cells carrying the reason.
 */
inline AblationTable run_ablation(const Dataset& ds, const std::vector<std::uint64_t>& seeds, const PipelineConfig& base,
                                  const std::vector<std::string>& only = {}, const AblationProgress& progress = {}) {
    std::vector<AblationSetting> settings;
    for (const auto& s : ablation_settings()) {
        if (only.empty() || std::find(only.begin(), only.end(), s.name) != only.end()) {
            settings.push_back(s);
        }
    }
    AblationTable table;
    table.dataset = ds.name;
    table.seeds = seeds;
    for (const auto& s : settings) {
        table.rows.push_back({s.name, {}});
    }
    const bool need_ae = std::any_of(settings.begin(), settings.end(), [](const auto& s) { return s.use_ae; });
    const int c = validate_pipeline(base, ds);

    for (std::uint64_t seed : seeds) {
        std::optional<TrainResult> ae;
        std::string ae_failure;
        if (need_ae) {
            try {
                AeConfig cfg = base.ae;
                cfg.input_dim = ds.d();
                if (cfg.bottleneck_dim == 0) {
                    cfg.bottleneck_dim = static_cast<std::size_t>(c);
                }
                cfg.seed = seed;
                ae = train(init(cfg), ds, cfg);
            } catch (const std::exception& e) {
                ae_failure = std::string("autoencoder: ") + e.what();
            }
        }
        for (std::size_t r = 0; r < settings.size(); ++r) {
            const auto& s = settings[r];
            AblationCell cell;
            if (s.use_ae && !ae) {
                cell.reason = ae_failure;
            } else {
                PipelineConfig cfg = base;
                cfg.ae_skip = !s.use_ae;
                cfg.manifold = s.manifold;
                cfg.seed = seed;
                cfg.output_dir.clear();
                try {
                    const RunReport rep = run_pipeline(cfg, ds, s.use_ae ? &*ae : nullptr);
                    cell.ok = rep.labeled;
                    cell.acc = rep.metrics.acc;
                    cell.nmi = rep.metrics.nmi;
                    if (!rep.labeled) {
                        cell.reason = "dataset has no labels";
                    }
                } catch (const GuardError& e) {
                    cell.reason = std::string("guard: ") + e.what();
                } catch (const std::exception& e) {
                    cell.reason = e.what();
                }
            }
            if (progress) {
                progress(s.name, seed, cell);
            }
            table.rows[r].per_seed.push_back(std::move(cell));
        }
    }
    return table;
}

} // namespace n2d

#endif
