// Command-line front end for the n2d pipeline.
//
// Exit codes: 0 success, 2 configuration error, 3 stage failure.

#include "n2d/n2d.hpp"

#include "CLI11.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace {

using namespace n2d;

struct Options {
    std::string config;
    std::string dataset;
    std::string labels;
    std::string label_column = "label";
    std::string preprocess;
    int c_hint = 0;
    std::string manifold;
    int n_neighbors = 0;
    double min_dist = -1.0;
    int dims = 0;
    std::string clusterer;
    int n_init = 0;
    std::uint64_t seed = 0;
    bool seed_set = false;
    bool deterministic = false;
    bool nondeterministic = false;
    int threads = 0;
    int epochs = 0;
    std::string out = "run";
    std::string input;
    std::string checkpoint;
    std::string assignment;
    std::string seeds = "0,1,2";
    std::vector<std::string> only;
    std::size_t max_points = 5000;
    bool no_viz = false;
};

void add_dataset_options(CLI::App* app, Options& o) {
    app->add_option("--config", o.config, "JSON config file; flags override its values");
    app->add_option("--dataset", o.dataset, "CSV file or IDX image file");
    app->add_option("--labels", o.labels, "IDX label file");
    app->add_option("--label-column", o.label_column, "CSV label column name");
    app->add_option("--preprocess", o.preprocess, "image_unit_scale | per_feature_minmax | none");
    app->add_option("--clusters", o.c_hint, "Cluster count for unlabelled data");
}

void add_model_options(CLI::App* app, Options& o) {
    app->add_option("--manifold", o.manifold, "umap | tsne | isomap | none");
    app->add_option("--n-neighbors", o.n_neighbors, "Neighbours for the manifold learner");
    app->add_option("--min-dist", o.min_dist, "UMAP minimum distance");
    app->add_option("--dims", o.dims, "Manifold dimensionality (default: cluster count)");
    app->add_option("--clusterer", o.clusterer, "gmm | kmeans");
    app->add_option("--n-init", o.n_init, "Clusterer restarts");
    app->add_option("--epochs", o.epochs, "Autoencoder epochs");
    app->add_option("--threads", o.threads, "Worker threads");
}

void add_run_options(CLI::App* app, Options& o) {
    app->add_option("--seed", o.seed, "Random seed")->each([&o](const std::string&) { o.seed_set = true; });
    app->add_flag("--deterministic", o.deterministic, "Single-threaded reproducible mode (default)");
    app->add_flag("--async", o.nondeterministic, "Allow racing layout updates across threads");
    app->add_option("--out", o.out, "Output directory");
}

PipelineConfig build_config(const Options& o) {
    PipelineConfig cfg;
    if (!o.config.empty()) {
        cfg = load_pipeline_config(o.config);
    }
    if (!o.dataset.empty()) {
        cfg.dataset.path = o.dataset;
    }
    if (!o.labels.empty()) {
        cfg.dataset.labels_path = o.labels;
    }
    cfg.dataset.label_column = o.label_column;
    if (!o.preprocess.empty()) {
        cfg.dataset.preprocess.mode = parse_preprocess_mode(o.preprocess);
    } else if (o.config.empty() && resolved_format(cfg.dataset) == "idx") {
        cfg.dataset.preprocess.mode = PreprocessMode::image_unit_scale;
    }
    if (o.c_hint > 0) {
        cfg.dataset.c_hint = o.c_hint;
    }
    if (!o.manifold.empty()) {
        cfg.manifold = parse_manifold_kind(o.manifold);
    }
    if (o.n_neighbors > 0) {
        cfg.manifold_params.umap.n_neighbors = static_cast<std::size_t>(o.n_neighbors);
        cfg.manifold_params.isomap.n_neighbors = static_cast<std::size_t>(o.n_neighbors);
    }
    if (o.min_dist >= 0.0) {
        cfg.manifold_params.umap.min_dist = o.min_dist;
    }
    if (o.dims > 0) {
        cfg.manifold_dims = static_cast<std::size_t>(o.dims);
    }
    if (!o.clusterer.empty()) {
        cfg.clusterer = parse_clusterer_kind(o.clusterer);
    }
    if (o.n_init > 0) {
        cfg.n_init = o.n_init;
    }
    if (o.epochs > 0) {
        cfg.ae.epochs = o.epochs;
    }
    if (o.threads > 0) {
        cfg.threads = o.threads;
    }
    if (o.seed_set) {
        cfg.seed = o.seed;
    }
    if (o.deterministic) {
        cfg.deterministic = true;
    }
    if (o.nondeterministic) {
        cfg.deterministic = false;
    }
    cfg.output_dir = o.out;
    cfg.visualize = !o.no_viz;
    cfg.max_points = o.max_points;
    return cfg;
}

std::string join(const std::string& dir, const std::string& file) {
    std::filesystem::create_directories(dir);
    return (std::filesystem::path(dir) / file).string();
}

int cluster_count_or_throw(const Dataset& ds) {
    const auto c = ds.cluster_count();
    if (!c) {
        throw ConfigError("cluster count unknown: pass --clusters or provide labels");
    }
    return *c;
}

void print_metrics(const RunReport& rep) {
    if (rep.labeled) {
        std::cout << "acc=" << rep.metrics.acc << " nmi=" << rep.metrics.nmi << '\n';
    }
    const auto& t = rep.metrics.timings;
    std::cout << "time ae=" << t.ae_s << "s manifold=" << t.manifold_s << "s cluster=" << t.cluster_s
              << "s total=" << t.total_s << "s\n";
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
    std::vector<std::uint64_t> seeds;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            seeds.push_back(std::stoull(item));
        } catch (const std::exception&) {
            throw ConfigError("invalid seed '" + item + "'");
        }
    }
    if (seeds.empty()) {
        throw ConfigError("no seeds given");
    }
    return seeds;
}

Embedding load_embedding(const std::string& path, std::optional<Labels>* labels) {
    if (path.empty()) {
        throw ConfigError("--input is required");
    }
    if (!std::filesystem::exists(path)) {
        throw ConfigError("input '" + path + "' does not exist");
    }
    return read_embedding_csv(path, labels);
}

int run(int argc, char** argv) {
    CLI::App app{"n2d: autoencoder + manifold learning + shallow clustering"};
    app.require_subcommand(1);
    Options o;

    auto* run_cmd = app.add_subcommand("run", "Full pipeline: autoencoder, manifold, clusterer, evaluation");
    add_dataset_options(run_cmd, o);
    add_model_options(run_cmd, o);
    add_run_options(run_cmd, o);
    run_cmd->add_flag("--no-viz", o.no_viz, "Skip the 2-D scatter export");
    run_cmd->add_option("--max-points", o.max_points, "Points in the scatter export");
    auto* skip = run_cmd->add_flag("--skip-ae", "Cluster without the autoencoder");

    auto* train_cmd = app.add_subcommand("train-ae", "Train the autoencoder and save a checkpoint");
    add_dataset_options(train_cmd, o);
    train_cmd->add_option("--epochs", o.epochs, "Autoencoder epochs");
    add_run_options(train_cmd, o);

    auto* embed_cmd = app.add_subcommand("embed", "Encode a dataset with a saved checkpoint");
    add_dataset_options(embed_cmd, o);
    embed_cmd->add_option("--checkpoint", o.checkpoint, "Checkpoint file")->required();
    embed_cmd->add_option("--out", o.out, "Output directory");

    auto* manifold_cmd = app.add_subcommand("manifold", "Re-embed an embedding CSV");
    manifold_cmd->add_option("--input", o.input, "Embedding CSV")->required();
    manifold_cmd->add_option("--clusters", o.c_hint, "Cluster count (sets the default dimensionality)");
    add_model_options(manifold_cmd, o);
    add_run_options(manifold_cmd, o);

    auto* cluster_cmd = app.add_subcommand("cluster", "Cluster an embedding CSV");
    cluster_cmd->add_option("--input", o.input, "Embedding CSV")->required();
    cluster_cmd->add_option("--clusters", o.c_hint, "Cluster count (default: from the label column)");
    cluster_cmd->add_option("--clusterer", o.clusterer, "gmm | kmeans");
    cluster_cmd->add_option("--n-init", o.n_init, "Restarts");
    add_run_options(cluster_cmd, o);

    auto* eval_cmd = app.add_subcommand("eval", "Score an assignment CSV against ground truth");
    eval_cmd->add_option("--assignment", o.assignment, "Assignment CSV (index,hard_label,...)")->required();
    add_dataset_options(eval_cmd, o);
    eval_cmd->add_option("--out", o.out, "Output directory");

    auto* ablation_cmd = app.add_subcommand("ablation", "Component ablation table over several seeds");
    add_dataset_options(ablation_cmd, o);
    add_model_options(ablation_cmd, o);
    add_run_options(ablation_cmd, o);
    ablation_cmd->add_option("--seeds", o.seeds, "Comma-separated seeds");
    ablation_cmd->add_option("--only", o.only, "Restrict to these settings, e.g. \"N2D (UMAP)\"");

    auto* viz_cmd = app.add_subcommand("viz", "Scatter plot of a 2-D embedding CSV");
    viz_cmd->add_option("--input", o.input, "2-D embedding CSV")->required();
    viz_cmd->add_option("--max-points", o.max_points, "Points to plot");
    add_run_options(viz_cmd, o);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (run_cmd->parsed()) {
            PipelineConfig cfg = build_config(o);
            if (skip->count() > 0) {
                cfg.ae_skip = true;
            }
            const RunReport rep = run_pipeline(cfg);
            print_metrics(rep);
            std::cout << "report: " << rep.artifacts.at("report") << '\n';
        } else if (train_cmd->parsed()) {
            PipelineConfig cfg = build_config(o);
            const Dataset ds = load_dataset(cfg.dataset);
            AeConfig ae = cfg.ae;
            ae.input_dim = ds.d();
            ae.bottleneck_dim = ae.bottleneck_dim > 0 ? ae.bottleneck_dim : static_cast<std::size_t>(cluster_count_or_throw(ds));
            ae.seed = cfg.seed;
            ae.validate();
            const TrainResult r = train(init(ae), ds, ae, [&](int epoch, double loss) {
                if ((epoch + 1) % 50 == 0 || epoch + 1 == ae.epochs) {
                    std::cout << "epoch " << epoch + 1 << " loss " << loss << '\n';
                }
            });
            save_checkpoint(join(o.out, "checkpoint.n2dc"), r.model);
            std::ofstream loss(join(o.out, "loss.csv"));
            loss << "epoch,loss\n" << std::setprecision(17);
            for (std::size_t i = 0; i < r.loss_history.size(); ++i) {
                loss << i + 1 << ',' << r.loss_history[i] << '\n';
            }
        } else if (embed_cmd->parsed()) {
            PipelineConfig cfg = build_config(o);
            if (!std::filesystem::exists(o.checkpoint)) {
                throw ConfigError("checkpoint '" + o.checkpoint + "' does not exist");
            }
            const Dataset ds = load_dataset(cfg.dataset);
            const AeModel model = load_checkpoint(o.checkpoint);
            write_embedding_csv(join(o.out, "embedding.csv"), encode(model, ds), ds.labels ? &*ds.labels : nullptr);
        } else if (manifold_cmd->parsed()) {
            PipelineConfig cfg = build_config(o);
            std::optional<Labels> labels;
            const Embedding in = load_embedding(o.input, &labels);
            std::size_t dims = cfg.manifold_dims;
            if (dims == 0) {
                Dataset probe;
                probe.labels = labels;
                if (o.c_hint > 0) {
                    probe.c_hint = o.c_hint;
                }
                dims = static_cast<std::size_t>(cluster_count_or_throw(probe));
            }
            ManifoldParams params = cfg.manifold_params;
            params.set_components(dims);
            params.set_seed(cfg.seed);
            params.umap.deterministic = cfg.deterministic;
            params.umap.threads = cfg.deterministic ? 1 : cfg.threads;
            const Embedding out = manifold_fit(in, cfg.manifold, params);
            write_embedding_csv(join(o.out, "embedding.csv"), out, labels ? &*labels : nullptr);
            for (const auto& note : out.notes) {
                std::cout << note << '\n';
            }
        } else if (cluster_cmd->parsed()) {
            PipelineConfig cfg = build_config(o);
            std::optional<Labels> labels;
            const Embedding in = load_embedding(o.input, &labels);
            Dataset probe;
            probe.labels = labels;
            if (o.c_hint > 0) {
                probe.c_hint = o.c_hint;
                probe.labels.reset();
            }
            const int c = cluster_count_or_throw(probe);
            ClusterAssignment a;
            if (cfg.clusterer == ClustererKind::gmm) {
                GmmFit fit = gmm_fit(in, c, cfg.n_init, cfg.seed);
                save_container(join(o.out, "gmm.n2dc"), to_container(fit.model));
                a = std::move(fit.assignment);
            } else {
                a = kmeans_fit(in, c, cfg.n_init, cfg.seed).assignment;
            }
            write_assignment_csv(join(o.out, "assignment.csv"), a);
            if (labels) {
                const MetricsReport m = evaluate(*labels, a.labels);
                std::cout << "acc=" << m.acc << " nmi=" << m.nmi << '\n';
            }
        } else if (eval_cmd->parsed()) {
            PipelineConfig cfg = build_config(o);
            if (!std::filesystem::exists(o.assignment)) {
                throw ConfigError("assignment '" + o.assignment + "' does not exist");
            }
            const Dataset ds = load_dataset(cfg.dataset);
            if (!ds.labels) {
                throw ConfigError("dataset has no labels to evaluate against");
            }
            const Dataset table = load_csv(o.assignment);
            Labels predicted(table.n());
            for (std::size_t i = 0; i < table.n(); ++i) {
                predicted[i] = static_cast<int>(table.features(static_cast<Eigen::Index>(i), 1));
            }
            const MetricsReport m = evaluate(*ds.labels, predicted);
            std::ofstream(join(o.out, "metrics.json")) << std::setw(2) << to_json(m) << '\n';
            std::cout << "acc=" << m.acc << " nmi=" << m.nmi << '\n';
        } else if (ablation_cmd->parsed()) {
            PipelineConfig cfg = build_config(o);
            const Dataset ds = load_dataset(cfg.dataset);
            const AblationTable t = run_ablation(ds, parse_seeds(o.seeds), cfg, o.only,
                                                 [](const std::string& name, std::uint64_t seed, const AblationCell& cell) {
                                                     std::cout << name << " seed " << seed << ": ";
                                                     if (cell.ok) {
                                                         std::cout << "acc=" << cell.acc << " nmi=" << cell.nmi << '\n';
                                                     } else {
                                                         std::cout << "- (" << cell.reason << ")\n";
                                                     }
                                                 });
            std::ofstream(join(o.out, "table.csv")) << to_csv(t);
            std::ofstream(join(o.out, "table.md")) << to_markdown(t);
            std::cout << to_markdown(t);
        } else if (viz_cmd->parsed()) {
            std::optional<Labels> labels;
            const Embedding in = load_embedding(o.input, &labels);
            const VizExport v = export_visualization(in, labels ? &*labels : nullptr, o.max_points, o.out, o.seed);
            std::cout << v.svg_path << " (" << v.count << " points)\n";
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    return run(argc, argv);
}
