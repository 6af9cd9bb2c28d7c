#ifndef N2D_AUTOENCODER_HPP
#define N2D_AUTOENCODER_HPP

#include "common.hpp"
#include "container.hpp"
#include "data_io.hpp"
#include "embedding.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

/**
 * @file autoencoder.hpp
 *
 * @brief Fully connected autoencoder trained with mini-batch Adam on MSE.
 *
 * The encoder maps `d -> hidden... -> c` and the decoder mirrors it back to
 * `d`. Hidden layers use ReLU; the bottleneck and the reconstruction layer
 * are linear so that embeddings can take either sign and unit-range inputs
 * can be reproduced exactly.
 */

namespace n2d {

struct AeConfig {
    std::size_t input_dim = 0;
    std::size_t bottleneck_dim = 0;
    std::vector<std::size_t> hidden_dims{500, 500, 2000};
    int epochs = 1000;
    std::size_t batch_size = 256;
    double learning_rate = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;

    void validate() const {
        if (input_dim < 1 || bottleneck_dim < 1) {
            throw ConfigError("autoencoder input and bottleneck dimensions must be >= 1");
        }
        for (auto h : hidden_dims) {
            if (h < 1) {
                throw ConfigError("autoencoder hidden dimensions must be >= 1");
            }
        }
        if (epochs < 1) {
            throw ConfigError("autoencoder epochs must be >= 1");
        }
        if (batch_size < 1) {
            throw ConfigError("autoencoder batch_size must be >= 1");
        }
        if (!(learning_rate > 0)) {
            throw ConfigError("autoencoder learning_rate must be > 0");
        }
    }

    /// Layer widths from input to reconstruction, e.g. d,500,500,2000,c,2000,500,500,d.
    std::vector<std::size_t> layer_widths() const {
        std::vector<std::size_t> w{input_dim};
        w.insert(w.end(), hidden_dims.begin(), hidden_dims.end());
        w.push_back(bottleneck_dim);
        w.insert(w.end(), hidden_dims.rbegin(), hidden_dims.rend());
        w.push_back(input_dim);
        return w;
    }
};

struct DenseLayer {
    Matrix weights; // fan_in x fan_out
    RowVector bias;
    bool relu = true;

    // Adam first/second moments.
    Matrix weights_m, weights_v;
    RowVector bias_m, bias_v;

    std::size_t fan_in() const { return static_cast<std::size_t>(weights.rows()); }
    std::size_t fan_out() const { return static_cast<std::size_t>(weights.cols()); }
};

struct AeModel {
    AeConfig config;
    std::vector<DenseLayer> layers;
    long long adam_step = 0;

    /// Layers [0, encoder_depth()) form the encoder.
    std::size_t encoder_depth() const { return config.hidden_dims.size() + 1; }
};

struct Gradients {
    std::vector<Matrix> weights;
    std::vector<RowVector> biases;
};

inline double glorot_bound(std::size_t fan_in, std::size_t fan_out) {
    return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

/// Glorot-uniform weights, zero biases, zero moments.
inline AeModel init(const AeConfig& config) {
    config.validate();
    AeModel model;
    model.config = config;
    Rng rng(config.seed);
    const auto widths = config.layer_widths();
    const std::size_t depth = widths.size() - 1;
    const std::size_t bottleneck = config.hidden_dims.size();
    for (std::size_t l = 0; l < depth; ++l) {
        DenseLayer layer;
        const auto in = static_cast<Eigen::Index>(widths[l]);
        const auto out = static_cast<Eigen::Index>(widths[l + 1]);
        const double bound = glorot_bound(widths[l], widths[l + 1]);
        layer.weights.resize(in, out);
        for (Eigen::Index i = 0; i < in; ++i) {
            for (Eigen::Index j = 0; j < out; ++j) {
                layer.weights(i, j) = rng.uniform(-bound, bound);
            }
        }
        layer.bias = RowVector::Zero(out);
        layer.relu = l != bottleneck && l != depth - 1;
        layer.weights_m = Matrix::Zero(in, out);
        layer.weights_v = Matrix::Zero(in, out);
        layer.bias_m = RowVector::Zero(out);
        layer.bias_v = RowVector::Zero(out);
        model.layers.push_back(std::move(layer));
    }
    return model;
}

namespace detail {

inline void apply_layer(const DenseLayer& layer, const Matrix& input, Matrix& output) {
    output.noalias() = input * layer.weights;
    output.rowwise() += layer.bias;
    if (layer.relu) {
        output = output.cwiseMax(0.0);
    }
}

/// Runs layers [first, last) keeping every activation; acts[0] is the input.
inline void forward_keep(const AeModel& model, const Matrix& input, std::vector<Matrix>& acts) {
    const std::size_t depth = model.layers.size();
    acts.resize(depth + 1);
    acts[0] = input;
    for (std::size_t l = 0; l < depth; ++l) {
        apply_layer(model.layers[l], acts[l], acts[l + 1]);
    }
}

inline Matrix run_layers(const AeModel& model, const Matrix& input, std::size_t first, std::size_t last) {
    Matrix current = input;
    Matrix next;
    for (std::size_t l = first; l < last; ++l) {
        apply_layer(model.layers[l], current, next);
        current.swap(next);
    }
    return current;
}

inline void check_input_dim(const AeModel& model, Eigen::Index cols) {
    if (static_cast<std::size_t>(cols) != model.config.input_dim) {
        throw DimensionError("autoencoder expects " + std::to_string(model.config.input_dim) + " input columns, got " +
                             std::to_string(cols));
    }
}

/// Backpropagates MSE through cached activations, filling `grads`. Returns the loss.
inline double backward(const AeModel& model, const std::vector<Matrix>& acts, Gradients& grads) {
    const std::size_t depth = model.layers.size();
    const Matrix& input = acts.front();
    const Matrix& output = acts.back();
    const double count = static_cast<double>(input.rows() * input.cols());
    Matrix delta = output - input;
    const double loss = delta.squaredNorm() / count;
    delta *= 2.0 / count;

    grads.weights.resize(depth);
    grads.biases.resize(depth);
    Matrix upstream;
    for (std::size_t l = depth; l-- > 0;) {
        const DenseLayer& layer = model.layers[l];
        if (layer.relu) {
            delta = (acts[l + 1].array() > 0.0).select(delta, 0.0);
        }
        grads.weights[l].noalias() = acts[l].transpose() * delta;
        grads.biases[l] = delta.colwise().sum();
        if (l > 0) {
            upstream.noalias() = delta * layer.weights.transpose();
            delta.swap(upstream);
        }
    }
    return loss;
}

inline void adam_update(AeModel& model, const Gradients& grads) {
    const AeConfig& cfg = model.config;
    ++model.adam_step;
    const double t = static_cast<double>(model.adam_step);
    const double c1 = 1.0 - std::pow(cfg.adam_beta1, t);
    const double c2 = 1.0 - std::pow(cfg.adam_beta2, t);
    const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
    const double lr = cfg.learning_rate, eps = cfg.adam_eps;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        DenseLayer& layer = model.layers[l];
        layer.weights_m = b1 * layer.weights_m + (1.0 - b1) * grads.weights[l];
        layer.weights_v = b2 * layer.weights_v + (1.0 - b2) * grads.weights[l].cwiseAbs2();
        layer.weights.array() -=
            lr * (layer.weights_m.array() / c1) / ((layer.weights_v.array() / c2).sqrt() + eps);
        layer.bias_m = b1 * layer.bias_m + (1.0 - b1) * grads.biases[l];
        layer.bias_v = b2 * layer.bias_v + (1.0 - b2) * grads.biases[l].cwiseAbs2();
        layer.bias.array() -= lr * (layer.bias_m.array() / c1) / ((layer.bias_v.array() / c2).sqrt() + eps);
    }
}

inline bool parameters_finite(const AeModel& model) {
    for (const auto& layer : model.layers) {
        if (!layer.weights.allFinite() || !layer.bias.allFinite()) {
            return false;
        }
    }
    return true;
}

} // namespace detail

struct ForwardResult {
    Matrix embedding;
    Matrix reconstruction;
};

inline ForwardResult forward(const AeModel& model, const Matrix& batch) {
    detail::check_input_dim(model, batch.cols());
    ForwardResult out;
    out.embedding = detail::run_layers(model, batch, 0, model.encoder_depth());
    out.reconstruction = detail::run_layers(model, out.embedding, model.encoder_depth(), model.layers.size());
    return out;
}

/// Mean squared reconstruction error and its gradient for every parameter.
inline double loss_and_gradients(const AeModel& model, const Matrix& batch, Gradients& grads) {
    detail::check_input_dim(model, batch.cols());
    std::vector<Matrix> acts;
    detail::forward_keep(model, batch, acts);
    return detail::backward(model, acts, grads);
}

/// Full-batch mean squared reconstruction error, evaluated in row chunks.
inline double reconstruction_loss(const AeModel& model, const Matrix& data, Eigen::Index chunk = 4096) {
    detail::check_input_dim(model, data.cols());
    double total = 0.0;
    for (Eigen::Index start = 0; start < data.rows(); start += chunk) {
        const Eigen::Index len = std::min(chunk, data.rows() - start);
        const Matrix block = data.middleRows(start, len);
        const Matrix rec = detail::run_layers(model, block, 0, model.layers.size());
        total += (rec - block).squaredNorm();
    }
    return total / static_cast<double>(data.rows() * data.cols());
}

struct TrainResult {
    AeModel model;
    std::vector<double> loss_history;
};

/// Called after each epoch with (epoch index, mean loss).
using EpochCallback = std::function<void(int, double)>;

/**
 * Mini-batch Adam on the reconstruction MSE for `config.epochs` epochs.
 *
 * Rows are reshuffled every epoch from a generator seeded with
 * `config.seed`; the last short batch is kept. Each history entry is the
 * mean of per-batch losses weighted by batch size, i.e. the per-sample mean
 * of the losses observed during that epoch. There is no early stopping.
 */
inline TrainResult train(AeModel model, const Dataset& ds, const AeConfig& config, const EpochCallback& on_epoch = {}) {
    config.validate();
    detail::check_input_dim(model, ds.features.cols());
    model.config.epochs = config.epochs;
    model.config.batch_size = config.batch_size;
    model.config.learning_rate = config.learning_rate;
    model.config.adam_beta1 = config.adam_beta1;
    model.config.adam_beta2 = config.adam_beta2;
    model.config.adam_eps = config.adam_eps;

    const auto n = static_cast<std::size_t>(ds.features.rows());
    const auto d = ds.features.cols();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    // Shuffling draws from a stream separate from initialization.
    Rng rng(config.seed ^ 0x5851f42d4c957f2dULL);

    TrainResult result;
    result.loss_history.reserve(static_cast<std::size_t>(config.epochs));
    std::vector<Matrix> acts;
    Gradients grads;
    Matrix batch;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_total = 0.0;
        for (std::size_t start = 0; start < n; start += config.batch_size) {
            const std::size_t len = std::min(config.batch_size, n - start);
            batch.resize(static_cast<Eigen::Index>(len), d);
            for (std::size_t r = 0; r < len; ++r) {
                batch.row(static_cast<Eigen::Index>(r)) = ds.features.row(static_cast<Eigen::Index>(order[start + r]));
            }
            detail::forward_keep(model, batch, acts);
            const double loss = detail::backward(model, acts, grads);
            if (!std::isfinite(loss)) {
                throw DivergenceError("autoencoder loss became non-finite in epoch " + std::to_string(epoch + 1));
            }
            epoch_total += loss * static_cast<double>(len);
            detail::adam_update(model, grads);
            if (!detail::parameters_finite(model)) {
                throw DivergenceError("autoencoder parameters became non-finite in epoch " + std::to_string(epoch + 1));
            }
        }
        const double mean = epoch_total / static_cast<double>(n);
        result.loss_history.push_back(mean);
        if (on_epoch) {
            on_epoch(epoch, mean);
        }
    }
    result.model = std::move(model);
    return result;
}

/// Bottleneck activations for every sample, computed in row chunks.
inline Embedding encode(const AeModel& model, const Dataset& ds, Eigen::Index chunk = 4096) {
    detail::check_input_dim(model, ds.features.cols());
    Embedding emb;
    emb.provenance = Provenance::autoencoded;
    emb.method = "autoencoder";
    emb.coords.resize(ds.features.rows(), static_cast<Eigen::Index>(model.config.bottleneck_dim));
    for (Eigen::Index start = 0; start < ds.features.rows(); start += chunk) {
        const Eigen::Index len = std::min(chunk, ds.features.rows() - start);
        emb.coords.middleRows(start, len) = detail::run_layers(model, ds.features.middleRows(start, len), 0, model.encoder_depth());
    }
    return emb;
}

inline Matrix decode(const AeModel& model, const Matrix& codes) {
    if (static_cast<std::size_t>(codes.cols()) != model.config.bottleneck_dim) {
        throw DimensionError("decoder expects " + std::to_string(model.config.bottleneck_dim) + " columns");
    }
    return detail::run_layers(model, codes, model.encoder_depth(), model.layers.size());
}

inline nlohmann::json to_json(const AeConfig& c) {
    return {{"input_dim", c.input_dim},         {"bottleneck_dim", c.bottleneck_dim}, {"hidden_dims", c.hidden_dims},
            {"epochs", c.epochs},               {"batch_size", c.batch_size},         {"learning_rate", c.learning_rate},
            {"adam_beta1", c.adam_beta1},       {"adam_beta2", c.adam_beta2},         {"adam_eps", c.adam_eps},
            {"seed", c.seed},                   {"init", "glorot_uniform"},           {"activation", "relu_hidden_linear_bottleneck_output"}};
}

inline AeConfig ae_config_from_json(const nlohmann::json& j, AeConfig c = {}) {
    c.input_dim = j.value("input_dim", c.input_dim);
    c.bottleneck_dim = j.value("bottleneck_dim", c.bottleneck_dim);
    c.hidden_dims = j.value("hidden_dims", c.hidden_dims);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
    c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
    c.adam_eps = j.value("adam_eps", c.adam_eps);
    c.seed = j.value("seed", c.seed);
    return c;
}

inline void save_checkpoint(const std::string& path, const AeModel& model) {
    Container c;
    c.meta = {{"kind", "autoencoder"}, {"config", to_json(model.config)}, {"adam_step", model.adam_step}};
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const auto& layer = model.layers[l];
        const std::string p = "layer" + std::to_string(l) + ".";
        c.tensors[p + "weights"] = layer.weights;
        c.tensors[p + "bias"] = layer.bias;
        c.tensors[p + "weights_m"] = layer.weights_m;
        c.tensors[p + "weights_v"] = layer.weights_v;
        c.tensors[p + "bias_m"] = layer.bias_m;
        c.tensors[p + "bias_v"] = layer.bias_v;
    }
    save_container(path, c);
}

inline AeModel load_checkpoint(const std::string& path) {
    const Container c = load_container(path);
    if (c.meta.value("kind", "") != "autoencoder") {
        throw FormatError("'" + path + "' is not an autoencoder checkpoint");
    }
    AeModel model = init(ae_config_from_json(c.meta.at("config")));
    model.adam_step = c.meta.value("adam_step", 0LL);
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        auto& layer = model.layers[l];
        const std::string p = "layer" + std::to_string(l) + ".";
        auto take = [&](const std::string& name, auto& dst) {
            const Matrix& src = c.tensor(p + name);
            if (src.rows() != dst.rows() || src.cols() != dst.cols()) {
                throw FormatError("'" + path + "' tensor " + p + name + " has the wrong shape");
            }
            dst = src;
        };
        take("weights", layer.weights);
        take("bias", layer.bias);
        take("weights_m", layer.weights_m);
        take("weights_v", layer.weights_v);
        take("bias_m", layer.bias_m);
        take("bias_v", layer.bias_v);
    }
    return model;
}

} // namespace n2d

#endif
