#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cpdforge/common.hpp"

namespace cpdforge {

// Fully-connected ReLU stack with a softmax head. weights[i] maps
// layer_dims[i] -> layer_dims[i+1] (rows = out, cols = in).
struct MlpModel {
    std::vector<std::size_t> layer_dims;
    std::vector<Matrix> weights;
    std::vector<std::vector<double>> biases;

    std::size_t n_layers() const { return weights.size(); }
    std::size_t d_in() const { return layer_dims.front(); }
    std::size_t d_out() const { return layer_dims.back(); }

    void validate() const {
        if (layer_dims.size() < 2) throw ConfigError("mlp: need at least input and output dims");
        if (weights.size() != layer_dims.size() - 1 || biases.size() != weights.size())
            throw ConfigError("mlp: layer container mismatch");
        for (std::size_t i = 0; i < weights.size(); ++i) {
            if (weights[i].rows != layer_dims[i + 1] || weights[i].cols != layer_dims[i])
                throw ConfigError("mlp: weight shape mismatch at layer " + std::to_string(i));
            if (biases[i].size() != layer_dims[i + 1]) throw ConfigError("mlp: bias shape mismatch");
            for (double w : weights[i].data)
                if (!std::isfinite(w)) throw NumericError("mlp: non-finite weight");
        }
    }
};

struct TrainConfig {
    std::size_t epochs = 16;
    std::size_t batch_size = 50;
    double learning_rate = 0.001;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::size_t early_stop_patience = 3;
    std::uint64_t seed = 0;

    void validate() const {
        if (epochs < 1) throw ConfigError("train config: epochs must be >= 1");
        if (batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
        if (!(adam_beta1 > 0 && adam_beta1 < 1) || !(adam_beta2 > 0 && adam_beta2 < 1))
            throw ConfigError("train config: betas must lie in (0,1)");
        if (learning_rate < 0) throw ConfigError("train config: learning_rate must be >= 0");
    }
};

struct TrainHistory {
    std::vector<double> train_loss;
    std::vector<double> val_loss;
    std::vector<double> val_accuracy;
    std::size_t stopped_epoch = 0;
};

// Fan-based uniform weights in +-sqrt(6/(fan_in+fan_out)), zero biases.
inline MlpModel init_model(const std::vector<std::size_t>& layer_dims, std::uint64_t seed) {
    if (layer_dims.size() < 2) throw ConfigError("init_model: need at least 2 layer dims");
    for (std::size_t d : layer_dims)
        if (d < 1) throw ConfigError("init_model: layer dims must be >= 1");
    MlpModel m;
    m.layer_dims = layer_dims;
    SplitMix64 rng(seed);
    for (std::size_t i = 0; i + 1 < layer_dims.size(); ++i) {
        const std::size_t fan_in = layer_dims[i], fan_out = layer_dims[i + 1];
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        Matrix w(fan_out, fan_in);
        for (auto& x : w.data) x = (2.0 * rng.next_double() - 1.0) * limit;
        m.weights.push_back(std::move(w));
        m.biases.emplace_back(fan_out, 0.0);
    }
    m.validate();
    return m;
}

namespace detail {

inline void affine(const Matrix& w, const std::vector<double>& b, const std::vector<double>& x,
                   std::vector<double>& out) {
    out.assign(w.rows, 0.0);
    for (std::size_t r = 0; r < w.rows; ++r) {
        const double* wr = w.row(r);
        double s = b[r];
        for (std::size_t c = 0; c < w.cols; ++c) s += wr[c] * x[c];
        out[r] = s;
    }
}

inline void softmax_inplace(std::vector<double>& z) {
    double mx = z[0];
    for (double v : z) mx = std::max(mx, v);
    double sum = 0.0;
    for (auto& v : z) {
        v = std::exp(v - mx);
        sum += v;
    }
    for (auto& v : z) v /= sum;
}

// Pre-activations and activations for every layer; activations[0] is the input.
struct ForwardTrace {
    std::vector<std::vector<double>> pre;
    std::vector<std::vector<double>> act;
};

inline std::vector<double> forward_trace(const MlpModel& m, const std::vector<double>& x, ForwardTrace* trace) {
    std::vector<double> a = x;
    if (trace) {
        trace->pre.clear();
        trace->act.clear();
        trace->act.push_back(a);
    }
    for (std::size_t layer = 0; layer < m.n_layers(); ++layer) {
        std::vector<double> z;
        affine(m.weights[layer], m.biases[layer], a, z);
        if (trace) trace->pre.push_back(z);
        if (layer + 1 < m.n_layers()) {
            for (auto& v : z) v = v > 0.0 ? v : 0.0;
        } else {
            softmax_inplace(z);
        }
        a = std::move(z);
        if (trace) trace->act.push_back(a);
    }
    return a;
}

struct Gradients {
    std::vector<Matrix> dW;
    std::vector<std::vector<double>> db;

    explicit Gradients(const MlpModel& m) {
        for (std::size_t i = 0; i < m.n_layers(); ++i) {
            dW.emplace_back(m.weights[i].rows, m.weights[i].cols);
            db.emplace_back(m.biases[i].size(), 0.0);
        }
    }

    void zero() {
        for (auto& w : dW) std::fill(w.data.begin(), w.data.end(), 0.0);
        for (auto& b : db) std::fill(b.begin(), b.end(), 0.0);
    }
};

// Accumulates d(mean CE loss)/d(params) for one sample already forward-traced;
// `scale` is 1/batch (times any loss weighting).
inline void backward_accumulate(const MlpModel& m, const ForwardTrace& trace, const std::vector<double>& probs,
                                int label, double scale, Gradients& g) {
    std::vector<double> dz(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) dz[i] = probs[i] * scale;
    dz[static_cast<std::size_t>(label)] -= scale;
    for (std::size_t layer = m.n_layers(); layer-- > 0;) {
        const auto& a_prev = trace.act[layer];
        Matrix& dW = g.dW[layer];
        for (std::size_t r = 0; r < dW.rows; ++r) {
            double* dwr = dW.row(r);
            const double dzr = dz[r];
            for (std::size_t c = 0; c < dW.cols; ++c) dwr[c] += dzr * a_prev[c];
            g.db[layer][r] += dzr;
        }
        if (layer == 0) break;
        const Matrix& w = m.weights[layer];
        std::vector<double> da(w.cols, 0.0);
        for (std::size_t r = 0; r < w.rows; ++r) {
            const double* wr = w.row(r);
            const double dzr = dz[r];
            for (std::size_t c = 0; c < w.cols; ++c) da[c] += wr[c] * dzr;
        }
        const auto& z_prev = trace.pre[layer - 1];
        dz.assign(w.cols, 0.0);
        for (std::size_t c = 0; c < w.cols; ++c) dz[c] = z_prev[c] > 0.0 ? da[c] : 0.0;
    }
}

// Adam moment buffers over a flat view of all parameters.
struct AdamState {
    std::vector<double> m, v;
    std::size_t t = 0;

    explicit AdamState(std::size_t n_params) : m(n_params, 0.0), v(n_params, 0.0) {}

    void step(std::vector<double*> params, std::vector<const double*> grads, std::vector<std::size_t> sizes,
              const TrainConfig& cfg) {
        ++t;
        const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
        const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t));
        const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t));
        std::size_t off = 0;
        for (std::size_t block = 0; block < params.size(); ++block) {
            double* p = params[block];
            const double* gr = grads[block];
            for (std::size_t i = 0; i < sizes[block]; ++i) {
                double g = gr[i];
                m[off] = b1 * m[off] + (1.0 - b1) * g;
                v[off] = b2 * v[off] + (1.0 - b2) * g * g;
                double mhat = m[off] / bc1;
                double vhat = v[off] / bc2;
                p[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_eps);
                ++off;
            }
        }
    }
};

inline std::size_t param_count(const MlpModel& m) {
    std::size_t n = 0;
    for (std::size_t i = 0; i < m.n_layers(); ++i) n += m.weights[i].data.size() + m.biases[i].size();
    return n;
}

inline double clamped_log(double p) { return std::log(std::clamp(p, 1e-12, 1.0)); }

}  // namespace detail

// Hidden layers apply ReLU(Wx + b); the output layer applies a max-subtracted
// softmax. Returns the class probability vector.
inline std::vector<double> forward(const MlpModel& m, const std::vector<double>& x) {
    if (x.size() != m.d_in()) throw DataError("forward: input dimension mismatch");
    return detail::forward_trace(m, x, nullptr);
}

// Mean categorical cross-entropy over the batch, predictions clamped to
// [1e-12, 1] before the log.
inline double loss(const Matrix& batch_probs, const std::vector<int>& batch_labels) {
    if (batch_probs.rows != batch_labels.size()) throw DataError("loss: batch size mismatch");
    if (batch_probs.rows == 0) throw DataError("loss: empty batch");
    double total = 0.0;
    for (std::size_t r = 0; r < batch_probs.rows; ++r) {
        int y = batch_labels[r];
        if (y < 0 || static_cast<std::size_t>(y) >= batch_probs.cols) throw DataError("loss: label out of range");
        double sum = 0.0;
        for (std::size_t c = 0; c < batch_probs.cols; ++c) sum += batch_probs.at(r, c);
        if (std::abs(sum - 1.0) > 1e-6) throw DataError("loss: probability row does not sum to 1");
        total -= detail::clamped_log(batch_probs.at(r, static_cast<std::size_t>(y)));
    }
    return total / static_cast<double>(batch_probs.rows);
}

// One-hot label variant.
inline double loss(const Matrix& batch_probs, const Matrix& one_hot_labels) {
    if (batch_probs.rows != one_hot_labels.rows || batch_probs.cols != one_hot_labels.cols)
        throw DataError("loss: shape mismatch");
    if (batch_probs.rows == 0) throw DataError("loss: empty batch");
    double total = 0.0;
    for (std::size_t r = 0; r < batch_probs.rows; ++r)
        for (std::size_t c = 0; c < batch_probs.cols; ++c)
            total -= one_hot_labels.at(r, c) * detail::clamped_log(batch_probs.at(r, c));
    return total / static_cast<double>(batch_probs.rows);
}

// Argmax class with lowest-index tie-break; the score is the max probability.
inline std::pair<int, double> predict_class(const MlpModel& m, const std::vector<double>& x) {
    auto probs = forward(m, x);
    int best = 0;
    double best_p = probs[0];
    for (std::size_t i = 1; i < probs.size(); ++i)
        if (probs[i] > best_p) {
            best_p = probs[i];
            best = static_cast<int>(i);
        }
    return {best, best_p};
}

namespace detail {

struct EvalResult {
    double loss = 0.0;
    double accuracy = 0.0;
};

inline EvalResult evaluate(const MlpModel& m, const Matrix& X, const std::vector<int>& y) {
    EvalResult res;
    if (X.rows == 0) return res;
    std::vector<double> losses(X.rows);
    std::vector<char> correct(X.rows);
    parallel_for(X.rows, [&](std::size_t r) {
        std::vector<double> x(X.row(r), X.row(r) + X.cols);
        auto probs = forward_trace(m, x, nullptr);
        losses[r] = -clamped_log(probs[static_cast<std::size_t>(y[r])]);
        int best = 0;
        for (std::size_t i = 1; i < probs.size(); ++i)
            if (probs[i] > probs[best]) best = static_cast<int>(i);
        correct[r] = best == y[r] ? 1 : 0;
    });
    double total = 0.0;
    std::size_t n_correct = 0;
    for (std::size_t r = 0; r < X.rows; ++r) {
        total += losses[r];
        n_correct += static_cast<std::size_t>(correct[r]);
    }
    res.loss = total / static_cast<double>(X.rows);
    res.accuracy = static_cast<double>(n_correct) / static_cast<double>(X.rows);
    return res;
}

}  // namespace detail

// Mini-batch Adam with per-epoch seeded shuffling and early stopping on
// validation loss. When patience runs out the parameters roll back to the
// best-validation epoch.
inline std::pair<MlpModel, TrainHistory> train(MlpModel model, const Matrix& X, const std::vector<int>& y,
                                               const Matrix& X_val, const std::vector<int>& y_val,
                                               const TrainConfig& cfg) {
    cfg.validate();
    model.validate();
    if (X.rows == 0) throw DataError("train: empty training set");
    if (X.rows != y.size() || X_val.rows != y_val.size()) throw DataError("train: label count mismatch");
    if (X.cols != model.d_in()) throw DataError("train: input dimension mismatch");
    for (int label : y)
        if (label < 0 || static_cast<std::size_t>(label) >= model.d_out())
            throw DataError("train: label outside output range");

    TrainHistory history;
    detail::Gradients grads(model);
    detail::AdamState adam(detail::param_count(model));
    detail::ForwardTrace trace;

    std::vector<std::size_t> perm(X.rows);
    for (std::size_t i = 0; i < X.rows; ++i) perm[i] = i;

    MlpModel best_model = model;
    double best_val = std::numeric_limits<double>::infinity();
    std::size_t bad_epochs = 0;
    bool stopped_early = false;
    const bool use_early_stop = X_val.rows > 0 && cfg.early_stop_patience > 0;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        SplitMix64 rng(mix_seed(cfg.seed, epoch));
        rng.shuffle(perm);

        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < X.rows; start += cfg.batch_size) {
            const std::size_t end = std::min(X.rows, start + cfg.batch_size);
            const double scale = 1.0 / static_cast<double>(end - start);
            grads.zero();
            double batch_loss = 0.0;
            for (std::size_t i = start; i < end; ++i) {
                const std::size_t r = perm[i];
                std::vector<double> x(X.row(r), X.row(r) + X.cols);
                auto probs = detail::forward_trace(model, x, &trace);
                batch_loss -= detail::clamped_log(probs[static_cast<std::size_t>(y[r])]);
                detail::backward_accumulate(model, trace, probs, y[r], scale, grads);
            }
            epoch_loss += batch_loss;
            std::vector<double*> params;
            std::vector<const double*> gptrs;
            std::vector<std::size_t> sizes;
            for (std::size_t l = 0; l < model.n_layers(); ++l) {
                params.push_back(model.weights[l].data.data());
                gptrs.push_back(grads.dW[l].data.data());
                sizes.push_back(model.weights[l].data.size());
                params.push_back(model.biases[l].data());
                gptrs.push_back(grads.db[l].data());
                sizes.push_back(model.biases[l].size());
            }
            adam.step(std::move(params), std::move(gptrs), std::move(sizes), cfg);
        }
        history.train_loss.push_back(epoch_loss / static_cast<double>(X.rows));

        auto val = detail::evaluate(model, X_val, y_val);
        history.val_loss.push_back(val.loss);
        history.val_accuracy.push_back(val.accuracy);
        history.stopped_epoch = epoch;

        if (use_early_stop) {
            if (val.loss < best_val) {
                best_val = val.loss;
                best_model = model;
                bad_epochs = 0;
            } else if (++bad_epochs >= cfg.early_stop_patience) {
                stopped_early = true;
                break;
            }
        }
    }
    if (stopped_early) model = std::move(best_model);
    return {std::move(model), std::move(history)};
}

inline nlohmann::json model_to_json(const MlpModel& m) {
    nlohmann::json j;
    j["dims"] = m.layer_dims;
    nlohmann::json weights = nlohmann::json::array();
    for (const auto& w : m.weights) {
        nlohmann::json layer = nlohmann::json::array();
        for (std::size_t r = 0; r < w.rows; ++r) {
            nlohmann::json row = nlohmann::json::array();
            for (std::size_t c = 0; c < w.cols; ++c) row.push_back(w.at(r, c));
            layer.push_back(row);
        }
        weights.push_back(layer);
    }
    j["weights"] = weights;
    j["biases"] = m.biases;
    return j;
}

inline MlpModel model_from_json(const nlohmann::json& j) {
    MlpModel m;
    m.layer_dims = j.at("dims").get<std::vector<std::size_t>>();
    for (std::size_t l = 0; l + 1 < m.layer_dims.size(); ++l) {
        const auto& layer = j.at("weights")[l];
        Matrix w(m.layer_dims[l + 1], m.layer_dims[l]);
        for (std::size_t r = 0; r < w.rows; ++r)
            for (std::size_t c = 0; c < w.cols; ++c) w.at(r, c) = layer[r][c].get<double>();
        m.weights.push_back(std::move(w));
        m.biases.push_back(j.at("biases")[l].get<std::vector<double>>());
    }
    m.validate();
    return m;
}

inline std::string history_csv(const TrainHistory& h) {
    std::string out = "epoch,train_loss,val_loss,val_acc\n";
    for (std::size_t e = 0; e < h.train_loss.size(); ++e) {
        out += std::to_string(e + 1);
        out += ',';
        out += format_double(h.train_loss[e]);
        out += ',';
        out += format_double(h.val_loss[e]);
        out += ',';
        out += format_double(h.val_accuracy[e]);
        out += '\n';
    }
    return out;
}

}  // namespace cpdforge
