#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cpdforge/clustering.hpp"
#include "cpdforge/common.hpp"
#include "cpdforge/cpd_estimation.hpp"
#include "cpdforge/dag_core.hpp"
#include "cpdforge/data_model.hpp"
#include "cpdforge/demographic_map.hpp"
#include "cpdforge/dsid_net.hpp"
#include "cpdforge/structure_search.hpp"

namespace cpdforge {

struct PipelineConfig {
    std::string input_path;
    std::string out_dir = "artifacts";
    std::vector<std::string> targets = {"V", "D"};  // demographic variables; first is the outer category key
    std::vector<std::string> severity_nodes;        // stage-1 CPD report targets
    std::vector<std::string> feature_vars;          // optional override for the ancestor feature set

    SearchConfig structure;

    std::string estimator = "bayesian";  // "mle" or "bayesian"
    double ess = 1.0;

    int k = 0;  // fixed cluster count when > 0, otherwise scan [k_min, k_max]
    int k_min = 2;
    int k_max = 8;
    std::uint64_t cluster_seed = 0;
    Encoding cluster_encoding = Encoding::one_hot;
    std::size_t lloyd_max_iter = 100;
    std::size_t kmeans_restarts = 5;

    TrainConfig training;
    std::vector<std::size_t> hidden_dims = {128, 128, 64, 64, 32};
    SplitSpec split;
    bool heuristic_baseline = false;

    void validate() const {
        structure.validate();
        training.validate();
        split.validate();
        if (estimator != "mle" && estimator != "bayesian")
            throw ConfigError("config: estimator must be 'mle' or 'bayesian'");
        if (estimator == "bayesian" && !(ess > 0)) throw ConfigError("config: ess must be positive");
        if (targets.size() < 2) throw ConfigError("config: need at least two demographic target variables");
        if (k < 0) throw ConfigError("config: k must be >= 0");
    }
};

inline Encoding encoding_from_string(const std::string& s) {
    if (s == "one_hot") return Encoding::one_hot;
    if (s == "integer") return Encoding::integer;
    throw ConfigError("config: encoding must be 'one_hot' or 'integer'");
}

inline PipelineConfig config_from_json(const nlohmann::json& j) {
    PipelineConfig cfg;
    if (j.contains("input")) cfg.input_path = j.at("input").get<std::string>();
    if (j.contains("out")) cfg.out_dir = j.at("out").get<std::string>();
    if (j.contains("targets")) cfg.targets = j.at("targets").get<std::vector<std::string>>();
    if (j.contains("severity_nodes")) cfg.severity_nodes = j.at("severity_nodes").get<std::vector<std::string>>();
    if (j.contains("feature_vars")) cfg.feature_vars = j.at("feature_vars").get<std::vector<std::string>>();
    if (j.contains("heuristic_baseline")) cfg.heuristic_baseline = j.at("heuristic_baseline").get<bool>();
    if (j.contains("structure")) {
        const auto& s = j.at("structure");
        if (s.contains("score")) {
            std::string score = s.at("score").get<std::string>();
            if (score == "bic")
                cfg.structure.score = ScoreType::bic;
            else if (score == "bdeu")
                cfg.structure.score = ScoreType::bdeu;
            else
                throw ConfigError("config: score must be 'bic' or 'bdeu'");
        }
        if (s.contains("ess")) cfg.structure.ess = s.at("ess").get<double>();
        if (s.contains("max_parents")) cfg.structure.max_parents = s.at("max_parents").get<std::size_t>();
        if (s.contains("max_iterations")) cfg.structure.max_iterations = s.at("max_iterations").get<std::size_t>();
        if (s.contains("restarts")) cfg.structure.restarts = s.at("restarts").get<std::size_t>();
        if (s.contains("seed")) cfg.structure.seed = s.at("seed").get<std::uint64_t>();
    }
    if (j.contains("estimator")) {
        const auto& e = j.at("estimator");
        if (e.contains("method")) cfg.estimator = e.at("method").get<std::string>();
        if (e.contains("ess")) cfg.ess = e.at("ess").get<double>();
    }
    if (j.contains("clustering")) {
        const auto& c = j.at("clustering");
        if (c.contains("k")) cfg.k = c.at("k").get<int>();
        if (c.contains("k_min")) cfg.k_min = c.at("k_min").get<int>();
        if (c.contains("k_max")) cfg.k_max = c.at("k_max").get<int>();
        if (c.contains("seed")) cfg.cluster_seed = c.at("seed").get<std::uint64_t>();
        if (c.contains("encoding")) cfg.cluster_encoding = encoding_from_string(c.at("encoding").get<std::string>());
        if (c.contains("max_iter")) cfg.lloyd_max_iter = c.at("max_iter").get<std::size_t>();
        if (c.contains("restarts")) cfg.kmeans_restarts = c.at("restarts").get<std::size_t>();
    }
    if (j.contains("training")) {
        const auto& t = j.at("training");
        if (t.contains("epochs")) cfg.training.epochs = t.at("epochs").get<std::size_t>();
        if (t.contains("batch_size")) cfg.training.batch_size = t.at("batch_size").get<std::size_t>();
        if (t.contains("learning_rate")) cfg.training.learning_rate = t.at("learning_rate").get<double>();
        if (t.contains("beta1")) cfg.training.adam_beta1 = t.at("beta1").get<double>();
        if (t.contains("beta2")) cfg.training.adam_beta2 = t.at("beta2").get<double>();
        if (t.contains("eps")) cfg.training.adam_eps = t.at("eps").get<double>();
        if (t.contains("patience")) cfg.training.early_stop_patience = t.at("patience").get<std::size_t>();
        if (t.contains("seed")) cfg.training.seed = t.at("seed").get<std::uint64_t>();
        if (t.contains("hidden_dims")) cfg.hidden_dims = t.at("hidden_dims").get<std::vector<std::size_t>>();
    }
    if (j.contains("split")) {
        const auto& s = j.at("split");
        if (s.contains("train")) cfg.split.train = s.at("train").get<double>();
        if (s.contains("val")) cfg.split.val = s.at("val").get<double>();
        if (s.contains("test")) cfg.split.test = s.at("test").get<double>();
        if (s.contains("seed")) cfg.split.seed = s.at("seed").get<std::uint64_t>();
    }
    return cfg;
}

inline PipelineConfig load_config(const std::string& path) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const DataError& e) {
        throw ConfigError(e.what());
    }
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return config_from_json(j);
}

struct Stage1Result {
    ScoredDag scored;
    BayesNet net;
};

struct Stage2Result {
    std::vector<std::string> feature_names;  // ascending node index order
    ClusterModel model;
    KSelection selection;  // scan results; single entry when k was fixed
    std::vector<int> labels;
};

struct Stage3Result {
    MlpModel model;
    TrainHistory history;
    DemographicTable demographics;
    nlohmann::json report;
};

namespace detail {

inline void ensure_dir(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw DataError("cannot create directory: " + dir);
}

// Sub-table restricted to the named columns, preserving row order.
inline CategoricalTable project_columns(const CategoricalTable& t, const std::vector<std::string>& names) {
    CategoricalTable out;
    std::vector<std::size_t> idx;
    for (const auto& name : names) {
        std::size_t v = t.var_index(name);
        idx.push_back(v);
        out.variables.push_back(t.variables[v]);
        out.states.push_back(t.states[v]);
    }
    out.cells.reserve(t.n_rows() * idx.size());
    for (std::size_t r = 0; r < t.n_rows(); ++r)
        for (std::size_t v : idx) out.cells.push_back(t.at(r, v));
    return out;
}

inline Matrix rows_subset(const Matrix& m, const std::vector<std::size_t>& rows) {
    Matrix out(rows.size(), m.cols);
    for (std::size_t i = 0; i < rows.size(); ++i)
        std::copy(m.row(rows[i]), m.row(rows[i]) + m.cols, out.row(i));
    return out;
}

template <typename T>
std::vector<T> values_subset(const std::vector<T>& v, const std::vector<std::size_t>& rows) {
    std::vector<T> out;
    out.reserve(rows.size());
    for (std::size_t r : rows) out.push_back(v[r]);
    return out;
}

}  // namespace detail

// Encoded-feature schema stored with trained models so raw records can be
// encoded identically at prediction time.
struct FeatureSchema {
    std::vector<std::string> variables;
    std::vector<std::vector<std::string>> states;
    Encoding encoding = Encoding::one_hot;
};

namespace detail {

// label_of(row, v) yields the raw string label of schema variable v in row.
template <typename LabelOf>
Matrix encode_rows_with_schema(std::size_t n_rows, const FeatureSchema& schema, LabelOf&& label_of) {
    std::size_t dims = 0;
    std::vector<std::size_t> offset;
    for (const auto& s : schema.states) {
        offset.push_back(dims);
        dims += schema.encoding == Encoding::one_hot ? s.size() : 1;
    }
    Matrix out(n_rows, dims);
    for (std::size_t r = 0; r < n_rows; ++r) {
        for (std::size_t v = 0; v < schema.variables.size(); ++v) {
            const std::string& label = label_of(r, v);
            const auto& schema_states = schema.states[v];
            auto it = std::find(schema_states.begin(), schema_states.end(), label);
            if (it == schema_states.end())
                throw DataError("unknown state '" + label + "' for feature " + schema.variables[v]);
            auto s = static_cast<std::size_t>(it - schema_states.begin());
            if (schema.encoding == Encoding::one_hot)
                out.at(r, offset[v] + s) = 1.0;
            else
                out.at(r, offset[v]) = static_cast<double>(s);
        }
    }
    return out;
}

}  // namespace detail

inline Matrix encode_with_schema(const CategoricalTable& raw, const FeatureSchema& schema) {
    std::vector<std::size_t> col;
    for (const auto& name : schema.variables) col.push_back(raw.var_index(name));
    return detail::encode_rows_with_schema(raw.n_rows(), schema, [&](std::size_t r, std::size_t v) -> const std::string& {
        return raw.states[col[v]][static_cast<std::size_t>(raw.at(r, col[v]))];
    });
}

// Prediction-time CSV path: cells are matched against the stored schema by
// label, with none of the training-data state-inference rules. Any batch
// size, constant columns included.
inline Matrix encode_csv_with_schema(const std::string& csv_text, const FeatureSchema& schema) {
    auto rows = detail::parse_csv(csv_text);
    if (rows.size() < 2) throw DataError("prediction input: need a header row and at least one record");
    const auto& header = rows[0];
    std::vector<std::size_t> col;
    for (const auto& name : schema.variables) {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw DataError("prediction input: missing feature column " + name);
        col.push_back(static_cast<std::size_t>(it - header.begin()));
    }
    for (std::size_t r = 1; r < rows.size(); ++r)
        if (rows[r].size() != header.size())
            throw DataError("prediction input: ragged row: line " + std::to_string(r + 1));
    return detail::encode_rows_with_schema(rows.size() - 1, schema, [&](std::size_t r, std::size_t v) -> const std::string& {
        return rows[r + 1][col[v]];
    });
}

// ---- stage 1: structure + CPDs -------------------------------------------

inline Stage1Result run_stage1_on(const CategoricalTable& table, const PipelineConfig& cfg) {
    Stage1Result res;
    if (table.n_vars() == 1) {
        res.scored.dag = Dag(1, {table.variables[0]}, {});
        res.scored.score = total_score(table, res.scored.dag, cfg.structure);
        res.scored.iterations_used = 0;
    } else {
        res.scored = hill_climb(table, cfg.structure);
    }
    res.net = cfg.estimator == "mle" ? fit_mle(table, res.scored.dag) : fit_bayesian(table, res.scored.dag, cfg.ess);
    return res;
}

inline void write_stage1(const Stage1Result& res, const PipelineConfig& cfg) {
    const std::string dir = cfg.out_dir + "/stage1";
    detail::ensure_dir(dir + "/reports");
    nlohmann::json scored = dag_to_json(res.scored.dag);
    scored["score"] = res.scored.score;
    scored["iterations"] = res.scored.iterations_used;
    write_file(dir + "/dag.json", scored.dump(2) + "\n");
    write_file(dir + "/adjacency.csv", dag_to_adjacency_csv(res.scored.dag));
    write_file(dir + "/cpds.json", net_to_json(res.net).dump(2) + "\n");
    for (const auto& node : cfg.severity_nodes) {
        auto rep = severity_report(res.net, node);
        write_file(dir + "/reports/" + node + ".csv", severity_report_csv(rep));
    }
}

inline Stage1Result run_stage1(const PipelineConfig& cfg) {
    CategoricalTable table = load_csv(cfg.input_path);
    Stage1Result res = run_stage1_on(table, cfg);
    write_stage1(res, cfg);
    return res;
}

// ---- stage 2: ancestor features + clustering ------------------------------

inline Stage2Result run_stage2_on(const CategoricalTable& table, const Dag& dag, const PipelineConfig& cfg) {
    Stage2Result res;
    if (!cfg.feature_vars.empty()) {
        res.feature_names = cfg.feature_vars;
    } else {
        std::set<int> feature_set = ancestors(dag, cfg.targets);
        if (feature_set.empty())
            throw DataError(
                "the demographic targets have no ancestors in the learned graph; "
                "set feature_vars in the config to cluster on a fixed feature list");
        for (int v : feature_set) res.feature_names.push_back(dag.node_names()[static_cast<std::size_t>(v)]);
    }

    CategoricalTable sub = detail::project_columns(table, res.feature_names);
    FeatureMatrix fm = encode(sub, cfg.cluster_encoding);

    int chosen_k;
    if (cfg.k > 0) {
        chosen_k = cfg.k;
        if (static_cast<std::size_t>(chosen_k) > fm.n_rows()) throw DataError("fixed k exceeds number of rows");
        res.selection.k_min = res.selection.k_max = chosen_k;
        res.selection.chosen_k = chosen_k;
    } else {
        int k_max = std::min<int>(cfg.k_max, static_cast<int>(fm.n_rows()));
        res.selection = select_k(fm.data, cfg.k_min, k_max, cfg.cluster_seed, nullptr, cfg.lloyd_max_iter, 1e-9,
                                 cfg.kmeans_restarts);
        chosen_k = res.selection.chosen_k;
    }

    res.model = fit_kmeans(fm.data, chosen_k, mix_seed(cfg.cluster_seed, static_cast<std::uint64_t>(chosen_k)),
                           cfg.kmeans_restarts, cfg.lloyd_max_iter);
    if (cfg.k > 0) res.selection.dunn_scores = {dunn_index(fm.data, res.model)};
    res.labels = res.model.assignments;
    return res;
}

inline void write_stage2(const Stage2Result& res, const PipelineConfig& cfg) {
    const std::string dir = cfg.out_dir + "/stage2";
    detail::ensure_dir(dir);
    nlohmann::json clusters = cluster_model_to_json(res.model);
    clusters["features"] = res.feature_names;
    write_file(dir + "/clusters.json", clusters.dump(2) + "\n");
    write_file(dir + "/labels.csv", assignments_csv(res.model));
    std::string scan = "k,dunn\n";
    for (std::size_t i = 0; i < res.selection.dunn_scores.size(); ++i) {
        scan += std::to_string(res.selection.k_min + static_cast<int>(i));
        scan += ',';
        scan += format_double(res.selection.dunn_scores[i]);
        scan += '\n';
    }
    write_file(dir + "/dunn_scan.csv", scan);
}

inline Stage2Result run_stage2(const PipelineConfig& cfg, const Dag& dag) {
    CategoricalTable table = load_csv(cfg.input_path);
    Stage2Result res = run_stage2_on(table, dag, cfg);
    write_stage2(res, cfg);
    return res;
}

// ---- stage 3: DSID training + demographic table ---------------------------

namespace detail {

// Heuristic two-head baseline: shared ReLU trunk, separate softmax heads for
// the two raw demographic targets, loss = mean of the two cross-entropies.
// Reported accuracy is the average of the two head accuracies on test data.
struct TwoHeadOutcome {
    double accuracy_head1 = 0.0;
    double accuracy_head2 = 0.0;
    double average_accuracy = 0.0;
};

inline TwoHeadOutcome train_two_head_baseline(const Matrix& Xtr, const std::vector<int>& y1tr,
                                              const std::vector<int>& y2tr, const Matrix& Xval,
                                              const std::vector<int>& y1val, const std::vector<int>& y2val,
                                              const Matrix& Xtest, const std::vector<int>& y1test,
                                              const std::vector<int>& y2test,
                                              const std::vector<std::size_t>& hidden, std::size_t k1, std::size_t k2,
                                              const TrainConfig& cfg) {
    cfg.validate();
    if (Xtr.rows == 0) throw DataError("baseline: empty training set");

    // trunk + both heads packed as one parameter list for Adam
    std::vector<Matrix> W;
    std::vector<std::vector<double>> b;
    std::vector<std::size_t> dims;
    dims.push_back(Xtr.cols);
    for (std::size_t h : hidden) dims.push_back(h);
    SplitMix64 rng(mix_seed(cfg.seed, 0xba5e));
    auto glorot = [&](std::size_t rows, std::size_t cols) {
        Matrix w(rows, cols);
        const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
        for (auto& x : w.data) x = (2.0 * rng.next_double() - 1.0) * limit;
        return w;
    };
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
        W.push_back(glorot(dims[i + 1], dims[i]));
        b.emplace_back(dims[i + 1], 0.0);
    }
    Matrix h1_W = glorot(k1, dims.back());
    std::vector<double> h1_b(k1, 0.0);
    Matrix h2_W = glorot(k2, dims.back());
    std::vector<double> h2_b(k2, 0.0);

    std::size_t n_params = h1_W.data.size() + h1_b.size() + h2_W.data.size() + h2_b.size();
    for (std::size_t l = 0; l < W.size(); ++l) n_params += W[l].data.size() + b[l].size();
    AdamState adam(n_params);

    auto trunk_forward = [&](const double* x, std::vector<std::vector<double>>& acts,
                             std::vector<std::vector<double>>& pres) {
        std::vector<double> a(x, x + dims[0]);
        acts.clear();
        pres.clear();
        acts.push_back(a);
        for (std::size_t l = 0; l < W.size(); ++l) {
            std::vector<double> z;
            affine(W[l], b[l], a, z);
            pres.push_back(z);
            for (auto& v : z) v = v > 0.0 ? v : 0.0;
            a = std::move(z);
            acts.push_back(a);
        }
        return a;
    };

    auto head_probs = [&](const Matrix& hw, const std::vector<double>& hb, const std::vector<double>& h) {
        std::vector<double> z;
        affine(hw, hb, h, z);
        softmax_inplace(z);
        return z;
    };

    auto eval = [&](const Matrix& X, const std::vector<int>& y1, const std::vector<int>& y2) {
        double loss_sum = 0.0;
        std::size_t c1 = 0, c2 = 0;
        std::vector<std::vector<double>> acts, pres;
        for (std::size_t r = 0; r < X.rows; ++r) {
            auto h = trunk_forward(X.row(r), acts, pres);
            auto p1 = head_probs(h1_W, h1_b, h);
            auto p2 = head_probs(h2_W, h2_b, h);
            loss_sum -= 0.5 * (clamped_log(p1[static_cast<std::size_t>(y1[r])]) +
                               clamped_log(p2[static_cast<std::size_t>(y2[r])]));
            std::size_t a1 = 0, a2 = 0;
            for (std::size_t i = 1; i < p1.size(); ++i)
                if (p1[i] > p1[a1]) a1 = i;
            for (std::size_t i = 1; i < p2.size(); ++i)
                if (p2[i] > p2[a2]) a2 = i;
            c1 += a1 == static_cast<std::size_t>(y1[r]) ? 1u : 0u;
            c2 += a2 == static_cast<std::size_t>(y2[r]) ? 1u : 0u;
        }
        struct {
            double loss, acc1, acc2;
        } out{X.rows ? loss_sum / static_cast<double>(X.rows) : 0.0,
              X.rows ? static_cast<double>(c1) / static_cast<double>(X.rows) : 0.0,
              X.rows ? static_cast<double>(c2) / static_cast<double>(X.rows) : 0.0};
        return out;
    };

    std::vector<Matrix> dW(W.size());
    std::vector<std::vector<double>> db(W.size());
    Matrix dh1_W(k1, dims.back()), dh2_W(k2, dims.back());
    std::vector<double> dh1_b(k1), dh2_b(k2);

    std::vector<std::size_t> perm(Xtr.rows);
    for (std::size_t i = 0; i < Xtr.rows; ++i) perm[i] = i;

    auto snapshot = std::tuple{W, b, h1_W, h1_b, h2_W, h2_b};
    double best_val = std::numeric_limits<double>::infinity();
    std::size_t bad = 0;
    bool stopped_early = false;

    std::vector<std::vector<double>> acts, pres;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        SplitMix64 erng(mix_seed(cfg.seed, epoch));
        erng.shuffle(perm);
        for (std::size_t start = 0; start < Xtr.rows; start += cfg.batch_size) {
            const std::size_t end = std::min(Xtr.rows, start + cfg.batch_size);
            const double scale = 0.5 / static_cast<double>(end - start);
            for (std::size_t l = 0; l < W.size(); ++l) {
                dW[l] = Matrix(W[l].rows, W[l].cols);
                db[l].assign(b[l].size(), 0.0);
            }
            std::fill(dh1_W.data.begin(), dh1_W.data.end(), 0.0);
            std::fill(dh2_W.data.begin(), dh2_W.data.end(), 0.0);
            std::fill(dh1_b.begin(), dh1_b.end(), 0.0);
            std::fill(dh2_b.begin(), dh2_b.end(), 0.0);

            for (std::size_t i = start; i < end; ++i) {
                const std::size_t r = perm[i];
                auto h = trunk_forward(Xtr.row(r), acts, pres);
                auto p1 = head_probs(h1_W, h1_b, h);
                auto p2 = head_probs(h2_W, h2_b, h);
                std::vector<double> dz1(p1.size()), dz2(p2.size());
                for (std::size_t s = 0; s < p1.size(); ++s) dz1[s] = p1[s] * scale;
                dz1[static_cast<std::size_t>(y1tr[r])] -= scale;
                for (std::size_t s = 0; s < p2.size(); ++s) dz2[s] = p2[s] * scale;
                dz2[static_cast<std::size_t>(y2tr[r])] -= scale;

                std::vector<double> dh(dims.back(), 0.0);
                for (std::size_t s = 0; s < k1; ++s) {
                    double* row = dh1_W.row(s);
                    const double* hw = h1_W.row(s);
                    for (std::size_t c = 0; c < h.size(); ++c) {
                        row[c] += dz1[s] * h[c];
                        dh[c] += hw[c] * dz1[s];
                    }
                    dh1_b[s] += dz1[s];
                }
                for (std::size_t s = 0; s < k2; ++s) {
                    double* row = dh2_W.row(s);
                    const double* hw = h2_W.row(s);
                    for (std::size_t c = 0; c < h.size(); ++c) {
                        row[c] += dz2[s] * h[c];
                        dh[c] += hw[c] * dz2[s];
                    }
                    dh2_b[s] += dz2[s];
                }

                std::vector<double> dz = std::move(dh);
                for (std::size_t l = W.size(); l-- > 0;) {
                    const auto& z = pres[l];
                    for (std::size_t s = 0; s < dz.size(); ++s)
                        if (z[s] <= 0.0) dz[s] = 0.0;
                    const auto& a_prev = acts[l];
                    for (std::size_t s = 0; s < W[l].rows; ++s) {
                        double* row = dW[l].row(s);
                        for (std::size_t c = 0; c < W[l].cols; ++c) row[c] += dz[s] * a_prev[c];
                        db[l][s] += dz[s];
                    }
                    if (l == 0) break;
                    std::vector<double> da(W[l].cols, 0.0);
                    for (std::size_t s = 0; s < W[l].rows; ++s) {
                        const double* row = W[l].row(s);
                        for (std::size_t c = 0; c < W[l].cols; ++c) da[c] += row[c] * dz[s];
                    }
                    dz = std::move(da);
                }
            }

            std::vector<double*> params;
            std::vector<const double*> grads;
            std::vector<std::size_t> sizes;
            for (std::size_t l = 0; l < W.size(); ++l) {
                params.push_back(W[l].data.data());
                grads.push_back(dW[l].data.data());
                sizes.push_back(W[l].data.size());
                params.push_back(b[l].data());
                grads.push_back(db[l].data());
                sizes.push_back(b[l].size());
            }
            params.push_back(h1_W.data.data());
            grads.push_back(dh1_W.data.data());
            sizes.push_back(h1_W.data.size());
            params.push_back(h1_b.data());
            grads.push_back(dh1_b.data());
            sizes.push_back(h1_b.size());
            params.push_back(h2_W.data.data());
            grads.push_back(dh2_W.data.data());
            sizes.push_back(h2_W.data.size());
            params.push_back(h2_b.data());
            grads.push_back(dh2_b.data());
            sizes.push_back(h2_b.size());
            adam.step(std::move(params), std::move(grads), std::move(sizes), cfg);
        }

        if (Xval.rows > 0 && cfg.early_stop_patience > 0) {
            auto val = eval(Xval, y1val, y2val);
            if (val.loss < best_val) {
                best_val = val.loss;
                snapshot = std::tuple{W, b, h1_W, h1_b, h2_W, h2_b};
                bad = 0;
            } else if (++bad >= cfg.early_stop_patience) {
                stopped_early = true;
                break;
            }
        }
    }
    if (stopped_early) std::tie(W, b, h1_W, h1_b, h2_W, h2_b) = snapshot;

    auto test = eval(Xtest, y1test, y2test);
    TwoHeadOutcome out;
    out.accuracy_head1 = test.acc1;
    out.accuracy_head2 = test.acc2;
    out.average_accuracy = 0.5 * (test.acc1 + test.acc2);
    return out;
}

}  // namespace detail

inline Stage3Result run_stage3_on(const CategoricalTable& table, const std::vector<int>& labels, int n_classes,
                                  const std::vector<std::string>& feature_names, const PipelineConfig& cfg) {
    if (labels.size() != table.n_rows()) throw DataError("stage 3: label count does not match rows");

    CategoricalTable sub = detail::project_columns(table, feature_names);
    FeatureMatrix fm = encode(sub, cfg.cluster_encoding);

    SplitResult parts = split(table, cfg.split);
    Matrix Xtr = detail::rows_subset(fm.data, parts.train_rows);
    Matrix Xval = detail::rows_subset(fm.data, parts.val_rows);
    Matrix Xtest = detail::rows_subset(fm.data, parts.test_rows);
    auto ytr = detail::values_subset(labels, parts.train_rows);
    auto yval = detail::values_subset(labels, parts.val_rows);
    auto ytest = detail::values_subset(labels, parts.test_rows);

    std::vector<std::size_t> dims;
    dims.push_back(fm.n_dims());
    for (std::size_t h : cfg.hidden_dims) dims.push_back(h);
    dims.push_back(static_cast<std::size_t>(n_classes));

    MlpModel model = init_model(dims, cfg.training.seed);
    auto [trained, history] = train(std::move(model), Xtr, ytr, Xval, yval, cfg.training);

    // test accuracy + prediction-score band
    std::size_t correct = 0;
    double score_min = 1.0, score_max = 0.0, score_sum = 0.0;
    for (std::size_t r = 0; r < Xtest.rows; ++r) {
        std::vector<double> x(Xtest.row(r), Xtest.row(r) + Xtest.cols);
        auto [cls, score] = predict_class(trained, x);
        if (cls == ytest[r]) ++correct;
        score_min = std::min(score_min, score);
        score_max = std::max(score_max, score);
        score_sum += score;
    }
    const double test_acc = Xtest.rows ? static_cast<double>(correct) / static_cast<double>(Xtest.rows) : 0.0;

    // demographic table over the full dataset: categories from the target
    // variables, first target as the outer key
    std::vector<std::size_t> target_idx;
    for (const auto& name : cfg.targets) target_idx.push_back(table.var_index(name));
    std::vector<std::string> categories = {""};
    for (std::size_t tv : target_idx) {
        std::vector<std::string> next;
        for (const auto& prefix : categories)
            for (const auto& state : table.states[tv])
                next.push_back(prefix.empty() ? state : prefix + " " + state);
        categories = std::move(next);
    }
    std::vector<int> category_per_row(table.n_rows());
    for (std::size_t r = 0; r < table.n_rows(); ++r) {
        int idx = 0;
        for (std::size_t tv : target_idx) idx = idx * table.cardinality(tv) + table.at(r, tv);
        category_per_row[r] = idx;
    }

    Stage3Result res;
    res.model = std::move(trained);
    res.history = std::move(history);
    res.demographics = fit_demographic_table(labels, category_per_row, n_classes, categories);

    res.report["test_accuracy"] = test_acc;
    res.report["n_test"] = Xtest.rows;
    res.report["score_min"] = Xtest.rows ? score_min : 0.0;
    res.report["score_max"] = Xtest.rows ? score_max : 0.0;
    res.report["score_mean"] = Xtest.rows ? score_sum / static_cast<double>(Xtest.rows) : 0.0;
    res.report["stopped_epoch"] = res.history.stopped_epoch;

    if (cfg.heuristic_baseline) {
        if (cfg.targets.size() < 2) throw ConfigError("baseline needs two demographic targets");
        std::size_t tv1 = table.var_index(cfg.targets[0]);
        std::size_t tv2 = table.var_index(cfg.targets[1]);
        std::vector<int> y1(table.n_rows()), y2(table.n_rows());
        for (std::size_t r = 0; r < table.n_rows(); ++r) {
            y1[r] = table.at(r, tv1);
            y2[r] = table.at(r, tv2);
        }
        auto outcome = detail::train_two_head_baseline(
            Xtr, detail::values_subset(y1, parts.train_rows), detail::values_subset(y2, parts.train_rows), Xval,
            detail::values_subset(y1, parts.val_rows), detail::values_subset(y2, parts.val_rows), Xtest,
            detail::values_subset(y1, parts.test_rows), detail::values_subset(y2, parts.test_rows), cfg.hidden_dims,
            static_cast<std::size_t>(table.cardinality(tv1)), static_cast<std::size_t>(table.cardinality(tv2)),
            cfg.training);
        res.report["baseline_avg_accuracy"] = outcome.average_accuracy;
        res.report["baseline_head_accuracy"] = {outcome.accuracy_head1, outcome.accuracy_head2};
    }
    return res;
}

inline void write_stage3(const Stage3Result& res, const FeatureSchema& schema, const PipelineConfig& cfg) {
    const std::string dir = cfg.out_dir + "/stage3";
    detail::ensure_dir(dir);
    nlohmann::json model = model_to_json(res.model);
    model["feature_schema"] = {{"variables", schema.variables},
                               {"states", schema.states},
                               {"encoding", schema.encoding == Encoding::one_hot ? "one_hot" : "integer"}};
    model["classes"] = res.demographics.k;
    write_file(dir + "/model.json", model.dump(2) + "\n");
    write_file(dir + "/history.csv", history_csv(res.history));
    write_file(dir + "/demographics.csv", demographic_table_csv(res.demographics));
    write_file(dir + "/demographics.json", demographic_table_to_json(res.demographics).dump(2) + "\n");
    write_file(dir + "/report.json", res.report.dump(2) + "\n");
}

inline Stage3Result run_stage3(const PipelineConfig& cfg, const std::vector<int>& labels, int n_classes,
                               const std::vector<std::string>& feature_names) {
    CategoricalTable table = load_csv(cfg.input_path);
    Stage3Result res = run_stage3_on(table, labels, n_classes, feature_names, cfg);
    FeatureSchema schema;
    schema.variables = feature_names;
    CategoricalTable sub = detail::project_columns(table, feature_names);
    schema.states = sub.states;
    schema.encoding = cfg.cluster_encoding;
    write_stage3(res, schema, cfg);
    return res;
}

struct PipelineResult {
    Stage1Result stage1;
    Stage2Result stage2;
    Stage3Result stage3;
};

inline PipelineResult run_all(const PipelineConfig& cfg) {
    cfg.validate();
    CategoricalTable table = load_csv(cfg.input_path);
    PipelineResult res;
    res.stage1 = run_stage1_on(table, cfg);
    write_stage1(res.stage1, cfg);
    res.stage2 = run_stage2_on(table, res.stage1.scored.dag, cfg);
    write_stage2(res.stage2, cfg);
    res.stage3 = run_stage3_on(table, res.stage2.labels, res.stage2.model.k, res.stage2.feature_names, cfg);
    FeatureSchema schema;
    schema.variables = res.stage2.feature_names;
    CategoricalTable sub = detail::project_columns(table, res.stage2.feature_names);
    schema.states = sub.states;
    schema.encoding = cfg.cluster_encoding;
    write_stage3(res.stage3, schema, cfg);
    return res;
}

}  // namespace cpdforge
